"""Samplers for the spectrum of G_sigma = -d^2/dx^2 + sigma b' on [0, 1] and of the stochastic Airy operator.

Two unrelated routes to the eigenvalues of G_sigma:

* ``discretize``: finite differences on the noise grid, solved by Sturm bisection.
* ``riccati``: count blow-ups of p = psi'/psi, p' = -lam - p^2 + sigma b', started
  at p(0) = +inf; the count is #{eigenvalues <= lam}.

The noise is treated as a piecewise-constant rate within each grid cell, so on one
quenched path both routes see the same potential and the Riccati count is an
exact, monotone function of lam.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import pi, sqrt

import numba
import numpy as np

from .errors import ConfigError, DomainError, IntegrationError
from .operators import build_gsigma, build_sao
from .randsrc import NoisePath, RngStream, brownian_path
from .tridiag_eig import eigen_extreme

POLE_MAX = 1e6


@dataclass(frozen=True)
class StepPolicy:
    """How riccati_count integrates the flow.

    ``exact`` propagates (psi, psi') through each noise cell in closed form.
    ``adaptive`` is Euler stepping on p with dt = min(cell, theta / (1 + |p|)),
    a blow-up recorded when p < -p_max, followed by a restart at +p_max after a
    transit time of 2 / p_max.
    """

    kind: str = "exact"
    theta: float = 0.1
    p_max: float = POLE_MAX
    max_steps: int = 50_000_000

    def __post_init__(self):
        if self.kind not in ("exact", "adaptive"):
            raise ConfigError(f"unknown step policy {self.kind!r}")
        if not (self.theta > 0 and self.p_max > 0 and self.max_steps > 0):
            raise ConfigError("step policy parameters must be positive")


@dataclass(frozen=True)
class RiccatiOutcome:
    lam: float
    blowups: int
    terminal_p: float  # +inf marks a pole exactly at x = 1
    steps_taken: int


@dataclass
class ContinuumSpectrumSample:
    sigma: float
    lambdas: np.ndarray
    method: str
    noise_id: dict
    cross_check: np.ndarray | None = None
    consistent: bool | None = None
    extra: dict = field(default_factory=dict)


@numba.njit(cache=True)
def _riccati_exact(lam, sigma, incr, h):
    # state (u, v) = (psi, psi'), psi(0) = 0, psi'(0) = 1; zeros of psi in (0, 1] are the blow-ups
    u = 0.0
    v = 1.0
    count = 0
    for j in range(incr.size):
        c = lam - sigma * incr[j] / h
        if c > 0.0:
            k = sqrt(c)
            th0 = np.arctan2(k * u, v)
            th1 = th0 + k * h
            count += int(np.floor(th1 / pi) - np.floor(th0 / pi))
            u1 = np.sin(th1) / k
            v1 = np.cos(th1)
        else:
            if c < 0.0:
                kap = sqrt(-c)
                ch = np.cosh(kap * h)
                sh = np.sinh(kap * h)
                u1 = u * ch + v * sh / kap
                v1 = u * kap * sh + v * ch
            else:
                u1 = u + v * h
                v1 = v
            if (u > 0.0 and u1 <= 0.0) or (u < 0.0 and u1 >= 0.0):
                count += 1
        r = sqrt(u1 * u1 + v1 * v1)
        u = u1 / r
        v = v1 / r
    return count, u, v


@numba.njit(cache=True)
def _riccati_adaptive(lam, sigma, incr, h, theta, p_max, max_steps):
    p = p_max
    count = 0
    steps = 0
    cells = incr.size
    t = 0.0
    end = cells * h
    while t < end:
        j = min(int(t / h), cells - 1)
        rate = sigma * incr[j] / h
        cell_end = (j + 1) * h
        dt = min(h, theta / (1.0 + abs(p)), cell_end - t)
        if dt <= 0.0:
            dt = min(h, theta / (1.0 + abs(p)))
        p = p + (rate - lam - p * p) * dt
        t += dt
        steps += 1
        if p < -p_max:
            count += 1
            t += 2.0 / p_max
            p = p_max
        if steps >= max_steps:
            return count, p, steps, False
    return count, p, steps, True


def _check_noise(noise: NoisePath):
    if abs(noise.span - 1.0) > 1e-12:
        raise ConfigError(f"noise must cover [0, 1], got span {noise.span}")


def riccati_count(lam: float, sigma: float, noise: NoisePath, policy: StepPolicy | None = None) -> RiccatiOutcome:
    """Blow-ups to -inf on [0, 1] of p' = -lam - p^2 + sigma b', p(0) = +inf."""
    _check_noise(noise)
    policy = policy or StepPolicy()
    incr = np.ascontiguousarray(noise.increments())
    if policy.kind == "exact":
        count, u, v = _riccati_exact(float(lam), float(sigma), incr, noise.grid_step)
        terminal = np.inf if u == 0.0 else v / u
        return RiccatiOutcome(float(lam), int(count), float(terminal), incr.size)
    count, p, steps, done = _riccati_adaptive(float(lam), float(sigma), incr, noise.grid_step,
                                              policy.theta, policy.p_max, policy.max_steps)
    if not done:
        raise IntegrationError(f"adaptive Riccati stepping exceeded {policy.max_steps} steps",
                               {"lam": lam, "blowups_so_far": int(count), "p": float(p), "steps": int(steps)})
    return RiccatiOutcome(float(lam), int(count), float(p), int(steps))


@numba.njit(cache=True)
def _riccati_eigs(k, sigma, incr, h, tol):
    out = np.empty(k)
    for j in range(k):
        target = j + 1
        lo = -50.0
        while _riccati_exact(lo, sigma, incr, h)[0] >= target:
            lo = 2.0 * lo
        hi = (j + 1) ** 2 * pi * pi + 50.0
        while _riccati_exact(hi, sigma, incr, h)[0] < target:
            hi = 2.0 * hi
        if j > 0 and out[j - 1] > lo:
            lo = out[j - 1]
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if _riccati_exact(mid, sigma, incr, h)[0] >= target:
                hi = mid
            else:
                lo = mid
        out[j] = 0.5 * (lo + hi)
    return out


def riccati_eigenvalues(sigma: float, k: int, noise: NoisePath, tol: float = 1e-8) -> np.ndarray:
    """Lowest k eigenvalues by bisection on the (monotone) exact Riccati count."""
    _check_noise(noise)
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    return _riccati_eigs(int(k), float(sigma), np.ascontiguousarray(noise.increments()), noise.grid_step, tol)


def discretized_eigenvalues(sigma: float, k: int, noise: NoisePath, tol: float = 1e-7) -> np.ndarray:
    """Lowest k eigenvalues of the finite-difference G_sigma on the noise grid."""
    _check_noise(noise)
    return eigen_extreme(build_gsigma(sigma, noise), k, "smallest", tol)


def g_sigma_eigen_sample(sigma: float, k: int, method: str, stream: RngStream, m: int = 8192,
                         noise: NoisePath | None = None, riccati_cells: int | None = None,
                         agree_tol: float = 0.1) -> ContinuumSpectrumSample:
    """One quenched sample of Lambda_0 < ... < Lambda_{k-1}.

    ``method`` is ``discretize``, ``riccati`` or ``both``. With ``both`` the
    discretized values are returned and the Riccati values are kept as a cross
    check; ``consistent`` is False if any pair differs by more than ``agree_tol``.
    The Riccati route runs on a noise grid of ``riccati_cells`` cells (default m).
    """
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    if method not in ("discretize", "riccati", "both"):
        raise ConfigError(f"unknown method {method!r}")
    if noise is None:
        noise = brownian_path(1.0, 1.0 / m, stream)
    noise_id = {**stream.record(), "cells": noise.cells}
    rnoise = noise
    if riccati_cells is not None and riccati_cells != noise.cells:
        if method == "both":
            raise ConfigError("method 'both' compares the routes on one shared noise grid")
        rnoise = brownian_path(1.0, 1.0 / riccati_cells, stream)
        noise_id["riccati_cells"] = riccati_cells
    if method == "riccati":
        return ContinuumSpectrumSample(sigma, riccati_eigenvalues(sigma, k, rnoise), "riccati", noise_id)
    disc = discretized_eigenvalues(sigma, k, noise)
    if method == "discretize":
        return ContinuumSpectrumSample(sigma, disc, "discretize", noise_id)
    ric = riccati_eigenvalues(sigma, k, noise)
    ok = bool(np.all(np.abs(disc - ric) <= agree_tol))
    return ContinuumSpectrumSample(sigma, disc, "discretize", noise_id, cross_check=ric, consistent=ok)


def sao_eigen_sample(beta: float, k: int, L: float, m: int, stream: RngStream | None,
                     zero_noise: bool = False, tol: float = 1e-7) -> np.ndarray:
    """Lowest k eigenvalues of the discretized stochastic Airy operator on (0, L]."""
    if zero_noise:
        noise = None
    else:
        if stream is None:
            raise ConfigError("a stream is required unless zero_noise=True")
        size = int(np.floor(L * m + 1e-9))
        noise = brownian_path(size / m, 1.0 / m, stream)
    return eigen_extreme(build_sao(beta, L, m, noise), k, "smallest", tol)


@dataclass(frozen=True)
class TailEstimate:
    sigma: float
    a: float
    side: str
    estimate: float
    stderr: float
    successes: int
    replicas: int
    ci_high: float
    low_information: bool


@numba.njit(cache=True)
def _tail_counts(lams, sigma, incr_block, h, right):
    hits = np.zeros(lams.size, dtype=np.int64)
    for r in range(incr_block.shape[0]):
        row = incr_block[r]
        for i in range(lams.size):
            c = _riccati_exact(lams[i], sigma, row, h)[0]
            if right:
                if c >= 1:
                    hits[i] += 1
            elif c == 0:
                hits[i] += 1
    return hits


TAIL_BLOCK = 1024


def _tail_lambdas(a_grid, side):
    if side not in ("right", "left"):
        raise ConfigError(f"side must be 'right' or 'left', got {side!r}")
    a_grid = np.atleast_1d(np.asarray(a_grid, dtype=float))
    return a_grid, (-a_grid if side == "right" else a_grid.copy())


def tail_block_hits(sigma: float, a_grid, side: str, block: int, replicas: int, stream: RngStream,
                    cells: int = 1024) -> np.ndarray:
    """Tail hits at every a for replica block ``block`` (paths block*TAIL_BLOCK onward) of a run of ``replicas``."""
    a_grid, lams = _tail_lambdas(a_grid, side)
    start = block * TAIL_BLOCK
    size = min(TAIL_BLOCK, replicas - start)
    if size <= 0:
        raise ConfigError(f"block {block} is empty for {replicas} replicas")
    h = 1.0 / cells
    incr = sqrt(h) * stream.split(block).generator().standard_normal((size, cells))
    return _tail_counts(lams, float(sigma), incr, h, side == "right")


def tail_blocks(replicas: int) -> int:
    return -(-replicas // TAIL_BLOCK)


def tail_estimates(sigma: float, a_grid, side: str, hits, replicas: int) -> list[TailEstimate]:
    """Binomial estimates from hit counts; zero hits gives a flagged rule-of-three upper bound."""
    a_grid, _ = _tail_lambdas(a_grid, side)
    out = []
    for a, s in zip(a_grid, np.asarray(hits)):
        p = s / replicas
        se = sqrt(p * (1.0 - p) / replicas)
        low = s == 0
        ci_high = 3.0 / replicas if low else min(1.0, p + 3.0 * se)
        out.append(TailEstimate(float(sigma), float(a), side, float(p), float(se), int(s), int(replicas),
                                float(ci_high), bool(low)))
    return out


def rso_tail_curve(sigma: float, a_grid, side: str, replicas: int, stream: RngStream,
                   cells: int = 1024) -> list[TailEstimate]:
    """Tail probabilities of RSO = -Lambda_0 at every a, on one shared set of noise paths.

    right: P(RSO > a) = P(Lambda_0 < -a), i.e. riccati_count(-a) >= 1.
    left:  P(RSO < -a) = P(Lambda_0 > a), i.e. riccati_count(a) == 0.
    """
    a_grid, _ = _tail_lambdas(a_grid, side)
    if replicas < 100:
        raise ConfigError(f"need at least 100 replicas, got {replicas}")
    hits = sum(tail_block_hits(sigma, a_grid, side, b, replicas, stream, cells) for b in range(tail_blocks(replicas)))
    return tail_estimates(sigma, a_grid, side, hits, replicas)


def rso_tail_probability(sigma: float, a: float, side: str, replicas: int, stream: RngStream,
                         cells: int = 1024) -> TailEstimate:
    """Monte Carlo tail probability of RSO_sigma; zero hits gives a flagged rule-of-three bound."""
    return rso_tail_curve(sigma, [a], side, replicas, stream, cells)[0]
