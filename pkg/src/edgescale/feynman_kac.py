"""Feynman-Kac estimators for the kernel and trace of U(T) = exp(-(T/2) G), plus local times.

Weights follow K(x, y; T) = p_T(x - y) E[1{bridge stays in [0, 1]} exp((sigma/2) int L_a dW(a))]
with p_T the free Gaussian density. The local-time integral against the quenched
path W is evaluated exactly for the polygonal interpolation of each bridge:
on a segment from a to b of duration dt it contributes dt (W(b) - W(a)) / (b - a),
which equals sum_levels L_level dW_level for the polygon's occupation density.

With weight exp(+(sigma/2) int L dW) the semigroup generator is -d^2/dx^2 - sigma W',
i.e. G_sigma driven by b = -W. Comparisons against a G_sigma spectrum therefore
build the operator from ``noise.negated()``.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import erfc, exp, lgamma, pi, sqrt
from typing import NamedTuple

import numba
import numpy as np

from .edge_stats import laplace_sum, rescale_edge, to_eta
from .errors import ConfigError, DomainError
from .operators import OperatorConfig, build_gsigma, build_hn
from .randsrc import BridgePath, NoisePath, PotentialSpec, RngStream, partial_sum_noise, sample_potential
from .tridiag_eig import eigen_all, eigen_extreme

BRIDGE_CELLS = 2048
# rough noise makes the polygonal local-time integral biased upward at coarse bridge
# grids (about +0.8% at 2048 cells, T = 1); the sigma > 0 consistency checks refine
FINE_BRIDGE_CELLS = 8192
KERNEL_BLOCK = 1024
THETA_TOL = 1e-16


@dataclass(frozen=True)
class LocalTimeProfile:
    level_step: float
    levels: np.ndarray
    values: np.ndarray
    total_time: float

    def occupation_gap(self) -> float:
        return abs(self.level_step * float(np.sum(self.values)) - self.total_time)

    def occupation_ok(self) -> bool:
        tol = self.level_step * float(np.max(self.values, initial=0.0)) + 1e-12 * self.total_time
        return self.occupation_gap() <= tol


@numba.njit(cache=True)
def _polygon_occupation(pos, dt, h, kmin, nbins):
    # bins centred on levels k*h: [(k - 1/2) h, (k + 1/2) h)
    occ = np.zeros(nbins)
    for i in range(pos.size - 1):
        a = pos[i]
        b = pos[i + 1]
        lo = min(a, b)
        hi = max(a, b)
        k0 = int(np.floor(lo / h + 0.5))
        if hi == lo:
            occ[k0 - kmin] += dt
            continue
        k1 = int(np.floor(hi / h + 0.5))
        rate = dt / (hi - lo)
        for k in range(k0, k1 + 1):
            left = max(lo, (k - 0.5) * h)
            right = min(hi, (k + 0.5) * h)
            if right > left:
                occ[k - kmin] += (right - left) * rate
    return occ


def walk_local_time(path: BridgePath) -> LocalTimeProfile:
    """Visit counts / n at levels z / n; total time (steps + 1) / n^2."""
    pos = np.asarray(path.positions, dtype=np.int64)
    if pos.size == 0:
        raise DomainError("empty path")
    lo = int(pos.min())
    counts = np.bincount(pos - lo)
    n = path.n
    levels = (lo + np.arange(counts.size)) / n
    return LocalTimeProfile(1.0 / n, levels, counts / n, pos.size / n**2)


def bridge_local_time(positions, T: float, level_step: float) -> LocalTimeProfile:
    """Occupation density of the polygon through ``positions`` (equally spaced on [0, T])."""
    pos = np.ascontiguousarray(positions, dtype=float)
    if pos.size == 0:
        raise DomainError("empty path")
    if not level_step > 0:
        raise DomainError(f"level_step must be positive, got {level_step}")
    if not T > 0:
        raise DomainError(f"T must be positive, got {T}")
    kmin = int(np.floor(pos.min() / level_step + 0.5))
    kmax = int(np.floor(pos.max() / level_step + 0.5))
    if pos.size == 1:
        occ = np.zeros(kmax - kmin + 1)
        occ[0] = T
    else:
        occ = _polygon_occupation(pos, T / (pos.size - 1), level_step, kmin, kmax - kmin + 1)
    levels = (kmin + np.arange(occ.size)) * level_step
    return LocalTimeProfile(level_step, levels, occ / level_step, float(T))


def local_time_profile(path, level_step: float | None = None, T: float | None = None) -> LocalTimeProfile:
    """Walk paths give exact visit counts (level_step must be 1/n); sampled bridges need T."""
    if level_step is not None and not level_step > 0:
        raise DomainError(f"level_step must be positive, got {level_step}")
    if isinstance(path, BridgePath):
        if level_step is not None and abs(level_step * path.n - 1.0) > 1e-12:
            raise DomainError(f"walk local time lives on the lattice 1/{path.n}, got level_step {level_step}")
        return walk_local_time(path)
    if level_step is None or T is None:
        raise ConfigError("sampled bridges need level_step and T")
    return bridge_local_time(path, T, level_step)


@numba.njit(cache=True)
def _interp_w(w, inv_step, a):
    # value and slope of the piecewise-linear W at level a
    cells = w.size - 1
    u = a * inv_step
    j = int(u)
    if j > cells - 1:
        j = cells - 1
    d = w[j + 1] - w[j]
    return w[j] + (u - j) * d, d * inv_step


@numba.njit(cache=True)
def _bridge_weights(x, y, T, reps, cells, seed, w, wstep, sigma, correct):
    # sequential bridge sampling: a path that leaves [0, 1] stops drawing normals
    np.random.seed(seed)
    dt = T / cells
    drift = np.empty(cells)
    scale = np.empty(cells)
    for k in range(cells):
        rem = T - k * dt
        drift[k] = dt / rem
        scale[k] = sqrt(max(dt * (rem - dt) / rem, 0.0))
    inv = 1.0 / wstep
    far = 20.0 * dt  # beyond this, both reflection terms are below e^-40
    out = np.zeros(reps)
    surv_out = np.zeros(reps)
    for r in range(reps):
        a = x
        wa, slope = _interp_w(w, inv, a)
        surv = 1.0
        integ = 0.0
        alive = True
        for k in range(cells):
            if k == cells - 1:
                b = y
            else:
                b = a + (y - a) * drift[k] + scale[k] * np.random.standard_normal()
            if b < 0.0 or b > 1.0:
                alive = False
                break
            if correct:
                f = 1.0
                if a * b < far:
                    f -= exp(-2.0 * a * b / dt)
                if (1.0 - a) * (1.0 - b) < far:
                    f -= exp(-2.0 * (1.0 - a) * (1.0 - b) / dt)
                if f <= 0.0:
                    alive = False
                    break
                surv *= f
            wb, slope_b = _interp_w(w, inv, b)
            if b != a:
                integ += dt * (wb - wa) / (b - a)
            else:
                integ += dt * slope
            a = b
            wa = wb
            slope = slope_b
        if alive:
            out[r] = surv * exp(0.5 * sigma * integ)
            surv_out[r] = surv
    return out, surv_out


def _check_unit_noise(noise: NoisePath):
    if abs(noise.span - 1.0) > 1e-12:
        raise ConfigError(f"noise must cover [0, 1], got span {noise.span}")


def zero_noise() -> NoisePath:
    return NoisePath(1.0, np.zeros(2), "zero", 1.0)


def _weights(x, y, T, sigma, noise, replicas, stream, bridge_cells, crossing_correction, offset=0):
    """Feynman-Kac weights and the matching sigma = 0 (survival-only) weights of the same bridges."""
    w = np.ascontiguousarray(noise.values, dtype=float)
    out = np.empty(replicas)
    surv = np.empty(replicas)
    for b, start in enumerate(range(0, replicas, KERNEL_BLOCK)):
        size = min(KERNEL_BLOCK, replicas - start)
        seed = int(stream.split(offset + b).generator().integers(0, 2**32))
        out[start:start + size], surv[start:start + size] = _bridge_weights(
            float(x), float(y), float(T), size, int(bridge_cells), seed, w, noise.grid_step, float(sigma),
            bool(crossing_correction))
    return out, surv


def dirichlet_heat_kernel(x: float, y: float, T: float, images: int = 8) -> float:
    """Heat kernel of (1/2) d^2/dx^2 on [0, 1] with zero boundary values, by the method of images."""
    k = np.arange(-images, images + 1)
    g = 1.0 / sqrt(2.0 * pi * T)
    return float(g * np.sum(np.exp(-((x - y + 2 * k) ** 2) / (2 * T)) - np.exp(-((x + y + 2 * k) ** 2) / (2 * T))))


def _point_estimate(f, g, target):
    """Mean and stderr of f, optionally with g as a control variate of known mean ``target``."""
    R = f.size
    if target is None:
        return float(np.mean(f)), float(np.var(f, ddof=1) / R)
    vg = np.var(g, ddof=1)
    c = float(np.cov(f, g, ddof=1)[0, 1] / vg) if vg > 0 else 0.0
    resid = f - c * g
    return float(np.mean(f) - c * (np.mean(g) - target)), float(np.var(resid, ddof=1) / R)


def gaussian_factor(x: float, y: float, T: float) -> float:
    return exp(-((x - y) ** 2) / (2.0 * T)) / sqrt(2.0 * pi * T)


@dataclass(frozen=True)
class KernelEstimate:
    x: float
    y: float
    T: float
    value: float
    stderr: float
    replicas: int
    noise_id: dict


def _check_args(T, sigma, replicas, bridge_cells):
    if not T > 0:
        raise DomainError(f"T must be positive, got {T}")
    if not sigma >= 0:
        raise DomainError(f"sigma must be nonnegative, got {sigma}")
    if replicas < 2:
        raise ConfigError(f"need at least 2 replicas, got {replicas}")
    if bridge_cells < 1:
        raise ConfigError(f"bridge_cells must be >= 1, got {bridge_cells}")


def kernel_estimate(x: float, y: float, T: float, sigma: float, noise: NoisePath, replicas: int,
                    stream: RngStream, bridge_cells: int = BRIDGE_CELLS, crossing_correction: bool = True,
                    control_variate: bool = False) -> KernelEstimate:
    """Monte Carlo K(x, y; T) over bridges on a grid of T / bridge_cells.

    Confinement is checked at every grid point; with ``crossing_correction`` each
    segment also carries the probability that the Brownian bridge between two
    grid points does not leave [0, 1] (single-reflection approximation per wall).
    With ``control_variate`` the survival-only weight of each bridge, whose mean
    is the Dirichlet heat kernel, is used as a regression control.
    """
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise DomainError(f"endpoints must lie in [0, 1], got x={x}, y={y}")
    _check_args(T, sigma, replicas, bridge_cells)
    _check_unit_noise(noise)
    f, surv = _weights(x, y, T, sigma, noise, replicas, stream, bridge_cells, crossing_correction)
    g = gaussian_factor(x, y, T)
    target = dirichlet_heat_kernel(x, y, T) / g if control_variate else None
    mean, var = _point_estimate(f, surv, target)
    noise_id = {**stream.record(), "noise_origin": noise.origin, "noise_cells": noise.cells}
    return KernelEstimate(float(x), float(y), float(T), g * mean, g * sqrt(var), int(replicas), noise_id)


class TraceEstimate(NamedTuple):
    value: float
    stderr: float


def _split_counts(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def trace_estimate(T: float, sigma: float, noise: NoisePath, x_grid: int, replicas: int, stream: RngStream,
                   bridge_cells: int = BRIDGE_CELLS, crossing_correction: bool = True,
                   control_variate: bool = False) -> TraceEstimate:
    """Midpoint-rule integral of K(x, x; T) over ``x_grid`` points; ``replicas`` bridges in total."""
    _check_args(T, sigma, replicas, bridge_cells)
    _check_unit_noise(noise)
    if x_grid < 1 or replicas < 2 * x_grid:
        raise ConfigError(f"need x_grid >= 1 and at least 2 replicas per point, got {x_grid}, {replicas}")
    xs = (np.arange(x_grid) + 0.5) / x_grid
    counts = _split_counts(replicas, x_grid)
    blocks = -(-max(counts) // KERNEL_BLOCK)
    g = gaussian_factor(0.0, 0.0, T)
    means = np.empty(x_grid)
    vars_ = np.empty(x_grid)
    for i, (x, c) in enumerate(zip(xs, counts)):
        f, surv = _weights(x, x, T, sigma, noise, c, stream, bridge_cells, crossing_correction, offset=i * blocks)
        target = dirichlet_heat_kernel(x, x, T) / g if control_variate else None
        means[i], vars_[i] = _point_estimate(f, surv, target)
    return TraceEstimate(g * float(np.mean(means)), g * float(np.sqrt(np.sum(vars_))) / x_grid)


def theta_series(T: float, tol: float = THETA_TOL) -> float:
    """sum_{j>=1} exp(-pi^2 j^2 T / 2), stopped once a term drops below tol * (partial sum)."""
    if not T > 0:
        raise DomainError(f"T must be positive, got {T}")
    total = 0.0
    j = 1
    while True:
        term = exp(-0.5 * pi * pi * j * j * T)
        total += term
        # remaining terms are bounded by a geometric series with ratio < term
        if term <= tol * total or term == 0.0:
            return total
        j += 1


class ThetaCheck(NamedTuple):
    lhs: float
    rhs: float
    stderr: float


def theta_check(T: float, replicas: int, stream: RngStream, x_grid: int = 32,
                bridge_cells: int = BRIDGE_CELLS) -> ThetaCheck:
    """Series against the Monte Carlo confinement integral at sigma = 0.

    The reported stderr is floored at (2 pi T)^{-1/2} / replicas, the weight of a
    single surviving path, so a run with no survivors still carries a usable CI.
    """
    lhs = theta_series(T)
    rhs, se = trace_estimate(T, 0.0, zero_noise(), x_grid, replicas, stream, bridge_cells)
    floor = gaussian_factor(0.0, 0.0, T) / replicas
    return ThetaCheck(lhs, rhs, max(se, floor))


def lambda_batch(eigs, n: int, seed: dict | None = None):
    return rescale_edge(eigs, n, 2.0, 2.0, 1.0, "hn", seed)


@dataclass(frozen=True)
class CouplingReport:
    n: int
    sigma: float
    T: float
    eigen_sum: float
    trace: float
    stderr: float
    discrepancy: float
    seed: dict

    @property
    def z(self) -> float:
        return self.discrepancy / self.stderr if self.stderr > 0 else np.inf


def pathwise_coupling_check(n: int, sigma: float, T: float, spec: PotentialSpec, replicas: int, stream: RngStream,
                            draws=None, x_grid: int = 32, bridge_cells: int = FINE_BRIDGE_CELLS,
                            control_variate: bool = True) -> CouplingReport:
    """Eigen-sum of H_n against the Feynman-Kac trace on W = partial sums of the same draws.

    Draws come from ``stream.split(0)`` unless given; bridges always from
    ``stream.split(1)``, so two sizes run on one stream share their bridges.
    """
    if n < 500:
        raise ConfigError(f"pathwise coupling needs n >= 500, got {n}")
    if spec.alpha != 1.5:
        raise ConfigError(f"the partial-sum path matches H_n only for alpha = 3/2, got {spec.alpha}")
    spec = PotentialSpec(spec.family, sigma, spec.alpha)
    draws = sample_potential(spec, n, stream.split(0)) if draws is None else np.asarray(draws, dtype=float)
    eigs = eigen_all(build_hn(OperatorConfig(n, spec), draws))
    esum = laplace_sum(to_eta(lambda_batch(eigs, n)).values, T)
    tr, se = trace_estimate(T, sigma, partial_sum_noise(draws, n), x_grid, replicas, stream.split(1), bridge_cells,
                            control_variate=control_variate)
    return CouplingReport(n, float(sigma), float(T), esum, tr, se, esum - tr, stream.record())


@dataclass(frozen=True)
class SemigroupReport:
    T: float
    trace_2T: float
    stderr: float
    spectral: float
    lambdas: np.ndarray

    @property
    def z(self) -> float:
        return (self.trace_2T - self.spectral) / self.stderr if self.stderr > 0 else np.inf


def semigroup_check(sigma: float, T: float, noise: NoisePath, replicas: int, stream: RngStream, k: int = 10,
                    x_grid: int = 32, bridge_cells: int = FINE_BRIDGE_CELLS,
                    control_variate: bool = True) -> SemigroupReport:
    """trace U(2T) by Feynman-Kac against sum_i exp(-T Lambda_i) from the discretized G_sigma."""
    _check_unit_noise(noise)
    lambdas = eigen_extreme(build_gsigma(sigma, noise.negated()), k, "smallest", 1e-7)
    spectral = laplace_sum(-lambdas, 2.0 * T)
    tr, se = trace_estimate(2.0 * T, sigma, noise, x_grid, replicas, stream, bridge_cells,
                            control_variate=control_variate)
    return SemigroupReport(float(T), tr, se, spectral, lambdas)


def matrix_power_trace(eigs, T: float, n: int) -> float:
    """Trace of (1/2)[(H/2)^N + (H/2)^(N-1)] with N = floor(T n^2), from the eigenvalues of H."""
    eigs = np.asarray(eigs, dtype=float)
    N = int(np.floor(T * n * n))
    if N < 1:
        raise DomainError(f"T n^2 must be >= 1, got {T * n * n}")
    half = eigs / 2.0
    mag = np.abs(half)
    with np.errstate(divide="ignore"):
        logm = np.log(mag)
    sgn = np.sign(half)
    terms = 0.5 * (sgn**N * np.exp(N * logm) + sgn ** (N - 1) * np.exp((N - 1) * logm))
    return float(np.sum(terms))


@numba.njit(cache=True)
def _hypergeom_logpmf(k, pop, good, draws):
    bad = pop - good
    return (lgamma(good + 1.0) - lgamma(k + 1.0) - lgamma(good - k + 1.0)
            + lgamma(bad + 1.0) - lgamma(draws - k + 1.0) - lgamma(bad - draws + k + 1.0)
            - lgamma(pop + 1.0) + lgamma(draws + 1.0) + lgamma(pop - draws + 1.0))


@numba.njit(cache=True)
def _hypergeom_quantile(u, pop, good, draws):
    # smallest k with P(K <= k) >= u, K ~ hypergeometric(pop, good, draws)
    kmin = max(0, draws - (pop - good))
    kmax = min(draws, good)
    if kmin == kmax:
        return kmin
    k0 = int((draws + 1.0) * (good + 1.0) / (pop + 2.0))
    k0 = min(max(k0, kmin), kmax)
    bad = pop - good
    p0 = exp(_hypergeom_logpmf(k0, pop, good, draws))
    # F(k0) by summing down from the mode until terms vanish
    cdf = p0
    p = p0
    k = k0
    while k > kmin:
        p *= k * (bad - draws + k) / ((good - k + 1.0) * (draws - k + 1.0))
        k -= 1
        cdf += p
        if p < 1e-18 * cdf:
            break
    k = k0
    p = p0
    if u <= cdf:
        while k > kmin and cdf - p >= u:
            cdf -= p
            p *= k * (bad - draws + k) / ((good - k + 1.0) * (draws - k + 1.0))
            k -= 1
        return k
    while k < kmax and cdf < u:
        p *= (good - k) * (draws - k) / ((k + 1.0) * (bad - draws + k + 1.0))
        k += 1
        cdf += p
    return k


@numba.njit(cache=True)
def _dyadic_fill(walk, bm, z, n, i, j):
    stack = [(i, j)]
    while len(stack) > 0:
        a, b = stack.pop()
        L = b - a
        if L < 2:
            continue
        L1 = L // 2
        mid = a + L1
        zm = z[mid - 1]
        var = L1 * (L - L1) / L / (n * n)
        bm[mid] = bm[a] + (L1 / L) * (bm[b] - bm[a]) + sqrt(var) * zm
        u = 0.5 * erfc(-zm / sqrt(2.0))
        d = walk[b] - walk[a]
        ups = (L + d) // 2
        k = _hypergeom_quantile(u, L, ups, L1)
        walk[mid] = walk[a] + 2 * k - L1
        stack.append((a, mid))
        stack.append((mid, b))


def coupled_walk_bridge(n: int, steps: int, stream: RngStream) -> tuple[BridgePath, np.ndarray]:
    """A +-1 walk bridge 0 -> 0 and a Brownian bridge on [0, steps/n^2] coupled by dyadic quantile matching.

    Each midpoint of the bisection uses one standard normal: the Brownian bridge
    takes it directly, the walk takes the hypergeometric quantile of its normal
    CDF value. Both marginal laws are exact.
    """
    if steps < 2 or steps % 2:
        raise DomainError(f"a 0 -> 0 walk bridge needs an even number of steps >= 2, got {steps}")
    z = stream.generator().standard_normal(steps - 1)
    walk = np.zeros(steps + 1, dtype=np.int64)
    bm = np.zeros(steps + 1)
    _dyadic_fill(walk, bm, z, n, 0, steps)
    return BridgePath(n, steps, walk, 0, 0, False), bm


def local_time_gap(n: int, T: float, stream: RngStream) -> float:
    """sup over levels of |L(walk) - L(coupled bridge)| with bins of width 1/n centred on the walk lattice."""
    steps = int(round(T * n * n))
    steps += steps % 2
    walk, bm = coupled_walk_bridge(n, steps, stream)
    lw = walk_local_time(walk)
    lb = bridge_local_time(bm, steps / n**2, 1.0 / n)
    lo = min(lw.levels[0], lb.levels[0])
    hi = max(lw.levels[-1], lb.levels[-1])
    size = int(round((hi - lo) * n)) + 1
    a = np.zeros(size)
    b = np.zeros(size)
    ia = int(round((lw.levels[0] - lo) * n))
    ib = int(round((lb.levels[0] - lo) * n))
    a[ia:ia + lw.values.size] = lw.values
    b[ib:ib + lb.values.size] = lb.values
    return float(np.max(np.abs(a - b)))
