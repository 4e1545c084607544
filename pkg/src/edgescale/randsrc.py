"""Deterministic random sources: counter-based streams, potential laws, path samplers.

Every sampler here is a pure function of its arguments and an :class:`RngStream`.
Streams are keyed Philox generators: the 128-bit key holds ``(root_seed,
stream_index)`` and the three high counter words hold up to three levels of
sub-stream indices, so replica ``i`` never depends on how many draws replica
``j`` consumed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import sqrt

import numba
import numpy as np

from .errors import ConfigError, DomainError

_U64 = (1 << 64) - 1
_MAX_SPLIT_DEPTH = 3

FAMILIES = ("gaussian", "rademacher", "uniform_sym", "shifted_bernoulli")

# shifted_bernoulli: standardized Bernoulli(1/4); takes sqrt(3) w.p. 1/4, -1/sqrt(3) w.p. 3/4
_SB_P = 0.25
_SB_HI = (1.0 - _SB_P) / sqrt(_SB_P * (1.0 - _SB_P))
_SB_LO = -_SB_P / sqrt(_SB_P * (1.0 - _SB_P))


@dataclass(frozen=True)
class RngStream:
    root_seed: int
    stream_index: int = 0
    path: tuple[int, ...] = ()

    def __post_init__(self):
        if not (0 <= self.root_seed <= _U64):
            raise ConfigError(f"root_seed must be a 64-bit unsigned integer, got {self.root_seed}")
        if not (0 <= self.stream_index <= _U64):
            raise ConfigError(f"stream_index must be a 64-bit unsigned integer, got {self.stream_index}")
        if len(self.path) > _MAX_SPLIT_DEPTH or any(not (0 <= p <= _U64) for p in self.path):
            raise ConfigError(f"invalid sub-stream path {self.path}")

    def split(self, index: int) -> "RngStream":
        """Child stream ``index`` of this stream (at most three nesting levels)."""
        if len(self.path) >= _MAX_SPLIT_DEPTH:
            raise ConfigError("sub-stream nesting deeper than three levels is not supported")
        return RngStream(self.root_seed, self.stream_index, self.path + (int(index),))

    def generator(self) -> np.random.Generator:
        # path entries are shifted by one so that split(0) differs from the parent
        words = [0, 0, 0, 0]
        for level, idx in enumerate(self.path):
            words[3 - level] = idx + 1
        key = self.root_seed | (self.stream_index << 64)
        return np.random.Generator(np.random.Philox(key=key, counter=words))

    def record(self) -> dict:
        return {"root_seed": self.root_seed, "stream_index": self.stream_index, "path": list(self.path)}


def new_stream(root_seed: int, stream_index: int = 0) -> RngStream:
    return RngStream(int(root_seed), int(stream_index))


@dataclass(frozen=True)
class PotentialSpec:
    family: str = "gaussian"
    sigma: float = 1.0
    alpha: float = 1.5

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown potential family {self.family!r}; expected one of {FAMILIES}")
        if not self.sigma >= 0:
            raise ConfigError(f"sigma must be nonnegative, got {self.sigma}")
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")


def _draw_family(family: str, n: int, gen: np.random.Generator) -> np.ndarray:
    if family == "gaussian":
        return gen.standard_normal(n)
    if family == "rademacher":
        return np.where(gen.random(n) < 0.5, -1.0, 1.0)
    if family == "uniform_sym":
        return gen.uniform(-sqrt(3.0), sqrt(3.0), n)
    if family == "shifted_bernoulli":
        return np.where(gen.random(n) < _SB_P, _SB_HI, _SB_LO)
    raise ConfigError(f"unknown potential family {family!r}")


def sample_potential(spec: PotentialSpec, n: int, stream: RngStream) -> np.ndarray:
    """n i.i.d. mean-0 variance-1 draws from ``spec.family``."""
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    return _draw_family(spec.family, int(n), stream.generator())


def coarse_grain_draws(draws: np.ndarray, factor: int) -> np.ndarray:
    """Block sums of ``factor`` consecutive draws, rescaled to unit variance.

    Partial-sum noise of the result coincides with that of ``draws`` at the coarse
    grid points. Gaussian draws stay exactly Gaussian.
    """
    draws = np.asarray(draws, dtype=float)
    if factor < 1 or draws.size % factor:
        raise ConfigError(f"factor {factor} must divide the number of draws {draws.size}")
    return draws.reshape(-1, factor).sum(axis=1) / sqrt(factor)


def grid_cells(span: float, grid_step: float) -> int:
    """Number of grid cells of size ``grid_step`` in ``[0, span]``; must be exact."""
    if not (span > 0 and grid_step > 0):
        raise ConfigError(f"span and grid_step must be positive, got {span}, {grid_step}")
    cells = int(round(span / grid_step))
    if cells < 1 or abs(cells * grid_step - span) > 1e-9 * span:
        raise ConfigError(f"grid_step {grid_step} does not divide span {span}")
    return cells


@dataclass(frozen=True)
class NoisePath:
    """A quenched path W on ``[0, span]`` sampled at ``grid_step``; ``values[0] == 0``."""

    grid_step: float
    values: np.ndarray
    origin: str = "brownian"
    span: float = 1.0

    def __post_init__(self):
        cells = grid_cells(self.span, self.grid_step)
        if len(self.values) != cells + 1:
            raise ConfigError(f"noise path needs {cells + 1} values, got {len(self.values)}")
        if self.values[0] != 0.0:
            raise ConfigError("noise path must start at 0")

    @property
    def cells(self) -> int:
        return len(self.values) - 1

    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    def negated(self) -> "NoisePath":
        return NoisePath(self.grid_step, -self.values, self.origin, self.span)

    def __call__(self, a):
        """Piecewise-linear interpolation of W at levels ``a``."""
        grid = np.linspace(0.0, self.span, self.cells + 1)
        return np.interp(a, grid, self.values)


def brownian_path(T: float, grid_step: float, stream: RngStream) -> NoisePath:
    cells = grid_cells(T, grid_step)
    step = T / cells
    incr = sqrt(step) * stream.generator().standard_normal(cells)
    values = np.concatenate(([0.0], np.cumsum(incr)))
    return NoisePath(step, values, "brownian", float(T))


def partial_sum_noise(draws: np.ndarray, n: int) -> NoisePath:
    """W(k/n) = n^{-1/2} * (draws[0] + ... + draws[k-1])."""
    draws = np.asarray(draws, dtype=float)
    if draws.ndim != 1 or draws.size != n:
        raise ConfigError(f"expected {n} draws, got shape {draws.shape}")
    values = np.concatenate(([0.0], np.cumsum(draws) / sqrt(n)))
    return NoisePath(1.0 / n, values, "partial_sum", 1.0)


@dataclass(frozen=True)
class BridgePath:
    n: int
    steps: int
    positions: np.ndarray
    x_start: int
    x_end: int
    confined: bool = field(default=False)


@numba.njit(cache=True)
def _free_bridge_steps(steps, x_start, x_end, u, out):
    z = x_start
    out[0] = z
    for k in range(steps):
        r = steps - k
        p_up = (r + (x_end - z)) / (2.0 * r)
        z = z + 1 if u[k] < p_up else z - 1
        out[k + 1] = z


@numba.njit(cache=True)
def _confined_log_counts(n, steps, x_end):
    # logc[r, z]: log #confined walks z -> x_end in r steps
    logc = np.full((steps + 1, n + 1), -np.inf)
    logc[0, x_end] = 0.0
    for r in range(1, steps + 1):
        for z in range(n + 1):
            a = logc[r - 1, z - 1] if z >= 1 else -np.inf
            b = logc[r - 1, z + 1] if z + 1 <= n else -np.inf
            hi = max(a, b)
            if hi > -np.inf:
                logc[r, z] = hi + np.log(np.exp(a - hi) + np.exp(b - hi))
    return logc


@numba.njit(cache=True)
def _confined_bridge_steps(n, steps, x_start, logc, u, out):
    z = x_start
    out[0] = z
    for k in range(steps):
        r = steps - k
        up = logc[r - 1, z + 1] if z + 1 <= n else -np.inf
        dn = logc[r - 1, z - 1] if z >= 1 else -np.inf
        p_up = 1.0 / (1.0 + np.exp(dn - up)) if up > -np.inf else 0.0
        z = z + 1 if u[k] < p_up else z - 1
        out[k + 1] = z


def rw_bridge(n: int, steps: int, x_start: int, x_end: int, confined: bool, stream: RngStream) -> BridgePath:
    """Uniformly random +-1 walk bridge from ``x_start`` to ``x_end`` in ``steps`` steps.

    Exact sequential conditioning: binomial path counts when unconfined, a
    log-domain dynamic program over ``{0..n}`` when confined.
    """
    if n < 1 or steps < 0:
        raise ConfigError(f"need n >= 1 and steps >= 0, got n={n}, steps={steps}")
    gap = abs(x_end - x_start)
    if gap > steps or (steps - gap) % 2:
        raise DomainError(f"endpoints {x_start}->{x_end} unreachable in {steps} steps (parity/distance)")
    out = np.empty(steps + 1, dtype=np.int64)
    u = stream.generator().random(steps)
    if confined:
        if not (0 <= x_start <= n and 0 <= x_end <= n):
            raise DomainError(f"confined endpoints must lie in [0, {n}]")
        logc = _confined_log_counts(n, steps, x_end)
        if not np.isfinite(logc[steps, x_start]):
            raise DomainError("no confined path joins the endpoints")
        _confined_bridge_steps(n, steps, x_start, logc, u, out)
    else:
        _free_bridge_steps(steps, x_start, x_end, u, out)
    return BridgePath(n, steps, out, x_start, x_end, confined)


def brownian_bridge(x: float, y: float, T: float, grid_step: float, stream: RngStream) -> np.ndarray:
    """Standard Brownian bridge from x (t=0) to y (t=T) on a grid of step ``grid_step``."""
    cells = grid_cells(T, grid_step)
    z = stream.generator().standard_normal(cells)
    return bridge_from_normals(x, y, T, z[None, :])[0]


def bridge_from_normals(x, y, T: float, z: np.ndarray) -> np.ndarray:
    """Bridges from a (replicas, cells) block of standard normals; endpoints broadcast."""
    reps, cells = z.shape
    dt = T / cells
    walk = np.zeros((reps, cells + 1))
    np.cumsum(z, axis=1, out=walk[:, 1:])
    walk *= sqrt(dt)
    frac = np.arange(cells + 1) / cells
    x = np.broadcast_to(np.asarray(x, dtype=float), (reps,))[:, None]
    y = np.broadcast_to(np.asarray(y, dtype=float), (reps,))[:, None]
    out = x + walk - frac * walk[:, -1:] + frac * (y - x)
    out[:, 0] = x[:, 0]
    out[:, -1] = y[:, 0]
    return out
