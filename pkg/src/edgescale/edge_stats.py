"""Edge rescaling, Laplace sums, KS distances, tail-exponent fits and batch I/O.

Sign convention: a batch built by :func:`rescale_edge` with the default
arguments holds Lambda-side values n^2 (2 - lambda), which are bottom-of-spectrum
values of G_sigma. The eta side used by Laplace sums is eta = -Lambda and is
obtained only through :func:`to_eta`.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError, FitError
from .randsrc import RngStream, new_stream

SIDES = ("lambda", "eta", "raw")


@dataclass(frozen=True)
class EdgeSampleBatch:
    values: np.ndarray  # (replicas,) or (replicas, k)
    n: int
    exponent_c: float
    ensemble_tag: str
    seed: dict = field(default_factory=dict)
    center: float = 2.0
    sign: float = 1.0
    side: str = "lambda"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if vals.ndim not in (1, 2) or vals.size == 0:
            raise ConfigError(f"batch values must be a nonempty 1-D or 2-D array, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise DomainError("batch values must be finite")
        if not self.ensemble_tag:
            raise ConfigError("ensemble_tag must be nonempty")
        if self.side not in SIDES:
            raise ConfigError(f"side must be one of {SIDES}, got {self.side!r}")
        if self.sign not in (1.0, -1.0):
            raise ConfigError(f"sign must be +1 or -1, got {self.sign}")

    def column(self, j: int = 0) -> np.ndarray:
        return self.values if self.values.ndim == 1 else self.values[:, j]


def rescale_edge(eigs, n: int, c: float = 2.0, center: float = 2.0, sign: float = 1.0,
                 ensemble_tag: str = "hn", seed: dict | None = None) -> EdgeSampleBatch:
    """values = sign * n^c * (center - eigs)."""
    eigs = np.asarray(eigs, dtype=float)
    if eigs.size == 0:
        raise DomainError("no eigenvalues to rescale")
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    values = sign * float(n) ** c * (center - eigs)
    side = "lambda" if (sign == 1.0 and center == 2.0 and c > 0) else "raw"
    return EdgeSampleBatch(values, int(n), float(c), ensemble_tag, dict(seed or {}), float(center), float(sign), side)


def inverse_rescale(batch: EdgeSampleBatch) -> np.ndarray:
    """Eigenvalues recovered from a batch produced by rescale_edge."""
    if batch.side == "eta":
        raise DomainError("invert the Lambda-side batch, not its eta view")
    return batch.center - batch.values / (batch.sign * float(batch.n) ** batch.exponent_c)


def to_eta(batch: EdgeSampleBatch) -> EdgeSampleBatch:
    """eta = -Lambda; the only place the sign flips."""
    if batch.side != "lambda":
        raise DomainError(f"eta view needs a Lambda-side batch, got side {batch.side!r}")
    return replace(batch, values=-batch.values, side="eta")


def log_laplace_sum(etas, T: float) -> float:
    if not T > 0:
        raise DomainError(f"T must be positive, got {T}")
    x = 0.5 * T * np.asarray(etas, dtype=float).ravel()
    if x.size == 0:
        return -math.inf
    shift = float(np.max(x))
    return shift + math.log(math.fsum(np.exp(x - shift)))


def laplace_sum(etas, T: float) -> float:
    """sum_i exp(T eta_i / 2), max-shifted only when a term would overflow."""
    if not T > 0:
        raise DomainError(f"T must be positive, got {T}")
    x = 0.5 * T * np.asarray(etas, dtype=float).ravel()
    if x.size == 0:
        return 0.0
    if np.max(x) < 700.0:
        return math.fsum(np.exp(x))
    return math.exp(log_laplace_sum(etas, T))  # OverflowError if the sum itself is not representable


def ks_distance(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise DomainError("both samples must be nonempty")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_critical(n_a: int, n_b: int, coef: float = 1.63) -> float:
    """Asymptotic two-sample KS critical value; coef 1.63 is the 1% level."""
    return coef * math.sqrt((n_a + n_b) / (n_a * n_b))


@dataclass(frozen=True)
class TailFit:
    exponent: float
    coefficient: float
    ci_low: float
    ci_high: float
    a_grid: np.ndarray
    intercept: float = 0.0
    monotone: bool = True

    def __post_init__(self):
        if not self.ci_low <= self.coefficient <= self.ci_high:
            raise FitError(f"inconsistent CI [{self.ci_low}, {self.ci_high}] around {self.coefficient}")


def tail_monotone(a_grid, probs) -> bool:
    """True when the tail probability does not increase along increasing a (-log p nondecreasing)."""
    a_grid = np.asarray(a_grid, dtype=float)
    probs = np.asarray(probs, dtype=float)
    order = np.argsort(a_grid, kind="stable")
    return bool(np.all(np.diff(probs[order]) <= 0.0))


def _wls(x, y, w):
    # y = coef * x + intercept, weights w
    X = np.column_stack([x, np.ones_like(x)])
    sw = np.sqrt(w)
    sol, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    return float(sol[0]), float(sol[1])


def _neglog_weights(p, replicas):
    if replicas is None:
        return np.ones_like(p)
    # delta-method variance of -log p_hat, floored so p_hat = 1 keeps a finite weight
    var = np.maximum((1.0 - p) / (p * replicas), 1.0 / replicas**2)
    return 1.0 / var


def tail_fit(a_grid, probs, exponent: float, replicas=None, bootstrap: int = 400,
             stream: RngStream | None = None, level: float = 0.95) -> TailFit:
    """Weighted least squares of -log p(a) = coefficient * a^exponent + intercept.

    With ``replicas`` (per point) the weights are binomial and the CI is a
    parametric bootstrap that redraws every point's success count; without it the
    fit is unweighted and the CI is the fit itself.
    """
    a_grid = np.asarray(a_grid, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if a_grid.shape != probs.shape or a_grid.ndim != 1:
        raise FitError("a_grid and probs must be matching 1-D arrays")
    if np.any((probs < 0) | (probs > 1)):
        raise FitError("probabilities must lie in [0, 1]")
    order = np.argsort(a_grid, kind="stable")
    a_grid, probs = a_grid[order], probs[order]
    keep = probs > 0
    if keep.sum() < 3:
        raise FitError(f"need >= 3 grid points with nonzero estimates, got {int(keep.sum())}")
    reps = None
    if replicas is not None:
        reps = np.broadcast_to(np.asarray(replicas, dtype=float), probs.shape)[order]
    x = a_grid[keep] ** exponent
    p = probs[keep]
    r = None if reps is None else reps[keep]
    coef, icept = _wls(x, -np.log(p), _neglog_weights(p, r))
    lo = hi = coef
    if r is not None and bootstrap > 0:
        gen = (stream or new_stream(0)).generator()
        draws = []
        for _ in range(bootstrap):
            pb = gen.binomial(r.astype(np.int64), p) / r
            if np.count_nonzero(pb) < 3:
                continue
            ok = pb > 0
            draws.append(_wls(x[ok], -np.log(pb[ok]), _neglog_weights(pb[ok], r[ok]))[0])
        if draws:
            tail = 0.5 * (1.0 - level)
            lo, hi = np.quantile(draws, [tail, 1.0 - tail])
            lo, hi = min(float(lo), coef), max(float(hi), coef)
    return TailFit(float(exponent), coef, float(lo), float(hi), a_grid, icept, tail_monotone(a_grid, probs))


def write_batch(batch: EdgeSampleBatch, path) -> tuple[Path, Path]:
    """CSV (header row, one replica per line, LF endings) plus a JSON sidecar."""
    path = Path(path)
    vals = batch.values if batch.values.ndim == 2 else batch.values[:, None]
    header = ["value"] if batch.values.ndim == 1 else [f"value_{j}" for j in range(vals.shape[1])]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in vals:
            w.writerow([repr(float(v)) for v in row])
    side = path.with_suffix(".json")
    meta = {"n": batch.n, "exponent_c": batch.exponent_c, "ensemble_tag": batch.ensemble_tag,
            "seed": batch.seed, "center": batch.center, "sign": batch.sign, "side": batch.side,
            "shape": list(batch.values.shape)}
    side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path, side


def read_batch(path) -> EdgeSampleBatch:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    vals = np.array([[float(v) for v in row] for row in rows[1:]], dtype=float).reshape(meta["shape"])
    return EdgeSampleBatch(vals, meta["n"], meta["exponent_c"], meta["ensemble_tag"], meta["seed"],
                           meta["center"], meta["sign"], meta["side"])

