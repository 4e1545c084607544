"""Symmetric tridiagonal operators built from potential draws."""

from __future__ import annotations

from dataclasses import dataclass
from math import sqrt

import numpy as np

from .errors import ConfigError
from .randsrc import NoisePath, PotentialSpec

LABELS = ("hn", "hn_beta", "hbar", "sao", "gsigma")


@dataclass(frozen=True)
class TridiagonalMatrix:
    diag: np.ndarray
    offdiag: np.ndarray
    label: str = "hn"

    def __post_init__(self):
        if self.label not in LABELS:
            raise ConfigError(f"unknown operator label {self.label!r}")
        if self.diag.ndim != 1 or self.offdiag.shape != (max(self.diag.size - 1, 0),):
            raise ConfigError(f"inconsistent shapes diag={self.diag.shape} offdiag={self.offdiag.shape}")

    @property
    def n(self) -> int:
        return self.diag.size

    def gershgorin(self) -> tuple[float, float]:
        radius = np.zeros(self.n)
        radius[:-1] += np.abs(self.offdiag)
        radius[1:] += np.abs(self.offdiag)
        return float(np.min(self.diag - radius)), float(np.max(self.diag + radius))

    def norm_bound(self) -> float:
        lo, hi = self.gershgorin()
        return max(abs(lo), abs(hi))

    def shifted(self, c: float) -> "TridiagonalMatrix":
        return TridiagonalMatrix(self.diag + c, self.offdiag, self.label)

    def leading(self, k: int) -> "TridiagonalMatrix":
        return TridiagonalMatrix(self.diag[:k].copy(), self.offdiag[: k - 1].copy(), self.label)

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)


@dataclass(frozen=True)
class OperatorConfig:
    n: int
    spec: PotentialSpec
    beta: float = 2.0
    m: int | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if not self.beta > 0:
            raise ConfigError(f"beta must be positive, got {self.beta}")
        if self.m is not None and not (1 <= self.m <= self.n):
            raise ConfigError(f"need 1 <= m <= n, got m={self.m}, n={self.n}")

    def scaling_index(self) -> int:
        """m_n, defaulting to ceil(n^{1/3}) computed in integers."""
        if self.m is not None:
            return self.m
        m = max(1, int(round(self.n ** (1.0 / 3.0))))
        while m**3 < self.n:
            m += 1
        while m > 1 and (m - 1) ** 3 >= self.n:
            m -= 1
        return m


def _check_draws(config: OperatorConfig, draws) -> np.ndarray:
    draws = np.asarray(draws, dtype=float)
    if draws.shape != (config.n,):
        raise ConfigError(f"expected {config.n} draws, got shape {draws.shape}")
    return draws


def build_hn(config: OperatorConfig, draws) -> TridiagonalMatrix:
    draws = _check_draws(config, draws)
    n = config.n
    diag = config.spec.sigma * draws / float(n) ** config.spec.alpha
    return TridiagonalMatrix(diag, np.ones(n - 1), "hn")


def build_hbar(config: OperatorConfig, draws) -> TridiagonalMatrix:
    """-n^2 (H_n - 2I); the edge of H_n becomes the bottom of this spectrum."""
    if config.spec.alpha != 1.5:
        raise ConfigError(f"hbar is defined for alpha = 3/2, got {config.spec.alpha}")
    hn = build_hn(config, draws)
    n2 = float(config.n) ** 2
    return TridiagonalMatrix(-n2 * (hn.diag - 2.0), -n2 * hn.offdiag, "hbar")


def build_hn_beta(config: OperatorConfig, draws) -> TridiagonalMatrix:
    """Shifted-mean model: diag[l] = (2/sqrt(beta)) a(l) / m^{3/2} - l / m^3, l = 1..n."""
    draws = _check_draws(config, draws)
    m = float(config.scaling_index())
    ell = np.arange(1, config.n + 1, dtype=float)
    diag = (2.0 / sqrt(config.beta)) * draws / m**1.5 - ell / m**3
    return TridiagonalMatrix(diag, np.ones(config.n - 1), "hn_beta")


def build_sao(beta: float, L: float, m: int, noise: NoisePath | None) -> TridiagonalMatrix:
    """Finite-difference stochastic Airy operator on (0, L] with mesh 1/m.

    ``noise=None`` gives the deterministic Airy operator -d^2/dx^2 + x.
    """
    if not (beta > 0 and L > 0 and m >= 1):
        raise ConfigError(f"need beta > 0, L > 0, m >= 1; got {beta}, {L}, {m}")
    size = int(np.floor(L * m + 1e-9))
    if size < 1:
        raise ConfigError("SAO grid is empty")
    x = np.arange(1, size + 1, dtype=float) / m
    diag = 2.0 * m * m + x
    if noise is not None:
        if abs(noise.grid_step * m - 1.0) > 1e-9 or noise.cells < size:
            raise ConfigError(f"noise must have step 1/m and at least {size} cells")
        diag = diag + (2.0 / sqrt(beta)) * m * noise.increments()[:size]
    return TridiagonalMatrix(diag, np.full(size - 1, -float(m) * m), "sao")


def build_gsigma(sigma: float, noise: NoisePath) -> TridiagonalMatrix:
    """Finite-difference -d^2/dx^2 + sigma b' on [0, 1], Dirichlet, mesh = noise grid step.

    Interior node j = 1..m-1 carries the increment of b over the cell to its left.
    """
    m = noise.cells
    if abs(noise.span - 1.0) > 1e-12 or m < 2:
        raise ConfigError("G_sigma discretization needs a noise path on [0, 1] with >= 2 cells")
    m2 = float(m) * m
    diag = 2.0 * m2 + sigma * m * noise.increments()[: m - 1]
    return TridiagonalMatrix(diag, np.full(m - 2, -m2), "gsigma")
