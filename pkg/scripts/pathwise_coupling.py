"""Eigenvalue Laplace sum of H_n against the Feynman-Kac trace on the same potential draws."""

import os
from dataclasses import dataclass, field

import numpy as np

from _config import parse
from edgescale.feynman_kac import pathwise_coupling_check
from edgescale.parallel import replica_map
from edgescale.randsrc import PotentialSpec, coarse_grain_draws, new_stream, sample_potential


@dataclass
class Config:
    """Discrepancy |sum_i exp(T eta_i / 2) - trace U(T)| as n grows, on coarse-grained shared draws."""
    sizes: list = field(default_factory=lambda: [500, 1000, 2000])
    sigma: float = 1.0
    T: float = 1.0
    realizations: int = 20
    replicas: int = 50_000
    seed: int = 5
    workers: int = os.cpu_count() or 1


def realization(r, cfg):
    stream = new_stream(cfg.seed).split(r)
    spec = PotentialSpec("gaussian", cfg.sigma, 1.5)
    top = max(cfg.sizes)
    fine = sample_potential(spec, top, stream.split(0))
    rows = []
    for n in cfg.sizes:
        rep = pathwise_coupling_check(n, cfg.sigma, cfg.T, spec, cfg.replicas, stream,
                                      draws=coarse_grain_draws(fine, top // n))
        rows.append((rep.eigen_sum, rep.trace, rep.stderr))
    return rows


def main():
    cfg = parse(Config)
    if any(max(cfg.sizes) % n for n in cfg.sizes):
        raise SystemExit("every size must divide the largest one")
    out = np.array(replica_map(realization, [(r, cfg) for r in range(cfg.realizations)], cfg.workers))
    for j, n in enumerate(cfg.sizes):
        disc = out[:, j, 0] - out[:, j, 1]
        z = disc / out[:, j, 2]
        print(f"n={n:>5}: median |discrepancy| {np.median(np.abs(disc)):.3e}  mean discrepancy {disc.mean():+.3e}"
              f"  median stderr {np.median(out[:, j, 2]):.2e}  max |z| {np.max(np.abs(z)):.2f}")


if __name__ == "__main__":
    main()
