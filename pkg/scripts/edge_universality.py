"""Lambda_0 of H_n across potential families against the discretized G_sigma oracle."""

import os
from dataclasses import dataclass

import numpy as np

from _config import parse
from edgescale.continuum import discretized_eigenvalues
from edgescale.edge_stats import ks_critical, ks_distance, rescale_edge
from edgescale.operators import OperatorConfig, build_hn
from edgescale.parallel import replica_map
from edgescale.randsrc import FAMILIES, PotentialSpec, brownian_path, new_stream, sample_potential
from edgescale.tridiag_eig import eigen_extreme


@dataclass
class Config:
    """Edge universality of n^2 (2 - lambda_max) for H_n."""
    n: int = 2000
    sigma: float = 1.0
    replicas: int = 4000
    m: int = 8192
    seed: int = 301
    workers: int = os.cpu_count() or 1


def hn_top(i, family, cfg):
    spec = PotentialSpec(family, cfg.sigma, 1.5)
    draws = sample_potential(spec, cfg.n, new_stream(cfg.seed, FAMILIES.index(family) + 1).split(i))
    return eigen_extreme(build_hn(OperatorConfig(cfg.n, spec), draws), 1)[0]


def oracle(i, cfg):
    return discretized_eigenvalues(cfg.sigma, 1, brownian_path(1.0, 1.0 / cfg.m, new_stream(cfg.seed, 0).split(i)))[0]


def main():
    cfg = parse(Config)
    reference = np.array(replica_map(oracle, [(i, cfg) for i in range(cfg.replicas)], cfg.workers))
    crit = ks_critical(cfg.replicas, cfg.replicas)
    print(f"oracle: mean {reference.mean():.4f} sd {reference.std():.4f}  (1% KS critical value {crit:.4f})")
    for family in FAMILIES:
        tops = replica_map(hn_top, [(i, family, cfg) for i in range(cfg.replicas)], cfg.workers)
        lam = rescale_edge(np.array(tops), cfg.n, ensemble_tag=family).values
        print(f"{family:>18}: mean {lam.mean():.4f} sd {lam.std():.4f} KS vs oracle {ks_distance(lam, reference):.4f}")


if __name__ == "__main__":
    main()
