"""Tail probabilities of RSO_sigma = -Lambda_0 and the fitted decay coefficients."""

import os
from dataclasses import dataclass, field

import numpy as np

from _config import parse
from edgescale.continuum import tail_block_hits, tail_blocks, tail_estimates
from edgescale.edge_stats import tail_fit
from edgescale.errors import FitError
from edgescale.parallel import replica_map
from edgescale.randsrc import new_stream


@dataclass
class Config:
    """Right and left tails on a grid of a, one shared set of noise paths per sigma and side."""
    sigmas: list = field(default_factory=lambda: [1.0, 2.0, 4.0])
    right_grid: list = field(default_factory=lambda: [-6.0, -4.0, -2.0, 0.0, 2.0, 4.0])
    left_grid: list = field(default_factory=lambda: [10.0, 12.0, 14.0, 16.0, 18.0])
    replicas: int = 100_000
    cells: int = 1024
    seed: int = 7
    workers: int = os.cpu_count() or 1


def block(b, sigma, grid, side, cfg, stream):
    return tail_block_hits(sigma, grid, side, b, cfg.replicas, stream, cfg.cells)


def main():
    cfg = parse(Config)
    for s, sigma in enumerate(cfg.sigmas):
        for side, grid, exponent in (("right", cfg.right_grid, 1.5), ("left", cfg.left_grid, 2.0)):
            stream = new_stream(cfg.seed, s).split(0 if side == "right" else 1)
            tasks = [(b, sigma, grid, side, cfg, stream) for b in range(tail_blocks(cfg.replicas))]
            hits = sum(replica_map(block, tasks, cfg.workers))
            ests = tail_estimates(sigma, grid, side, hits, cfg.replicas)
            print(f"sigma={sigma} {side}: " + ", ".join(f"a={e.a:g}: {e.estimate:.2e}" for e in ests))
            usable = [(e.a, e.estimate) for e in ests if e.a > 0]
            try:
                a, p = map(np.array, zip(*usable))
                fit = tail_fit(a, p, exponent, replicas=cfg.replicas)
                print(f"    fit -log p = {fit.coefficient:.3f} a^{exponent} + {fit.intercept:.3f}"
                      f"  CI [{fit.ci_low:.3f}, {fit.ci_high:.3f}]")
            except (FitError, ValueError) as exc:
                print(f"    no fit: {exc}")


if __name__ == "__main__":
    main()
