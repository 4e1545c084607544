"""Theta series against Monte Carlo bridge confinement over a range of T."""

from dataclasses import dataclass, field

from _config import parse
from edgescale.feynman_kac import theta_check
from edgescale.randsrc import new_stream


@dataclass
class Config:
    """Sum_j exp(-pi^2 j^2 T / 2) against (2 pi T)^{-1/2} int P(bridge x -> x stays in [0, 1]) dx."""
    T: list = field(default_factory=lambda: [0.25, 0.5, 1.0, 2.0, 5.0])
    replicas: int = 100_000
    x_grid: int = 32
    bridge_cells: int = 2048
    seed: int = 4


def main():
    cfg = parse(Config)
    root = new_stream(cfg.seed)
    print(f"{'T':>6} {'series':>14} {'monte carlo':>14} {'stderr':>10} {'z':>7}")
    for j, T in enumerate(cfg.T):
        lhs, rhs, se = theta_check(T, cfg.replicas, root.split(j), cfg.x_grid, cfg.bridge_cells)
        print(f"{T:>6} {lhs:>14.8g} {rhs:>14.8g} {se:>10.2e} {(rhs - lhs) / se:>+7.2f}")


if __name__ == "__main__":
    main()
