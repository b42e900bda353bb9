"""Smallest per-label area of B(x, r) / r^2 over boundary points of (-2, 2)^2."""
import argparse
import math

import numpy as np

from vpyramid.covering import rectangle_covering
from vpyramid.solution import build_solution, density_profile


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    s = rng.uniform(0, 16, args.points)
    pts = [((2, u), (-u, 2), (-2, -u), (u, -2))[k] for k, u in zip((s // 4).astype(int), s % 4 - 2)]
    for r in (1 / 8, 1 / 16, 1 / 32, 1 / 64):
        depth = int(-math.log2(r)) + 4
        sol = build_solution(rectangle_covering(4, 4, origin=(-2, -2)), depth)
        worst = min(rep.min_area() / r ** 2 for p in pts for rep in density_profile(sol, p, [r]))
        print(f"r = 1/{round(1 / r)}, depth {depth}: min area / r^2 = {worst:.6f} (1/128 = {1 / 128:.6f})")


if __name__ == "__main__":
    main()
