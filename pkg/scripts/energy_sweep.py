"""F2 of the unit square against pyramid depth, with increments, ratios and tail bounds (alpha = 1)."""
import argparse
import time

from vpyramid.covering import rectangle_covering
from vpyramid.energy import F2, tail_bound_square
from vpyramid.solution import build_solution


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alpha", type=float, default=1.0)
    ap.add_argument("--max-depth", type=int, default=10)
    args = ap.parse_args()
    prev = prev_inc = None
    print("depth,F2,increment,ratio,tail,seconds")
    for K in range(2, args.max_depth + 1):
        t0 = time.perf_counter()
        v = float(F2(build_solution(rectangle_covering(1, 1), K), args.alpha).sum())
        dt = time.perf_counter() - t0
        inc = None if prev is None else v - prev
        ratio = "" if inc is None or prev_inc is None else f"{prev_inc / inc:.6f}"
        print(f"{K},{v:.12g},{'' if inc is None else f'{inc:.6g}'},{ratio},"
              f"{tail_bound_square(1, args.alpha, K):.6g},{dt:.3f}")
        prev, prev_inc = v, inc


if __name__ == "__main__":
    main()
