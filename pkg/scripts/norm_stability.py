"""Empirical stability of the maximal-function-to-data norm ratio.

Solves one Dirichlet and one Neumann family across refinement levels,
estimates the non-tangential maximal function of the solution (or its
gradient) on each mesh, and reports the ratio to the boundary-data norm.
A level-stable ratio is evidence for a refinement-independent constant in
the boundary-to-interior estimates; the constant itself is empirical.

Usage: python scripts/norm_stability.py [--levels 2:4]
"""

import argparse

from polypot import norm_stability_study


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--levels", default="2:4", help="inclusive refinement range lo:hi")
    parser.add_argument("--gamma", type=float, default=2.0, help="approach cone aperture")
    parser.add_argument("--threads", type=int, default=None)
    args = parser.parse_args()

    lo, hi = (int(v) for v in args.levels.split(":"))
    levels = tuple(range(lo, hi + 1))

    for kind in ("dirichlet", "neumann"):
        record = norm_stability_study(kind, levels=levels, gamma=args.gamma, threads=args.threads)
        print(f"{kind}: order {record.order}")
        for level, ratio in zip(record.levels, record.ratios):
            print(f"  level {level}: ratio {ratio:.5f}")
        print(f"  spread (max-min)/min = {record.spread:.3f}")
        print()


if __name__ == "__main__":
    main()
