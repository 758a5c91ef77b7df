"""Non-tangential approach sweeps against the boundary-limit targets.

For a catalog trace on the sphere, walks interior sample ladders toward a
few panels and prints the distance-to-error table for the value and the
normal-derivative limits. The error should decay until the sample enters
the panel-sized resolution band.

Usage: python scripts/jump_sweep.py [--level 3] [--order 2] [--trace radial-square]
"""

import argparse

import numpy as np

from polypot import manufactured, sphere_mesh
from polypot.verify import jump_relation_sweep


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--level", type=int, default=3)
    parser.add_argument("--order", type=int, default=2, help="layer order m")
    parser.add_argument("--trace", default="radial-square", help="catalog solution supplying the density")
    parser.add_argument("--gamma", type=float, default=2.0, help="approach cone aperture")
    args = parser.parse_args()

    mesh = sphere_mesh(args.level)
    entry = manufactured(args.trace)
    density = entry.dirichlet_data(mesh)[0]

    for mode in ("value", "normal"):
        sweeps = jump_relation_sweep(
            mesh, density, gamma=args.gamma, order=args.order, mode=mode, panels=(0,)
        )
        sweep = sweeps[0]
        print(f"mode {mode}: panel {sweep.panel}, target {sweep.target:+.6e}, band {sweep.band:.3e}")
        for d, v, e in zip(sweep.distances, sweep.values, sweep.errors):
            marker = " (inside band)" if d < sweep.band else ""
            print(f"  dist {d:.4e}  value {v:+.6e}  err {e:.3e}{marker}")
        print()

    print("density stats: min %.3e max %.3e" % (np.min(density), np.max(density)))


if __name__ == "__main__":
    main()
