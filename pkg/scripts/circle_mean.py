"""Weighted mean on the circle: lifting against gradient descent.

Runs the committed trap configuration, where gradient descent started at
angle pi stops in a local minimum, then a batch of random configurations.
"""

import argparse

import numpy as np

from mfdlift.geometry import Circle
from mfdlift.unlift import gradient_descent_mean, grid_mean_oracle, lifted_mean_demo, weighted_energy

TRAP_ANGLES = np.array([-1.266117, 1.974339, -2.564068, 0.62895, 1.436088])
TRAP_WEIGHTS = np.array([0.073895, 0.052071, 0.150899, 0.171646, 0.551489])


def compare(angles, weights, start=np.pi, labels=16, subgrid=8):
    """Energies above the grid optimum for lifting and for gradient descent."""
    pts = Circle.from_angle(angles)
    w = weights / weights.sum()
    theta, best = grid_mean_oracle(pts, w)
    z, diag = lifted_mean_demo(pts, w, n_labels=labels, subgrid=subgrid)
    gd = gradient_descent_mean(Circle(), pts, w, Circle.from_angle(start))
    return {
        "oracle_angle": theta,
        "lifted_angle": float(Circle.to_angle(z)),
        "descent_angle": float(Circle.to_angle(gd.point)),
        "lifted_excess": float(weighted_energy(Circle(), z, pts, w) - best),
        "descent_excess": float(weighted_energy(Circle(), gd.point, pts, w) - best),
        "gap": diag.gap,
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--configs", type=int, default=100)
    ap.add_argument("--points", type=int, default=10)
    ap.add_argument("--labels", type=int, default=16)
    ap.add_argument("--subgrid", type=int, default=8)
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args()

    r = compare(TRAP_ANGLES, TRAP_WEIGHTS, labels=args.labels, subgrid=args.subgrid)
    print("trap configuration")
    print(f"  oracle   angle {r['oracle_angle']:+.4f}")
    print(f"  lifted   angle {r['lifted_angle']:+.4f}  excess energy {r['lifted_excess']:.2e}  gap {r['gap']:.1e}")
    print(f"  descent  angle {r['descent_angle']:+.4f}  excess energy {r['descent_excess']:.2e}")

    rng = np.random.default_rng(args.seed)
    lifted, descent = [], []
    for _ in range(args.configs):
        res = compare(rng.uniform(-np.pi, np.pi, args.points), rng.dirichlet(np.ones(args.points)),
                      labels=args.labels, subgrid=args.subgrid)
        lifted.append(res["lifted_excess"])
        descent.append(res["descent_excess"])
    lifted, descent = np.array(lifted), np.array(descent)
    print(f"{args.configs} random configurations of {args.points} points")
    print(f"  lifted   worst excess {lifted.max():.2e}, median {np.median(lifted):.2e}")
    print(f"  descent  worst excess {descent.max():.2e}, stuck (> 1e-2) in {np.sum(descent > 1e-2)} cases")


if __name__ == "__main__":
    main()
