"""Monte-Carlo check of the analytic values and of local optimality.

    python3 scripts/mc_validation.py [--paths 200000] [--dt 1e-4] [--seed 2024]

Runs the threshold policy from x = b in both position states, then the eight
threshold perturbations under common random numbers.
"""
import argparse
import math
import time

from optipairs import ModelParams, PiecewiseValue, solve_policy
from optipairs.simulation import path_rewards


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=200_000)
    ap.add_argument("--dt", type=float, default=1e-4)
    ap.add_argument("--perturb-dt", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args()

    params = ModelParams()
    policy = solve_policy(params)
    pv = PiecewiseValue(policy)
    horizon = 60 / params.rho
    n = args.paths

    for i in (0, 1):
        t0 = time.perf_counter()
        r = path_rewards(policy, params.b, i, n, args.dt, horizon, args.seed)
        se = r.std(ddof=1) / math.sqrt(n)
        exact = pv.v(i, params.b)
        print(f"v{i}(b): mc {r.mean():.6f} +- {se:.6f}  analytic {exact:.6f}  "
              f"z={(r.mean() - exact) / se:+.2f}  ({time.perf_counter() - t0:.0f}s)")

    base = path_rewards(policy, params.b, 0, n, args.perturb_dt, horizon, args.seed)
    print(f"\noptimal policy at dt={args.perturb_dt}: {base.mean():.6f}")
    for name in ("x1", "x2"):
        for shift in (-0.03, -0.02, 0.02, 0.03):
            moved = policy.shifted(**{name: getattr(policy, name) + shift})
            r = path_rewards(moved, params.b, 0, n, args.perturb_dt, horizon, args.seed)
            diff = r - base
            print(f"{name}{shift:+.2f}: {r.mean():.6f}  paired diff {diff.mean():+.6f} "
                  f"+- {diff.std(ddof=1) / math.sqrt(n):.6f}")


if __name__ == "__main__":
    main()
