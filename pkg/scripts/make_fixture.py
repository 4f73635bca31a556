"""Generate the synthetic two-leg price fixture used by the backtest tests.

Leg 2 follows a geometric random walk; leg 1 is leg 2 scaled by exp(z) where
z is an exact OU path, so the normalised spread mean-reverts.

    python scripts/make_fixture.py [--out data/synthetic] [--days 800] [--seed 7]
"""
import argparse
import math
from pathlib import Path

import numpy as np

from optipairs.calibration import PriceSeries, write_price_file
from optipairs.ou_kernel import ModelParams
from optipairs.simulation import simulate_path


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data/synthetic")
    ap.add_argument("--days", type=int, default=800)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    dt = 1.0 / 252
    z = simulate_path(ModelParams(), 0.0, dt, args.days - 1, seed=args.seed)
    rng = np.random.default_rng(args.seed)
    log_market = np.cumsum(0.0002 + 0.012 * rng.standard_normal(args.days))
    leg2 = 50.0 * np.exp(log_market)
    leg1 = 80.0 * np.exp(log_market + z)
    dates = np.busday_offset(np.datetime64("2001-01-02"), np.arange(args.days), roll="forward")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    # round to cents like real closes
    write_price_file(out / "leg1.csv", PriceSeries(dates, np.round(leg1, 2), "leg1"))
    write_price_file(out / "leg2.csv", PriceSeries(dates, np.round(leg2, 2), "leg2"))
    print(f"wrote {args.days} days to {out}/leg1.csv, leg2.csv "
          f"(z range {z.min():.3f}..{z.max():.3f}, stationary sd {0.56 / math.sqrt(2):.3f})")


if __name__ == "__main__":
    main()
