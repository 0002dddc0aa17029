#!/usr/bin/env python3
"""Generate synthetic stop-and-go trajectory recordings.

Writes a family of CSV datasets in which three vehicles ahead of the ego
replay the same random stop-and-go profile with a time advance per
position in the chain (the farther vehicle experiences each event
earlier, as a wave traveling upstream).

Usage:
    python scripts/make_demo_data.py --outdir data/demo
"""

import argparse
from pathlib import Path

from cccsim import stop_and_go_dataset, write_dataset


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--outdir", default="data/demo")
    ap.add_argument("--count", type=int, default=6, help="number of datasets")
    ap.add_argument("--duration", type=float, default=250.0, help="seconds")
    ap.add_argument("--dt", type=float, default=0.1)
    ap.add_argument("--vehicles", type=int, default=3)
    ap.add_argument("--lead-time", type=float, default=2.5,
                    help="time advance per vehicle ahead [s]")
    ap.add_argument("--seed", type=int, default=100)
    args = ap.parse_args()

    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for k in range(args.count):
        ds = stop_and_go_dataset(duration=args.duration, dt=args.dt,
                                 n_vehicles=args.vehicles,
                                 seed=args.seed + k, lead_time=args.lead_time)
        path = outdir / f"stopgo_{k + 1}.csv"
        write_dataset(ds, path)
        print(f"wrote {path} ({ds.n} vehicles, {ds.n_samples} samples, "
              f"speeds {ds.speeds.min():.1f}..{ds.speeds.max():.1f} m/s)")


if __name__ == "__main__":
    main()
