#!/usr/bin/env python3
"""End-to-end experiment: connectivity benefit and the filter's energy cost.

For every train/test split of the demo recordings this optimizes a
non-connected design (nearest vehicle only) and a connected design
(three vehicles ahead) on the training record, simulates both on the
held-out records with the safety filter on, and tabulates the energy
reduction.  It then re-runs one representative pair with the filter
disabled to show what the safety guarantee costs (or saves) in energy
and how large the barrier violations would have been.

Usage:
    python scripts/make_demo_data.py --outdir data/demo
    python scripts/run_comparison.py --datadir data/demo
"""

import argparse
from dataclasses import replace
from pathlib import Path

import numpy as np

from cccsim import load_dataset, run_scenario
from cccsim.cli import run_compare_protocol
from cccsim.config import RunConfig


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--datadir", default="data/demo")
    ap.add_argument("--n", type=int, default=3, help="connected design size")
    args = ap.parse_args()

    paths = sorted(Path(args.datadir).glob("*.csv"))
    if len(paths) < 2:
        raise SystemExit(f"need at least two CSV files in {args.datadir}; "
                         "run scripts/make_demo_data.py first")
    datasets = [load_dataset(p) for p in paths]
    rc = RunConfig()

    print(f"{'train':<16} {'acc betas':<18} {'ccc betas':<24} mean_red%  worst%")
    reports = []
    for k, train in enumerate(datasets):
        tests = [d for i, d in enumerate(datasets) if i != k]
        names = [p.name for i, p in enumerate(paths) if i != k]
        rep = run_compare_protocol(train, tests, rc, n_ccc=args.n,
                                   test_names=names, train_name=paths[k].name)
        reports.append(rep)
        worst = min(r.reduction_pct for r in rep.rows)
        print(f"{paths[k].name:<16} {str(list(rep.acc_gains.betas)):<18} "
              f"{str(list(rep.ccc_gains.betas)):<24} "
              f"{rep.mean_reduction_pct:8.2f}  {worst:6.2f}")
    print(f"\noverall mean energy reduction: "
          f"{np.mean([r.mean_reduction_pct for r in reports]):.2f}%\n")

    # filter impact on one split: with/without the safety guarantee
    rep = reports[0]
    test_ds = datasets[1]
    print(f"filter impact on {paths[1].name} "
          f"(w/o filter -> w/ filter):")
    header = f"{'design':<6} {'w [kJ/kg]':<22} {'w_brake [kJ/kg]':<22} " \
             f"{'h<0 [%]':<16} h_margin [m*s]"
    print(header)
    for label, gains in (("acc", rep.acc_gains), ("ccc", rep.ccc_gains)):
        cells = []
        for enabled in (False, True):
            cfg = replace(rc.sim, filter_enabled=enabled)
            _, m = run_scenario(test_ds, gains, rc.safety, rc.vehicle, cfg)
            cells.append(m)
        off, on = cells
        note = " (crashes unfiltered)" if off.crash and not on.crash else ""
        print(f"{label:<6} {off.w:8.4f} / {on.w:<11.4f} "
              f"{off.w_brake:8.4f} / {on.w_brake:<11.4f} "
              f"{off.h_neg_pct:5.2f} / {on.h_neg_pct:<8.2f} "
              f"{off.h_margin:7.4f} / {on.h_margin:.4f}{note}")


if __name__ == "__main__":
    main()
