"""Command-line interface: dataset ingestion, optimization, simulation, reports.

Subcommands mirror the pipeline stages:

    print-config                     show every configuration key in effect
    decompose DATASET                emit the spectral components of a record
    optimize DATASET                 synthesize velocity gains from a record
    simulate DATASET [--gains F]     run the closed loop, emit trace + metrics
    sweep DATASET --objective w|J    rank the whole gain lattice
    compare TRAIN TEST...            optimize on one record, test on others,
                                     connected (n>1) versus non-connected (n=1)

Every emitted file carries the hash of the configuration that produced
it; gains files from a different configuration are refused downstream
unless --force is given.  Exit codes: 0 success, 2 usage, 3 dataset
errors, 4 config errors, 5 mismatched inputs, 1 anything else.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import (ConfigError, RunConfig, apply_overrides, config_hash,
                     load_config, render_config, validate_config)
from .controller import ControllerGains
from .datasets import DatasetError, TrafficDataset, load_dataset
from .engine import Metrics, SimTrace, grid_sweep, run_scenario
from .spectral import OptimizeResult, decompose, nyquist_limit, optimize_gains


class CompatibilityError(ValueError):
    """Inputs produced under a different configuration (or wrong shape)."""


EXIT_CODES = {DatasetError: 3, ConfigError: 4, CompatibilityError: 5}


# ---------------------------------------------------------------- reports

def write_spectrum_file(sd, path: Path, cfg_hash: str) -> None:
    with open(path, "w") as fh:
        fh.write(f"# config_hash: {cfg_hash}\n")
        fh.write(f"# v_star = {sd.v_star!r}\n")
        fh.write("# offsets = " + ", ".join(repr(float(o)) for o in sd.offsets) + "\n")
        fh.write(f"# n_samples = {sd.n_samples}, dt = {sd.dt!r}, t0 = {sd.t0!r}\n")
        cols = ["j", "omega"]
        for i in range(1, sd.n + 1):
            cols += [f"rho_{i}", f"phi_{i}"]
        fh.write(",".join(cols) + "\n")
        rho, phi = sd.amplitudes(), sd.phases()
        for j in range(sd.m):
            row = [str(j + 1), repr(float(sd.omega[j]))]
            for i in range(sd.n):
                row += [repr(float(rho[i, j])), repr(float(phi[i, j]))]
            fh.write(",".join(row) + "\n")


def write_gains_file(result: OptimizeResult, path: Path, cfg_hash: str) -> None:
    g = result.gains
    with open(path, "w") as fh:
        fh.write(f"# config_hash: {cfg_hash}\n")
        fh.write(f"gains.alpha = {g.alpha!r}\n")
        fh.write(f"gains.kappa = {g.kappa!r}\n")
        fh.write("gains.betas = " + ", ".join(repr(b) for b in g.betas) + "\n")
        fh.write(f"gains.v_max = {g.v_max!r}\n")
        fh.write(f"gains.d_st = {g.d_st!r}\n")
        fh.write(f"cost = {result.cost!r}\n")
        fh.write(f"method = {result.method}\n")
        fh.write(f"grid.step = {result.step!r}\n")
        fh.write(f"grid.points = {len(result.grid_costs)}\n")
        fh.write("grid.best_betas = "
                 + ", ".join(repr(b) for b in result.grid_best_betas) + "\n")
        fh.write(f"grid.best_cost = {result.grid_best_cost!r}\n")
        fh.write(f"grid.mean_cost = {float(np.mean(result.grid_costs))!r}\n")
        fh.write(f"grid.max_cost = {float(np.max(result.grid_costs))!r}\n")
        if result.nm_betas is not None:
            fh.write("nm.betas = " + ", ".join(repr(b) for b in result.nm_betas) + "\n")
            fh.write(f"nm.cost = {result.nm_cost!r}\n")


def read_gains_file(path: str | Path) -> tuple[ControllerGains, str | None]:
    """Load a gains report; returns the gains and the recorded config hash."""
    path = Path(path)
    if not path.exists():
        raise CompatibilityError(f"gains file not found: {path}")
    values: dict[str, str] = {}
    found_hash = None
    for line in path.read_text().splitlines():
        stripped = line.strip()
        if stripped.startswith("# config_hash:"):
            found_hash = stripped.split(":", 1)[1].strip()
        elif stripped and not stripped.startswith("#") and "=" in stripped:
            key, raw = stripped.split("=", 1)
            values[key.strip()] = raw.strip()
    try:
        gains = ControllerGains(
            alpha=float(values["gains.alpha"]),
            kappa=float(values["gains.kappa"]),
            betas=tuple(float(x) for x in values["gains.betas"].split(",")),
            v_max=float(values["gains.v_max"]),
            d_st=float(values["gains.d_st"]))
    except (KeyError, ValueError) as exc:
        raise CompatibilityError(f"{path}: not a valid gains file ({exc})") from None
    return gains, found_hash


def check_hash(found: str | None, expected: str, what: str, force: bool) -> None:
    if found is not None and found != expected and not force:
        raise CompatibilityError(
            f"{what} was produced under config {found}, current config is "
            f"{expected}; rerun with matching config or pass --force")


def write_trace_csv(trace: SimTrace, path: Path, cfg_hash: str) -> None:
    n = trace.lead_speeds.shape[1]
    cols = (["t", "D", "v"] + [f"v{i + 1}" for i in range(n)]
            + ["a_nominal", "a_safe", "u_sat", "accel", "h", "a1",
               "filter_active", "saturation_active", "cbf_truncated", "v_clamped"])
    with open(path, "w") as fh:
        fh.write(f"# config_hash: {cfg_hash}\n")
        fh.write(",".join(cols) + "\n")
        for k in range(len(trace.t)):
            row = [f"{trace.t[k]:.6f}", f"{trace.D[k]:.9g}", f"{trace.v[k]:.9g}"]
            row += [f"{trace.lead_speeds[k, i]:.9g}" for i in range(n)]
            row += [f"{trace.a_nominal[k]:.9g}", f"{trace.a_safe[k]:.9g}",
                    f"{trace.u_sat[k]:.9g}", f"{trace.accel[k]:.9g}",
                    f"{trace.h[k]:.9g}", f"{trace.a1[k]:.9g}",
                    str(int(trace.filter_active[k])),
                    str(int(trace.saturation_active[k])),
                    str(int(trace.cbf_truncated[k])),
                    str(int(trace.v_clamped[k]))]
            fh.write(",".join(row) + "\n")


def format_metrics(metrics: Metrics, cfg_hash: str) -> str:
    return (f"# config_hash: {cfg_hash}\n"
            f"w_kJ_per_kg: {metrics.w:.6f}\n"
            f"w_brake_kJ_per_kg: {metrics.w_brake:.6f}\n"
            f"h_neg_pct: {metrics.h_neg_pct:.4f}\n"
            f"h_margin_m_s: {metrics.h_margin:.6f}\n"
            f"crash: {'true' if metrics.crash else 'false'}\n")


# ------------------------------------------------------- compare protocol

@dataclass
class CompareRow:
    test_name: str
    w_acc: float
    w_ccc: float
    reduction_pct: float
    metrics_acc: Metrics
    metrics_ccc: Metrics


@dataclass
class CompareReport:
    train_name: str
    acc_gains: ControllerGains
    ccc_gains: ControllerGains
    rows: list[CompareRow]
    mean_reduction_pct: float


def run_compare_protocol(train: TrafficDataset, tests: list[TrafficDataset],
                         rc: RunConfig, n_ccc: int | None = None,
                         test_names: list[str] | None = None,
                         train_name: str = "train",
                         acc_gains: ControllerGains | None = None,
                         ccc_gains: ControllerGains | None = None) -> CompareReport:
    """Optimize on one record and evaluate on the others.

    The non-connected baseline uses only the nearest vehicle (n = 1); the
    connected design uses n_ccc vehicles (default: all in the dataset).
    Explicit gains skip the corresponding optimization.
    """
    n_ccc = n_ccc if n_ccc is not None else train.n
    if n_ccc > train.n:
        raise CompatibilityError(
            f"compare needs {n_ccc} lead vehicles, train dataset has {train.n}")
    opt = rc.optimizer
    g = rc.gains

    def optimized(n: int) -> ControllerGains:
        sd = decompose(train.first(n),
                       m=opt.m_components or None,
                       energy_fraction=opt.energy_fraction or None)
        return optimize_gains(sd, alpha=g.alpha, kappa=g.kappa, v_max=g.v_max,
                              d_st=g.d_st, beta_box=(opt.beta_min, opt.beta_max),
                              step=opt.step, method=opt.method,
                              eps_margin=opt.eps_margin).gains

    if acc_gains is None:
        acc_gains = optimized(1)
    if ccc_gains is None:
        ccc_gains = optimized(n_ccc)

    names = test_names or [f"test{i + 1}" for i in range(len(tests))]
    rows = []
    for name, ds in zip(names, tests):
        if ccc_gains.n > ds.n:
            raise CompatibilityError(
                f"{name}: dataset has {ds.n} vehicles, connected design needs {ccc_gains.n}")
        m_acc = run_scenario(ds, acc_gains, rc.safety, rc.vehicle, rc.sim)[1]
        m_ccc = run_scenario(ds, ccc_gains, rc.safety, rc.vehicle, rc.sim)[1]
        red = 100.0 * (m_acc.w - m_ccc.w) / m_acc.w if m_acc.w != 0.0 else 0.0
        rows.append(CompareRow(name, m_acc.w, m_ccc.w, red, m_acc, m_ccc))
    mean_red = float(np.mean([r.reduction_pct for r in rows])) if rows else 0.0
    return CompareReport(train_name=train_name, acc_gains=acc_gains,
                         ccc_gains=ccc_gains, rows=rows,
                         mean_reduction_pct=mean_red)


def format_compare_report(rep: CompareReport, cfg_hash: str) -> str:
    lines = [f"# config_hash: {cfg_hash}",
             f"# train: {rep.train_name}",
             "acc.betas = " + ", ".join(repr(b) for b in rep.acc_gains.betas),
             "ccc.betas = " + ", ".join(repr(b) for b in rep.ccc_gains.betas),
             "test, w_acc_kJ_per_kg, w_ccc_kJ_per_kg, reduction_pct"]
    for r in rep.rows:
        lines.append(f"{r.test_name}, {r.w_acc:.6f}, {r.w_ccc:.6f}, "
                     f"{r.reduction_pct:.2f}")
    lines.append(f"mean_reduction_pct: {rep.mean_reduction_pct:.2f}")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------ subcommands

def _out_path(args, rc: RunConfig, default_name: str) -> Path:
    if getattr(args, "output", None):
        path = Path(args.output)
    else:
        path = Path(rc.output_dir) / default_name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _cmd_print_config(args, rc: RunConfig) -> int:
    text = render_config(rc)
    sys.stdout.write(text)
    sys.stdout.write(f"# config_hash: {config_hash(rc)}\n")
    for warning in validate_config(rc):
        print(f"# warning: {warning}", file=sys.stderr)
    return 0


def _cmd_decompose(args, rc: RunConfig) -> int:
    ds = load_dataset(args.dataset)
    m = args.m if args.m is not None else (rc.optimizer.m_components or None)
    frac = (args.energy_fraction if args.energy_fraction is not None
            else (rc.optimizer.energy_fraction or None))
    sd = decompose(ds, m=m, energy_fraction=frac)
    out = _out_path(args, rc, Path(args.dataset).stem + ".spectrum.txt")
    write_spectrum_file(sd, out, config_hash(rc))
    print(f"wrote {out} ({sd.m} components, limit {nyquist_limit(ds.n_samples)}, "
          f"v_star {sd.v_star:.4f} m/s)")
    return 0


def _cmd_optimize(args, rc: RunConfig) -> int:
    ds = load_dataset(args.dataset)
    opt, g = rc.optimizer, rc.gains
    n = args.n if args.n is not None else ds.n
    sd = decompose(ds.first(n), m=opt.m_components or None,
                   energy_fraction=opt.energy_fraction or None)
    result = optimize_gains(sd, alpha=g.alpha, kappa=g.kappa, v_max=g.v_max,
                            d_st=g.d_st, beta_box=(opt.beta_min, opt.beta_max),
                            step=args.step or opt.step,
                            method=args.method or opt.method,
                            eps_margin=opt.eps_margin)
    out = _out_path(args, rc, Path(args.dataset).stem + ".gains.txt")
    write_gains_file(result, out, config_hash(rc))
    if args.grid_out:
        grid_path = Path(args.grid_out)
        grid_path.parent.mkdir(parents=True, exist_ok=True)
        with open(grid_path, "w") as fh:
            fh.write(f"# config_hash: {config_hash(rc)}\n")
            fh.write(",".join([f"beta{i + 1}" for i in range(sd.n)] + ["J"]) + "\n")
            for betas, cost in zip(result.grid_betas, result.grid_costs):
                fh.write(",".join(repr(float(b)) for b in betas)
                         + f",{cost!r}\n")
        print(f"wrote {grid_path}")
    print(f"wrote {out} (betas {list(result.gains.betas)}, cost {result.cost:.6g})")
    return 0


def _cmd_simulate(args, rc: RunConfig) -> int:
    ds = load_dataset(args.dataset)
    expected = config_hash(rc)
    if args.gains:
        gains, found = read_gains_file(args.gains)
        check_hash(found, expected, f"gains file {args.gains}", args.force)
    else:
        gains = rc.gains
    if gains.n > ds.n:
        raise CompatibilityError(
            f"gains expect {gains.n} lead vehicles, dataset has {ds.n}")
    sim = replace(rc.sim, filter_enabled=False) if args.no_filter else rc.sim
    trace, metrics = run_scenario(ds, gains, rc.safety, rc.vehicle, sim)
    prefix = (Path(args.output) if args.output
              else Path(rc.output_dir) / Path(args.dataset).stem)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    if not args.metrics_only:
        trace_path = Path(str(prefix) + ".trace.csv")
        write_trace_csv(trace, trace_path, expected)
        print(f"wrote {trace_path}")
    metrics_path = Path(str(prefix) + ".metrics.txt")
    metrics_path.write_text(format_metrics(metrics, expected))
    print(f"wrote {metrics_path}")
    print(format_metrics(metrics, expected), end="")
    return 0


def _cmd_sweep(args, rc: RunConfig) -> int:
    ds = load_dataset(args.dataset)
    opt, g = rc.optimizer, rc.gains
    result = grid_sweep(ds, alpha=g.alpha, kappa=g.kappa, v_max=g.v_max,
                        d_st=g.d_st, beta_box=(opt.beta_min, opt.beta_max),
                        step=args.step or opt.step, sp=rc.safety, vp=rc.vehicle,
                        cfg=rc.sim, objective=args.objective,
                        workers=args.workers, eps_margin=opt.eps_margin,
                        n_vehicles=args.n)
    out = _out_path(args, rc, Path(args.dataset).stem + f".sweep_{args.objective}.csv")
    n = len(result.entries[0].betas)
    with open(out, "w") as fh:
        fh.write(f"# config_hash: {config_hash(rc)}\n")
        cols = [f"beta{i + 1}" for i in range(n)] + ["score"]
        if args.objective == "w":
            cols += ["w_brake", "h_neg_pct", "h_margin", "crash"]
        fh.write(",".join(cols) + "\n")
        for e in result.entries:
            row = [repr(float(b)) for b in e.betas] + [repr(e.score)]
            if e.metrics is not None:
                row += [f"{e.metrics.w_brake:.6f}", f"{e.metrics.h_neg_pct:.4f}",
                        f"{e.metrics.h_margin:.6f}",
                        "1" if e.metrics.crash else "0"]
            fh.write(",".join(row) + "\n")
    print(f"wrote {out} ({len(result.entries)} lattice points, "
          f"best betas {list(result.best.betas)})")
    return 0


def _cmd_compare(args, rc: RunConfig) -> int:
    expected = config_hash(rc)
    train = load_dataset(args.train)
    tests = [load_dataset(p) for p in args.tests]
    if args.no_filter:
        rc = replace(rc, sim=replace(rc.sim, filter_enabled=False))
    acc_gains = ccc_gains = None
    if args.acc_gains:
        acc_gains, found = read_gains_file(args.acc_gains)
        check_hash(found, expected, f"gains file {args.acc_gains}", args.force)
    if args.ccc_gains:
        ccc_gains, found = read_gains_file(args.ccc_gains)
        check_hash(found, expected, f"gains file {args.ccc_gains}", args.force)
    report = run_compare_protocol(
        train, tests, rc, n_ccc=args.n,
        test_names=[Path(p).name for p in args.tests],
        train_name=Path(args.train).name,
        acc_gains=acc_gains, ccc_gains=ccc_gains)
    text = format_compare_report(report, expected)
    out = _out_path(args, rc, Path(args.train).stem + ".compare.txt")
    out.write_text(text)
    print(text, end="")
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cccsim",
        description="Connected cruise control: data-driven gains, "
                    "barrier-filtered simulation, energy metrics.")
    parser.add_argument("--config", help="configuration file (section.key = value)")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a configuration key")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("print-config", help="show the active configuration")

    p = sub.add_parser("decompose", help="emit spectral components of a dataset")
    p.add_argument("dataset")
    p.add_argument("-m", type=int, default=None, help="component count")
    p.add_argument("--energy-fraction", type=float, default=None)
    p.add_argument("-o", "--output")

    p = sub.add_parser("optimize", help="synthesize gains from a dataset")
    p.add_argument("dataset")
    p.add_argument("--method", choices=["grid", "nelder_mead"], default=None)
    p.add_argument("--step", type=float, default=None)
    p.add_argument("--n", type=int, default=None, help="lead vehicles to use")
    p.add_argument("--grid-out", help="also dump the full lattice table")
    p.add_argument("-o", "--output")

    p = sub.add_parser("simulate", help="closed-loop run, emits trace and metrics")
    p.add_argument("dataset")
    p.add_argument("--gains", help="gains file from 'optimize'")
    p.add_argument("--no-filter", action="store_true")
    p.add_argument("--metrics-only", action="store_true")
    p.add_argument("--force", action="store_true",
                   help="accept inputs from a different config")
    p.add_argument("-o", "--output")

    p = sub.add_parser("sweep", help="rank every gain-lattice point")
    p.add_argument("dataset")
    p.add_argument("--objective", choices=["w", "J"], required=True)
    p.add_argument("--step", type=float, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--n", type=int, default=None, help="lead vehicles to use")
    p.add_argument("-o", "--output")

    p = sub.add_parser("compare", help="train/test protocol, connected vs not")
    p.add_argument("train")
    p.add_argument("tests", nargs="+")
    p.add_argument("--n", type=int, default=None, help="connected design size")
    p.add_argument("--no-filter", action="store_true")
    p.add_argument("--acc-gains", help="explicit non-connected gains file")
    p.add_argument("--ccc-gains", help="explicit connected gains file")
    p.add_argument("--force", action="store_true")
    p.add_argument("-o", "--output")
    return parser


_HANDLERS = {
    "print-config": _cmd_print_config,
    "decompose": _cmd_decompose,
    "optimize": _cmd_optimize,
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
    "compare": _cmd_compare,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        rc = RunConfig()
        if args.config:
            rc = load_config(args.config)
        overrides = []
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set {item!r}: expected KEY=VALUE")
            key, raw = item.split("=", 1)
            overrides.append((key.strip(), raw, f"--set {item}"))
        if overrides:
            rc = apply_overrides(rc, overrides)
        return _HANDLERS[args.command](args, rc)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for cls, code in EXIT_CODES.items():
            if isinstance(exc, cls):
                return code
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
