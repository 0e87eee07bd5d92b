"""Command-line surface.

Subcommands: ``gen`` (synthetic current profile), ``simulate`` (truth model
forward run producing an estimation-ready dataset), ``estimate`` (one or both
filters over a cycle, emitting a per-step trace), ``compare`` (both filters
plus an accuracy report), and ``validate`` (config/data lint).

Exit codes: 0 success, 1 usage error, 2 configuration or data error,
3 numerical or simulation failure.  Log verbosity comes from the SOCEKF_LOG
environment variable (debug/info/warning).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from urllib.parse import parse_qsl

import numpy as np

from . import io
from .errors import ConfigError, DataError, NumericalError, SimulationError
from .filters import ekf_step, rbc_dekf_step
from .harness import BiasSpec, DriveCycle, SyntheticDataset, compare, \
    coulomb_count, gen_profile, run_filter, simulate_truth

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

log = logging.getLogger("socekf")


class _Parser(argparse.ArgumentParser):
    """argparse variant whose usage failures exit with code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _setup_logging() -> None:
    level = os.environ.get("SOCEKF_LOG", "warning").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _noise_seed(seed: int) -> int:
    """Deterministic measurement-noise seed decorrelated from the profile
    seed."""
    return int(np.random.SeedSequence(seed).generate_state(1)[0])


def parse_synthetic(spec: str) -> tuple[str, dict]:
    """Split "synthetic:<kind>?key=val&..." into the kind and a string
    parameter map."""
    body = spec[len("synthetic:"):]
    kind, _, query = body.partition("?")
    if not kind:
        raise ValueError("synthetic spec needs a profile kind, e.g."
                         " synthetic:random-walk?n=7200")
    params = dict(parse_qsl(query, keep_blank_values=True))
    return kind, params


def _synthetic_cycle(spec: str, seed: int) -> tuple[str, dict, DriveCycle,
                                                    dict]:
    """Build the drive cycle for a synthetic spec; returns (kind, profile
    params, cycle, truth params) with the truth keys (soc0/bias/noise)
    split out."""
    kind, params = parse_synthetic(spec)
    truth = {key: params.pop(key) for key in ("soc0", "bias", "noise")
             if key in params}
    if "template" in params:
        params["template"] = [float(x)
                              for x in str(params["template"]).split(",")]
    cycle = gen_profile(kind, params, seed=seed)
    return kind, params, cycle, truth


def _dataset_from_synthetic(spec: str, cell, args) -> SyntheticDataset:
    """Profile generation plus truth simulation for a synthetic input."""
    _, _, cycle, truth = _synthetic_cycle(spec, args.seed)
    soc0 = float(truth.get("soc0", getattr(args, "soc0", None) or 1.0))
    bias = BiasSpec.parse(str(truth.get("bias",
                                        getattr(args, "bias", "none"))))
    noise = float(truth.get("noise", getattr(args, "noise", 0.0)))
    return simulate_truth(cell, cycle, soc0, bias, noise,
                          seed=_noise_seed(args.seed))


def _measured_cycle(args, cell) -> tuple[DriveCycle, np.ndarray | None]:
    """Resolve --input into a voltage-carrying cycle plus ground-truth SOC
    (None when unavailable)."""
    if args.input.startswith("synthetic:"):
        ds = _dataset_from_synthetic(args.input, cell, args)
        cycle = ds.measurement_cycle()
        return cycle, ds.soc_true
    cycle = io.load_cycle(args.input, resample=args.resample,
                          require_voltage=True)
    if cycle.soc_ref is not None:
        return cycle, cycle.soc_ref
    if getattr(args, "soc0", None) is not None:
        return cycle, coulomb_count(cycle, cell.q_cell, args.soc0)
    return cycle, None


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen(args) -> int:
    if not args.input.startswith("synthetic:"):
        raise ValueError("gen requires --input synthetic:<kind>?...")
    _, _, cycle, truth = _synthetic_cycle(args.input, args.seed)
    if truth:
        raise ValueError(f"gen does not accept truth keys {sorted(truth)};"
                         " use simulate")
    out = _outdir(args)
    path = out / "cycle.csv"
    io.write_cycle(path, cycle)
    log.info("wrote %d samples", cycle.n)
    print(path)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cell = io.load_cell_params(args.cell)
    if args.input.startswith("synthetic:"):
        ds = _dataset_from_synthetic(args.input, cell, args)
    else:
        cycle = io.load_cycle(args.input, resample=args.resample,
                              require_voltage=False)
        ds = simulate_truth(cell, cycle, args.soc0,
                            BiasSpec.parse(args.bias), args.noise,
                            seed=_noise_seed(args.seed))
    out = _outdir(args)
    path = out / "dataset.csv"
    io.write_dataset(path, ds)
    log.info("simulated %d samples", ds.cycle.n)
    print(path)
    return EXIT_OK


def cmd_estimate(args) -> int:
    cell = io.load_cell_params(args.cell)
    cfg = io.load_filter_config(args.filter_config, cell)
    cycle, soc_true = _measured_cycle(args, cell)
    ekf_trace = rbc_trace = None
    if args.filter in ("ekf", "both"):
        ekf_trace = run_filter(ekf_step, cycle, cell, cfg)
    if args.filter in ("rbc-dekf", "both"):
        rbc_trace = run_filter(rbc_dekf_step, cycle, cell, cfg)
    out = _outdir(args)
    path = out / "trace.csv"
    io.write_trace(path, cycle, ekf=ekf_trace, rbc=rbc_trace,
                   soc_true=soc_true)
    log.info("estimated %d samples with filter=%s", cycle.n, args.filter)
    print(path)
    return EXIT_OK


def cmd_compare(args) -> int:
    cell = io.load_cell_params(args.cell)
    cfg = io.load_filter_config(args.filter_config, cell)
    cycle, soc_true = _measured_cycle(args, cell)
    if soc_true is None:
        raise DataError("compare needs ground-truth SOC: provide a soc_ref"
                        " column, --soc0 for Coulomb counting, or a"
                        " synthetic input")
    report, ekf_trace, rbc_trace = compare(cycle, cell, cfg,
                                           soc_true=soc_true,
                                           skip_fraction=args.skip)
    out = _outdir(args)
    io.write_report(out, report)
    if report.failed is not None:
        print(io.report_text(report), end="", file=sys.stderr)
        return EXIT_NUMERIC
    io.write_trace(out / "trace.csv", cycle, ekf=ekf_trace, rbc=rbc_trace,
                   soc_true=soc_true)
    print(io.report_text(report), end="")
    return EXIT_OK


def cmd_validate(args) -> int:
    checked = 0
    cell = None
    if args.cell is not None:
        cell = io.load_cell_params(args.cell)
        print(f"ok: cell parameters {args.cell}")
        checked += 1
    if args.filter_config is not None:
        io.load_filter_config(args.filter_config, cell)
        print(f"ok: filter config {args.filter_config}")
        checked += 1
    if args.input is not None:
        if args.input.startswith("synthetic:"):
            _synthetic_cycle(args.input, args.seed)
            print(f"ok: synthetic spec {args.input}")
        else:
            cycle = io.load_cycle(args.input, resample=args.resample,
                                  require_voltage=False)
            print(f"ok: cycle {args.input} ({cycle.n} samples,"
                  f" dt={cycle.dt:g}s)")
        checked += 1
    if checked == 0:
        raise ValueError("nothing to validate: pass --cell,"
                         " --filter-config, and/or --input")
    return EXIT_OK


def _add_common(sub, cell=False, filter_config=False, inp=False, out=False):
    if cell:
        sub.add_argument("--cell", required=True,
                         help="cell-parameter TOML file")
    if filter_config:
        sub.add_argument("--filter-config", required=True,
                         help="filter-tuning TOML file")
    if inp:
        sub.add_argument("--input", required=True,
                         help="cycle CSV path or synthetic:<kind>?k=v&...")
    if out:
        sub.add_argument("--out", required=True, help="output directory")
    sub.add_argument("--seed", type=int, default=0,
                     help="seed for profile generation and noise (default 0)")
    sub.add_argument("--resample", type=float, default=None, metavar="DT",
                     help="resample file input to a uniform DT seconds grid")


def build_parser() -> _Parser:
    parser = _Parser(prog="socekf",
                     description="SOC estimation with a bias-compensated"
                                 " dual EKF over a single particle cell"
                                 " model")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("gen", parents=[], help="generate a synthetic profile")
    _add_common(p, inp=True, out=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("simulate", help="run the truth model over a cycle")
    _add_common(p, cell=True, inp=True, out=True)
    p.add_argument("--soc0", type=float, default=1.0,
                   help="truth initial SOC (default 1.0)")
    p.add_argument("--bias", default="none",
                   help="injected bias: none | constant:V | ramp:V0:V1 |"
                        " piecewise:T=V,...")
    p.add_argument("--noise", type=float, default=0.0,
                   help="voltage noise sigma in volts (default 0)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="run filter(s), emit a trace CSV")
    _add_common(p, cell=True, filter_config=True, inp=True, out=True)
    p.add_argument("--filter", choices=("ekf", "rbc-dekf", "both"),
                   default="rbc-dekf")
    p.add_argument("--soc0", type=float, default=None,
                   help="Coulomb-counting initial SOC for file inputs"
                        " without soc_ref")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("compare",
                       help="run both filters, emit trace and report")
    _add_common(p, cell=True, filter_config=True, inp=True, out=True)
    p.add_argument("--soc0", type=float, default=None,
                   help="Coulomb-counting initial SOC for file inputs"
                        " without soc_ref")
    p.add_argument("--skip", type=float, default=0.0,
                   help="fraction of leading samples excluded from metrics"
                        " (default 0)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("validate", help="lint configs and data files")
    p.add_argument("--cell", default=None)
    p.add_argument("--filter-config", default=None)
    p.add_argument("--input", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resample", type=float, default=None)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "func", None) is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigError, DataError) as exc:
        print(f"socekf: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, SimulationError) as exc:
        print(f"socekf: error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"socekf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
