"""Command-line entry point for simulation, analysis and calibration runs.

Subcommands: simulate (Monte Carlo pipeline), analytic (closed-form model),
optimize (parameter search), calibrate (detector model fit), sweep
(rate-vs-attenuation CSV) and bench (EC/PA throughput).  `--mode NAME` is an
alternative way of selecting the subcommand.  Exit codes: 0 success, 1
configuration error, 2 stage failure, 3 no positive key rate.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import fields, replace

from .config import DistillationReport, RunConfig, load_config, write_report
from .detector import CalibrationTargets
from .errors import NoPositiveRate, ParseError, QkdError, StageError
from .finitekey import AnalyticEngine, optimize_params
from .pipeline import (analytic_report, benchmark, run_calibration,
                       run_pipeline, sweep_attenuations, _load_model)
from .protocol import LinkParams, ProtocolParams

MODES = ("simulate", "analytic", "optimize", "calibrate", "sweep", "bench")


def _add_common(parser: argparse.ArgumentParser, config_required: bool) -> None:
    parser.add_argument("--config", required=config_required,
                        help="run configuration file")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--slots", type=int, help="override the slot count")
    parser.add_argument("--workers", type=int, help="override the worker count")
    parser.add_argument("--out", help="output path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qkd-distill",
        description="Time-bin QKD simulator and key-distillation pipeline")
    sub = parser.add_subparsers(dest="command", metavar="|".join(MODES))

    p = sub.add_parser("simulate", help="run the Monte Carlo pipeline")
    _add_common(p, True)
    p.add_argument("--key-out", help="final key file (default: <out>.key)")
    p.add_argument("--csv", help="also append a CSV summary row")

    p = sub.add_parser("analytic", help="closed-form operating-point summary")
    _add_common(p, True)
    p.add_argument("--detectors", type=int, default=1,
                   help="number of interleaved detector arrays")
    p.add_argument("--ideal-ec", action="store_true",
                   help="assume Shannon-limit reconciliation leakage")

    p = sub.add_parser("optimize", help="maximise SKR over source parameters")
    _add_common(p, True)
    p.add_argument("--restarts", type=int, default=20)

    p = sub.add_parser("calibrate", help="fit the detector model anchors")
    _add_common(p, False)

    p = sub.add_parser("sweep", help="analytic rate-vs-attenuation sweep")
    _add_common(p, True)
    p.add_argument("--attenuations", required=True,
                   help="comma-separated channel attenuations in dB")

    p = sub.add_parser("bench", help="EC and PA throughput figures")
    _add_common(p, False)
    p.add_argument("--frames", type=int, default=64)
    return parser


def _apply_overrides(config: RunConfig, args) -> RunConfig:
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.slots is not None:
        updates["n_slots"] = args.slots
    if args.workers is not None:
        updates["workers"] = args.workers
    return replace(config, **updates) if updates else config


def _print_report(report: DistillationReport, stream=None) -> None:
    stream = stream or sys.stdout
    for f in fields(DistillationReport):
        print(f"{f.name} = {getattr(report, f.name)}", file=stream)


def _default_config() -> RunConfig:
    params = ProtocolParams(mu0=0.49, mu1=0.22, p_mu0=0.74,
                            p_za=0.65, p_zb=0.99)
    return RunConfig(params=params, link=LinkParams(attenuation_db=1.58))


def _run(args) -> int:
    if args.command == "calibrate":
        out = args.out or "detector.model"
        model = run_calibration(out, CalibrationTargets(),
                                seed=args.seed if args.seed is not None
                                else 20240317)
        print(f"eta_max = {model.eta_max}")
        print(f"tau_recovery_ns = {model.tau_recovery_ns}")
        print(f"or_window_ns = {model.or_window_ns}")
        print(f"model written to {out}")
        return 0

    if args.command == "bench":
        config = (_apply_overrides(load_config(args.config), args)
                  if args.config else _default_config())
        stats = benchmark(config, frames=args.frames)
        for key, value in stats.items():
            print(f"{key} = {value:.6g}")
        return 0

    config = _apply_overrides(load_config(args.config), args)

    if args.command == "simulate":
        out = args.out or "report.txt"
        key_out = args.key_out or out + ".key"
        report = run_pipeline(config, report_path=out, key_path=key_out,
                              csv_path=args.csv)
        _print_report(report)
        return 0

    if args.command == "analytic":
        report = analytic_report(config, n_detectors=args.detectors,
                                 ideal_ec=args.ideal_ec)
        _print_report(report)
        if args.out:
            write_report(report, args.out)
        return 0

    if args.command == "optimize":
        engine = AnalyticEngine(_load_model(config))
        result = optimize_params(engine, config.params, config.link,
                                 seed=config.seed, restarts=args.restarts)
        p = result.params
        for name in ("mu0", "mu1", "p_mu0", "p_za", "p_zb"):
            print(f"{name} = {getattr(p, name):.6f}")
        print(f"skr_bps = {result.skr_bps:.6g}")
        return 0

    if args.command == "sweep":
        try:
            points = [float(tok) for tok in args.attenuations.split(",") if tok]
        except ValueError as exc:
            raise ParseError(f"bad attenuation list: {exc}") from exc
        out = args.out or "sweep.csv"
        reports = sweep_attenuations(config, points, csv_path=out)
        for row in reports:
            print(f"att {row.attenuation_db:7.3f} dB  "
                  f"skr {row.skr_bps / 1e6:10.4f} Mbps  [{row.status}]")
        print(f"sweep written to {out}")
        return 0

    raise ParseError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if "--mode" in argv:
        i = argv.index("--mode")
        if i + 1 >= len(argv):
            print("error: --mode requires a value", file=sys.stderr)
            return 1
        mode = argv[i + 1]
        del argv[i:i + 2]
        if mode not in MODES:
            print(f"error: unknown mode {mode!r}", file=sys.stderr)
            return 1
        argv.insert(0, mode)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _run(args)
    except StageError as exc:
        print(f"error: stage {exc.stage}: {exc}", file=sys.stderr)
        return 2
    except NoPositiveRate as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (QkdError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
