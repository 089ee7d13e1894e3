"""Command-line entry point: ``btdecay <subcommand> [options]``.

Exit codes: 0 success, 1 usage error, 2 input data failure, 3 computation
error. Failures print a one-line JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields, replace

from .decision import HaircutParams, haircut
from .errors import BtDecayError, DataError
from .pipeline import STAGES, RunConfig, run
from .synthetic import UniverseConfig, gen_universe

OUTPUT_ENV = "BTDECAY_OUTPUT_DIR"
DEFAULT_OUTPUT = "btdecay_out"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message, "exit_code": code}), file=sys.stderr)
    return code


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration; flags override its values")
    p.add_argument("--returns", help="long-format returns CSV (strategy_id,date,excess_return)")
    p.add_argument("--meta", help="strategy metadata CSV")
    p.add_argument("--benchmarks", help="external index returns CSV (index_id,date,return)")
    p.add_argument("--convexity", help="VIX term-structure CSV (date,vix_3m,vix_1m)")
    p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="worker cap for resampling stages")
    p.add_argument("--horizons", help="comma-separated subset of 6m,12m")
    p.add_argument("--convention", choices=("compound", "arithmetic"))
    p.add_argument("--replications", type=int, help="bootstrap, wild and placebo replications")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="btdecay", description="Backtest-to-live decay evaluation toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "validate": "apply inclusion rules and write the exclusion report",
        "metrics": "per-strategy window metrics, decay summary, risk deterioration, event-time profile",
        "benchmarks": "peer and index relative outcomes and their distributions",
        "regress": "levels and decay regressions across benchmarks, matched-sample Wald tests",
        "channels": "regime-extremity and launch-density specifications, quintile figure data",
        "bootstrap": "block-bootstrap null for decay and wild-cluster p-values",
        "placebo": "placebo launch-timing test",
        "classify": "failure labels and time-split classifier report",
        "report-all": "run every stage in order",
    }
    for name, text in helps.items():
        _add_run_args(sub.add_parser(name, help=text, description=text))
    h = sub.add_parser("haircut", help="regime-conditional expected live return")
    h.add_argument("--pf", type=float, required=True, help="pro-forma vol-adjusted return, pp p.a.")
    h.add_argument("--z", type=float, required=True, help="regime-extremity z-score at launch")
    h.add_argument("--lambda0", type=float, default=HaircutParams.lambda0)
    h.add_argument("--lambda1", type=float, default=HaircutParams.lambda1)
    h.add_argument("--gamma", type=float, default=HaircutParams.gamma)
    h.add_argument("--json", action="store_true", help="print a JSON object instead of the bare number")
    s = sub.add_parser("synth", help="generate a synthetic universe in the ingestion formats")
    s.add_argument("--config", help="JSON object of generator settings")
    s.add_argument("--out", help="output directory")
    s.add_argument("--seed", type=int)
    s.add_argument("--strategies-per-bucket", type=int)
    s.add_argument("--selection-strength", type=float)
    s.add_argument("--days-total", type=int)
    s.add_argument("--n-short-live", type=int)
    return parser


def _output_dir(arg) -> str:
    return arg or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT


def run_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    changes = {k: getattr(args, k) for k in ("returns", "meta", "benchmarks", "convexity", "seed", "threads", "convention")}
    changes = {k: v for k, v in changes.items() if v is not None}
    if args.horizons:
        changes["horizons"] = tuple(h.strip() for h in args.horizons.split(",") if h.strip())
    if args.replications is not None:
        changes.update(bootstrap_replications=args.replications, wild_replications=args.replications,
                       placebo_replications=args.replications)
    cfg = replace(cfg, **changes)
    return replace(cfg, output_dir=args.out or cfg.output_dir or _output_dir(None))


def _synth(args) -> int:
    base = {}
    if args.config:
        with open(args.config) as fh:
            base = json.load(fh)
    known = {f.name for f in fields(UniverseConfig)}
    unknown = sorted(set(base) - known)
    if unknown:
        raise DataError(f"unknown generator keys: {unknown}")
    flags = {"seed": args.seed, "strategies_per_bucket": args.strategies_per_bucket,
             "selection_strength": args.selection_strength, "days_total": args.days_total,
             "n_short_live": args.n_short_live}
    base.update({k: v for k, v in flags.items() if v is not None})
    try:
        cfg = UniverseConfig(**base)
        universe = gen_universe(cfg)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    out = _output_dir(args.out)
    paths = universe.write(out)
    universe.truth.to_csv(os.path.join(out, "truth.csv"), float_format="%.17g", lineterminator="\n")
    print(json.dumps({k: str(v) for k, v in paths.items()}, sort_keys=True))
    return 0


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail("usage", str(exc), 1)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        if args.command == "haircut":
            value = haircut(args.pf, args.z, HaircutParams(args.lambda0, args.lambda1, args.gamma))
            print(json.dumps({"pf_return_pp": args.pf, "regime_z": args.z, "expected_live_pp": value})
                  if args.json else f"{value:.2f}")
            return 0
        if args.command == "synth":
            return _synth(args)
        cfg = run_config(args)
        ctx = run(cfg, args.command)
        print(json.dumps({"command": args.command, "output_dir": str(ctx.out),
                          "artifacts": len(ctx.artifacts)}, sort_keys=True))
        return 0
    except DataError as exc:
        return _fail(type(exc).__name__, str(exc), 2)
    except (BtDecayError, ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        return _fail(type(exc).__name__, str(exc), 3)


if __name__ == "__main__":
    sys.exit(main())
