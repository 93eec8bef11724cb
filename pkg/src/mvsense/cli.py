"""Command-line entry points: run sweeps, validate analysis, render plots."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import PRESETS, config_hash, load_config, preset
from .errors import ConfigurationError


def _resolve_config(args) -> dict:
    if args.config and args.preset:
        raise ConfigurationError("config: pass either a config file or --preset, not both")
    if args.preset:
        cfg = preset(args.preset)
    elif args.config:
        cfg = load_config(args.config)
    else:
        raise ConfigurationError("config: a config file or --preset is required")
    if getattr(args, "seed", None) is not None:
        cfg["sweep"]["base_seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        cfg["sweep"]["trials"] = args.trials
    if getattr(args, "out", None) is not None:
        cfg["output"]["directory"] = args.out
    return cfg


def _cmd_run(args) -> int:
    from .harness import run_scenario

    cfg = _resolve_config(args)
    out = Path(cfg["output"]["directory"])
    out.mkdir(parents=True, exist_ok=True)
    records = run_scenario(cfg, out_dir=out, workers=args.workers)
    ok = sum(1 for r in records if not r.stop_reason.startswith("error"))
    print(f"wrote {len(records)} records ({ok} ok) to {out}  [config {config_hash(cfg)}]")
    return 0


def _cmd_validate(args) -> int:
    from .harness import validate_analysis

    cfg = _resolve_config(args)
    out = Path(cfg["output"]["directory"])
    report, bounds = validate_analysis(cfg, out_dir=out)
    print(report.summary())
    print(bounds.summary())
    print(f"wrote analysis tables to {out}")
    return 0


def _cmd_plot(args) -> int:
    from .harness import emit_plots, load_traces, read_records

    records = read_records(Path(args.records_dir) / "records.csv")
    load_traces(records, args.records_dir)
    out = Path(args.out) if args.out else Path(args.records_dir) / "plots"
    written = emit_plots(records, out)
    print(f"wrote {len(written)} plot files to {out}")
    return 0


def _cmd_presets(_args) -> int:
    for name in sorted(PRESETS):
        print(name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvsense", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario sweep")
    run.add_argument("config", nargs="?", help="YAML scenario config")
    run.add_argument("--preset", choices=sorted(PRESETS), help="use a built-in scenario")
    run.add_argument("--seed", type=int, help="override sweep.base_seed")
    run.add_argument("--trials", type=int, help="override sweep.trials")
    run.add_argument("--out", help="override output.directory")
    run.add_argument("--workers", type=int, default=1, help="parallel trial workers")
    run.set_defaults(func=_cmd_run)

    val = sub.add_parser("validate", help="run the range/bound analysis validators")
    val.add_argument("config", nargs="?", help="YAML scenario config")
    val.add_argument("--preset", choices=sorted(PRESETS))
    val.add_argument("--seed", type=int, help="override sweep.base_seed")
    val.add_argument("--trials", type=int, help="override sweep.trials")
    val.add_argument("--out", help="override output.directory")
    val.set_defaults(func=_cmd_validate)

    plot = sub.add_parser("plot", help="re-render plots from a records directory")
    plot.add_argument("records_dir")
    plot.add_argument("--out", help="plot output directory")
    plot.set_defaults(func=_cmd_plot)

    pres = sub.add_parser("presets", help="list built-in scenario presets")
    pres.set_defaults(func=_cmd_presets)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
