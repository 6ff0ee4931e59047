"""Command-line entry point.

Subcommands: `synth` (generate a seeded fixture panel plus config), `ingest`
(intraday bars -> cached daily records), `select` (selection audit only),
`forecast` (full run), `report` (re-aggregate from cached forecasts).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .config import load_config
from .errors import RvTransferError
from .runner import forecast, ingest, report, select
from .synth import write_panel

CONFIG_TEMPLATE = """\
seed = {seed}
output_dir = "out"
m = 22
threads = 1

{targets}
{sources}
[run]
modes = ["TO", "NP", "MTL"]
epsilons = [25.0, 50.0, 75.0]
families = ["har"]
predictor_sets = ["STD"]
periods = ["50"]
include_nf = true
"""


def _synth(args) -> int:
    out = Path(args.out)
    paths = write_panel(
        out,
        n_sources=args.assets,
        source_days=args.days,
        impostor_days=args.impostor_days,
        target_days=args.target_days,
        n_shared=args.shared,
        seed=args.seed,
    )
    target_lines = "\n".join(
        f'[[targets]]\nid = "{aid}"\ndaily_csv = "data/{aid}.csv"\n'
        for aid in sorted(paths) if aid.startswith("T")
    )
    source_lines = "\n".join(
        f'[[sources]]\nid = "{aid}"\ndaily_csv = "data/{aid}.csv"\n'
        for aid in sorted(paths) if aid.startswith("S")
    )
    config_path = out / "config.toml"
    config_path.write_text(
        CONFIG_TEMPLATE.format(seed=args.seed, targets=target_lines, sources=source_lines)
    )
    print(f"wrote {len(paths)} asset files and {config_path}")
    return 0


def _load(args):
    cfg = load_config(args.config)
    if getattr(args, "out", None):
        cfg.output_dir = Path(args.out)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "threads", None):
        cfg.threads = args.threads
    return cfg


def _ingest(args) -> int:
    written = ingest(_load(args), verbose=args.verbose)
    print(f"ingested {len(written)} assets")
    return 0


def _select(args) -> int:
    path = select(_load(args), period_filter=args.period)
    print(f"selection audit -> {path}")
    return 0


def _forecast(args) -> int:
    cfg = _load(args)
    by_period = forecast(cfg, period_filter=args.period, verbose=args.verbose)
    total = sum(len(v) for v in by_period.values())
    print(f"{total} forecast records -> {cfg.output_dir}")
    return 0


def _report(args) -> int:
    report(_load(args), period_filter=args.period)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rvtransfer",
        description="Realized-variance forecasting with DTW-selected multi-source transfer",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a seeded synthetic fixture panel")
    p_synth.add_argument("--out", required=True, help="output directory")
    p_synth.add_argument("--assets", type=int, default=10, help="number of source assets")
    p_synth.add_argument("--days", type=int, default=650, help="source history length")
    p_synth.add_argument("--target-days", type=int, default=160)
    p_synth.add_argument("--impostor-days", type=int, default=250)
    p_synth.add_argument("--shared", type=int, default=4, help="sources sharing target dynamics")
    p_synth.add_argument("--seed", type=int, default=7)
    p_synth.set_defaults(func=_synth)

    def common(p, period=True):
        p.add_argument("--config", required=True, help="TOML experiment config")
        p.add_argument("--out", help="override output directory")
        p.add_argument("--seed", type=int, help="override root seed")
        p.add_argument("--threads", type=int, help="parallel (target, period) tasks")
        p.add_argument("--verbose", action="store_true")
        if period:
            p.add_argument("--period", help="run only this period label")

    p_ingest = sub.add_parser("ingest", help="cache daily records from intraday CSVs")
    common(p_ingest, period=False)
    p_ingest.set_defaults(func=_ingest)

    p_select = sub.add_parser("select", help="emit the subsequence-selection audit only")
    common(p_select)
    p_select.set_defaults(func=_select)

    p_forecast = sub.add_parser("forecast", help="full rolling forecast run")
    common(p_forecast)
    p_forecast.set_defaults(func=_forecast)

    p_report = sub.add_parser("report", help="re-aggregate reports from cached forecasts")
    common(p_report)
    p_report.set_defaults(func=_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except RvTransferError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
