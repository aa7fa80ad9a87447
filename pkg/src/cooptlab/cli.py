"""Command line interface.

    cooptlab scenarios --market RiskH            scenario table as CSV
    cooptlab solve --system LL --market WindL    one or both models
    cooptlab sweep --csv out.csv --svg-dir figs  the 5 x 8 x 2 grid
    cooptlab my-sweep --system HL --market FiPL --from 0.15 --to 0.60 --steps 46
    cooptlab plot --csv out.csv --out-dir figs   charts from a results CSV

Exit codes: 0 every solve optimal, 2 some solve not optimal (results are
still written), 1 usage or I/O error.
"""

from __future__ import annotations

import argparse
import sys

from . import harness
from .presets import MARKET_PRESETS, SYSTEM_PRESETS, ConfigError, load_config
from .scenarios import build_scenarios

EXIT_OK, EXIT_USAGE, EXIT_NONOPTIMAL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cooptlab", description="Co-optimized versus separately cleared "
                                              "energy-and-reserve markets.")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def add_config(sp):
        sp.add_argument("--config", help="TOML file overriding preset values")

    sc = sub.add_parser("scenarios", help="print the wind scenario table")
    group = sc.add_mutually_exclusive_group(required=True)
    group.add_argument("--market", choices=list(MARKET_PRESETS))
    group.add_argument("--mu", type=float, help="mean wind load factor, p.u.")
    sc.add_argument("--n", type=int, default=12, help="number of scenarios")
    sc.add_argument("--out", help="output file (default stdout)")

    so = sub.add_parser("solve", help="solve one system/market pair")
    so.add_argument("--system", required=True, choices=list(SYSTEM_PRESETS))
    so.add_argument("--market", required=True, choices=list(MARKET_PRESETS))
    so.add_argument("--model", choices=["COM", "EQM", "both"], default="both")
    so.add_argument("--format", choices=["csv", "json"], default="csv")
    so.add_argument("--out", help="output file (default stdout)")
    so.add_argument("--timing", action="store_true", help="fill the wall_ms column")
    add_config(so)

    sw = sub.add_parser("sweep", help="solve every system x market x model triple")
    sw.add_argument("--systems", nargs="+", choices=list(SYSTEM_PRESETS))
    sw.add_argument("--markets", nargs="+", choices=list(MARKET_PRESETS))
    sw.add_argument("--models", nargs="+", choices=list(harness.MODELS), default=list(harness.MODELS))
    sw.add_argument("--jobs", type=int, default=0, help="worker processes (0: all cores)")
    sw.add_argument("--csv", help="results CSV path")
    sw.add_argument("--json", help="results JSON path")
    sw.add_argument("--svg-dir", help="directory for one chart per system")
    sw.add_argument("--timing", action="store_true", help="fill the wall_ms column")
    add_config(sw)

    ms = sub.add_parser("my-sweep", help="sweep the wind reserve factor My and flag jumps")
    ms.add_argument("--system", required=True, choices=list(SYSTEM_PRESETS))
    ms.add_argument("--market", required=True, choices=list(MARKET_PRESETS))
    ms.add_argument("--from", dest="start", type=float, required=True)
    ms.add_argument("--to", dest="stop", type=float, required=True)
    ms.add_argument("--steps", type=int, required=True)
    ms.add_argument("--model", choices=list(harness.MODELS), default="EQM")
    ms.add_argument("--csv", help="results CSV path")
    ms.add_argument("--timing", action="store_true", help="fill the wall_ms column")
    add_config(ms)

    pl = sub.add_parser("plot", help="draw charts from a results CSV")
    pl.add_argument("--csv", required=True)
    pl.add_argument("--out-dir", required=True)
    return p


def _write(text: str, path: str | None):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _status(rows) -> int:
    return EXIT_OK if all(r.ok for r in rows) else EXIT_NONOPTIMAL


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = load_config(args.config) if getattr(args, "config", None) else {}
        if args.verb == "scenarios":
            mu = MARKET_PRESETS[args.market][0] if args.market else args.mu
            _write(build_scenarios(mu, n=args.n).to_csv(), args.out)
            return EXIT_OK
        if args.verb == "solve":
            models = harness.MODELS if args.model == "both" else (args.model,)
            plan = harness.ExperimentPlan(
                tasks=[harness.Task(args.system, args.market, m) for m in models],
                parallelism=1, config=config, timing=args.timing)
            rows = harness.run_sweep(plan)
            text = harness.to_csv(rows) if args.format == "csv" else harness.to_json(rows)
            _write(text, args.out)
            return _status(rows)
        if args.verb == "sweep":
            plan = harness.ExperimentPlan.full(
                systems=args.systems, markets=args.markets, models=args.models,
                csv_path=args.csv, json_path=args.json, svg_dir=args.svg_dir,
                parallelism=args.jobs, config=config, timing=args.timing)
            rows = harness.run_sweep(plan)
            if not (args.csv or args.json):
                sys.stdout.write(harness.to_csv(rows))
            return _status(rows)
        if args.verb == "my-sweep":
            res = harness.my_sweep(args.system, args.market, args.start, args.stop, args.steps,
                                   model=args.model, config=config, timing=args.timing)
            if args.csv:
                harness.emit(res.rows, "csv", args.csv)
            print(res.report())
            return _status(res.rows)
        if args.verb == "plot":
            records = harness.read_csv(args.csv)
            for path in harness.emit(records, "svg", args.out_dir):
                print(path)
            return EXIT_OK
    except (OSError, ConfigError, ValueError, KeyError) as exc:
        print(f"cooptlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
