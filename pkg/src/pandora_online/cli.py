"""Command line: run, report, oracle, validate.

Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or input.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness, oracle
from .config import ConfigError, load_config
from .core import family_from_json


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="experiment JSON")
    p.add_argument("--seeds", type=lambda s: [int(v) for v in s.split(",")], help="comma separated seeds")
    p.add_argument("--replicas", type=int)
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted key into the config, value parsed as JSON (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pandora-online", description="online Pandora's box experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run replicas and write ledgers and a summary")
    _common(run)
    run.add_argument("--out", required=True)
    rep = sub.add_parser("report", help="tables and charts from results files")
    rep.add_argument("results", nargs="+")
    rep.add_argument("--out", required=True)
    orc = sub.add_parser("oracle", help="precompute benchmark fixtures")
    _common(orc)
    orc.add_argument("--out", required=True)
    val = sub.add_parser("validate", help="schema check only")
    _common(val)
    return ap


def _load(args):
    return load_config(args.config, overrides=args.override, seeds=args.seeds, replicas=args.replicas)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            cfg = _load(args)
            print(f"{args.config}: ok ({cfg.hash()})")
            return 0
        if args.command == "run":
            cfg = _load(args)
            summary = harness.run_experiment(cfg, args.out)
            print(json.dumps(summary["rows"], indent=1, default=str))
            return 0
        if args.command == "oracle":
            cfg = _load(args)
            family = family_from_json(cfg.doc["family"])
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            for T in cfg.horizons:
                seq = harness.build_sequence(cfg, T)
                path = out / f"fixture_T{seq.T}.json"
                oracle.export_fixture(path, seq, family)
                print(path)
            return 0
        if args.command == "report":
            res = harness.report(args.results, args.out)
            print(f"{len(res['runs'])} runs, slope {res['slope']}")
            return 0
    except (ConfigError, harness.ReportError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failure
        print(f"runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
