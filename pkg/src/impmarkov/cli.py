"""Command line: ``impmarkov run | hasse | fixtures``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .errors import ConfigError
from .fixtures import ENV_VAR, scan
from .harness import run
from .poset import OrderReport, export_hasse


def _cmd_run(args) -> int:
    try:
        code = run(args.config, args.out, seed=args.seed, parallel=args.parallel)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    summary = json.loads((Path(args.out) / "summary.json").read_text())
    for task in summary["tasks"]:
        status = "PASS" if task["pass"] else "FAIL"
        line = f"{status}  {task['id']:<24} {task['type']}"
        if task["error"]:
            line += f"  ({task['error']})"
        print(line)
    print(f"{summary['passed']} passed, {summary['failed']} failed; reports in {args.out}")
    return code


def _cmd_hasse(args) -> int:
    try:
        data = json.loads(Path(args.report).read_text(encoding="utf-8"))
        report = OrderReport.from_dict(data.get("result", data))
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        print(f"cannot read order report {args.report}: {exc}", file=sys.stderr)
        return 2
    edges = export_hasse(report, args.out)
    print(f"wrote {args.out}: {len(report.classes)} nodes, {edges} edges")
    return 0


def _cmd_fixtures(args) -> int:
    rows = scan()
    broken = 0
    for row in rows:
        kind = row["kind"] or "?"
        line = f"{row['name']:<22} {kind:<11} {row['source']:<8} {row['provenance']}"
        if row["error"]:
            broken += 1
            line = f"{row['name']:<22} {'?':<11} {row['source']:<8} [{row['error']}]"
        print(line)
    print(f"{len(rows)} fixtures ({broken} unreadable)")
    return 1 if broken and args.strict else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="impmarkov", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the tasks of an experiment config")
    p.add_argument("--config", required=True, help="experiment JSON")
    p.add_argument("--out", required=True, help="output directory for reports")
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("--parallel", type=int, default=1, metavar="N", help="run up to N tasks at once")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("hasse", help="Graphviz DOT from an order report")
    p.add_argument("--report", required=True, help="order task JSON written by run")
    p.add_argument("--out", required=True, help="DOT file to write")
    p.set_defaults(func=_cmd_hasse)

    p = sub.add_parser("fixtures", help=f"list bundled fixtures (plus ${ENV_VAR})")
    p.add_argument("--strict", action="store_true", help="exit nonzero if any fixture is unreadable")
    p.set_defaults(func=_cmd_fixtures)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
