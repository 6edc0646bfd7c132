"""``ztsim`` command line.

Exit status: 0 pass, 1 policy-negative outcome (denied request, violations,
findings at or above the threshold), 2 input error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Any, Sequence, TextIO

import jsonschema

from .engine import DEFAULT_NOW, ConnectionRequest, Decision, Evaluator, ReachabilityMatrix, connection_matrix, explain
from .errors import ScenarioError, ZtsimError
from .lint import Severity, failing, lint
from .scenario import Scenario, check_scenario, load_schema, load_scenario, parse_timestamp, read_scenario_paths

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_INPUT = 2

_GREEN, _RED, _YELLOW, _RESET = "\033[32m", "\033[31m", "\033[33m", "\033[0m"


def dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def use_color(stream: TextIO) -> bool:
    return "NO_COLOR" not in os.environ and hasattr(stream, "isatty") and stream.isatty()


def paint(text: str, color: str, on: bool) -> str:
    return f"{color}{text}{_RESET}" if on else text


def _status_color(status: str) -> str:
    return {"200": _GREEN, "403": _YELLOW}.get(status, _RED)


# -- rendering -------------------------------------------------------------------

def render_decision(d: Decision, color: bool = False) -> str:
    lines = [paint(d.status, _status_color(d.status), color), f"verdict: {d.verdict.value}  channel: {d.channel}"]
    lines.append(explain(d))
    return "\n".join(lines) + "\n"


def render_matrix(m: ReachabilityMatrix, color: bool = False) -> str:
    corner = f"port {m.port}/{m.protocol}"
    first = max([len(corner), *map(len, m.rows)])
    widths = [max(len(c), 9) for c in m.cols]
    out = ["  ".join([corner.ljust(first), *(c.ljust(w) for c, w in zip(m.cols, widths))]).rstrip()]
    for r, row in zip(m.rows, m.cells):
        cells = [paint(cell.label.ljust(w), _status_color(cell.status), color) for cell, w in zip(row, widths)]
        out.append("  ".join([r.ljust(first), *cells]).rstrip())
    return "\n".join(out) + "\n"


def render_findings(findings, threshold: Severity) -> str:
    if not findings:
        return "no findings\n"
    lines = [f"{f.severity.value:<8} {f.rule}  {f.path}: {f.message}" for f in findings]
    n = len(failing(findings, threshold))
    lines.append(f"{len(findings)} finding(s), {n} at or above {threshold.value}")
    return "\n".join(lines) + "\n"


# -- commands ----------------------------------------------------------------------

def _paths(args) -> list[str]:
    paths = list(args.scenario or []) + list(getattr(args, "paths", None) or [])
    if not paths:
        raise ZtsimError("no scenario given (use --scenario PATH)")
    return paths


def _load(args) -> Scenario:
    return load_scenario(read_scenario_paths(_paths(args)), lax=args.lax)


def cmd_validate(args, out: TextIO) -> int:
    doc = read_scenario_paths(_paths(args))
    _, violations = check_scenario(doc, lax=args.lax)
    if args.output == "json":
        out.write(dumps({"valid": not violations, "violations": [v.to_dict() for v in violations]}))
    elif violations:
        out.write("".join(f"{v}\n" for v in violations))
    else:
        out.write("valid\n")
    return EXIT_NEGATIVE if violations else EXIT_OK


def _inline_request(args) -> ConnectionRequest:
    http = args.protocol == "HTTP"
    return ConnectionRequest(
        source=args.source,
        destination=args.to,
        port=args.port,
        protocol=args.protocol,
        method=(args.method or "GET") if http else None,
        path=(args.path or "/") if http else None,
        origin=args.origin,
        address=args.address,
        host=args.host,
        source_address=args.source_address,
    )


def cmd_simulate(args, out: TextIO) -> int:
    scenario = _load(args)
    if args.request:
        req = scenario.request(args.request)
    else:
        if args.port is None:
            raise ZtsimError("simulate needs --request NAME or --port with --from/--to")
        try:
            req = _inline_request(args)
        except ValueError as exc:
            raise ZtsimError(f"invalid request: {exc}") from None
    d = Evaluator(scenario.topology, scenario.policies, args.now).evaluate(req)
    if args.output == "json":
        out.write(dumps(d.to_dict()))
    else:
        out.write(render_decision(d, use_color(out)))
    return EXIT_OK if d.allowed else EXIT_NEGATIVE


def cmd_matrix(args, out: TextIO) -> int:
    scenario = _load(args)
    m = connection_matrix(scenario.topology, scenario.policies, args.port, args.protocol,
                          method=args.method, path=args.path, now=args.now, workers=args.workers)
    if args.output == "json":
        out.write(dumps(m.to_dict()))
    else:
        out.write(render_matrix(m, use_color(out)))
    return EXIT_OK


def cmd_lint(args, out: TextIO) -> int:
    scenario = _load(args)
    threshold = Severity(args.threshold)
    findings = lint(scenario.topology, scenario.policies)
    failed = bool(failing(findings, threshold))
    if args.output == "json":
        out.write(dumps({"findings": [f.to_dict() for f in findings], "threshold": threshold.value, "failed": failed}))
    else:
        out.write(render_findings(findings, threshold))
    return EXIT_NEGATIVE if failed else EXIT_OK


def cmd_explain(args, out: TextIO) -> int:
    path = Path(args.decision)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ZtsimError(f"cannot read {path}: {exc.strerror}") from None
    except ValueError as exc:
        raise ZtsimError(f"cannot parse {path}: {exc}") from None
    try:
        jsonschema.validate(doc, load_schema("decision"))
        d = Decision.from_dict(doc)
    except (jsonschema.ValidationError, ValueError) as exc:
        raise ZtsimError(f"{path} is not a decision: {getattr(exc, 'message', exc)}") from None
    if args.output == "json":
        out.write(dumps(d.to_dict()))
    else:
        out.write(render_decision(d, use_color(out)))
    return EXIT_OK if d.allowed else EXIT_NEGATIVE


# -- parser --------------------------------------------------------------------------

def _timestamp(text: str):
    try:
        return parse_timestamp(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", action="append", metavar="PATH", help="scenario file or directory (repeatable; merged in order)")
    common.add_argument("--output", choices=("table", "json"), default="table")
    common.add_argument("--lax", action="store_true", help="accept unknown keys in scenario documents")
    common.add_argument("--now", type=_timestamp, default=DEFAULT_NOW, metavar="ISO8601",
                        help=f"evaluation instant (default {DEFAULT_NOW.isoformat()})")

    parser = argparse.ArgumentParser(prog="ztsim", description="Zero-trust micro-segmentation simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="check a scenario for schema and invariant violations")
    p.add_argument("paths", nargs="*", metavar="PATH")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("simulate", parents=[common], help="evaluate one connection request")
    p.add_argument("--request", metavar="NAME", help="named request from the scenario")
    p.add_argument("--from", dest="source", metavar="NS/WORKLOAD")
    p.add_argument("--to", metavar="NS/SERVICE")
    p.add_argument("--address", metavar="IPV4", help="literal destination address")
    p.add_argument("--host", help="external host (internet-bound) or public host (internet origin)")
    p.add_argument("--source-address", metavar="IPV4", help="client address for internet-origin requests")
    p.add_argument("--port", type=int)
    p.add_argument("--protocol", choices=("TCP", "HTTP"), default="HTTP")
    p.add_argument("--method")
    p.add_argument("--path")
    p.add_argument("--origin", choices=("internal", "internet"), default="internal")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("matrix", parents=[common], help="all-pairs reachability on one port")
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--protocol", choices=("TCP", "HTTP"), default="HTTP")
    p.add_argument("--method", default="GET")
    p.add_argument("--path", default="/")
    p.add_argument("--workers", type=int, default=1, help="evaluate cells on this many threads")
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("lint", parents=[common], help="zero-trust posture audit")
    p.add_argument("--threshold", choices=[s.value for s in Severity], default="warning",
                   help="lowest severity that fails the run")
    p.set_defaults(func=cmd_lint)

    p = sub.add_parser("explain", parents=[common], help="re-render a stored decision JSON")
    p.add_argument("decision", metavar="DECISION_JSON")
    p.set_defaults(func=cmd_explain)
    return parser


def main(argv: Sequence[str] | None = None, out: TextIO | None = None, err: TextIO | None = None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except ScenarioError as exc:
        err.write("".join(f"error: {v}\n" for v in exc.violations))
    except ZtsimError as exc:
        err.write(f"error: {exc}\n")
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
