"""Command line front end.

    jitscan run --trace FILE --rules FILE [options]   replay a trace
    jitscan scan --rules FILE --page FILE             one-shot page scan
    jitscan check-trace FILE                          parse and validate

Exit codes: 0 clean, 1 a kill-severity signature matched, 2 bad input.
"""

from __future__ import annotations

import argparse
import json
import sys

from .agent import SimConfig, replay
from .guard import GuardConfig
from .signatures import RuleSyntaxError, parse_rules, scan_page
from .trace import TraceError, parse_trace


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jitscan",
        description="Replay memory traces under W^X shadow paging and scan "
        "executable pages against byte signatures.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="replay a trace and emit a report")
    run.add_argument("--trace", required=True, help="trace file")
    run.add_argument("--rules", required=True, help="signature rule file")
    run.add_argument("--sync-check", choices=["on", "off"], default="on",
                     help="in-fault-path check of sync rules (default on)")
    run.add_argument("--action", choices=["kill", "block", "alert"], default="kill",
                     help="response to signature detections (default kill)")
    run.add_argument("--threshold", type=int, default=GuardConfig.threshold,
                     help="pending snapshots per uid before a penalty")
    run.add_argument("--ttl-penalty", type=int, default=GuardConfig.ttl_penalty,
                     help="penalty window in ticks")
    run.add_argument("--ttl-evict", type=int, default=GuardConfig.ttl_evict,
                     help="ticks at zero pending before an entry is evicted")
    run.add_argument("--penalty-action", choices=["kill", "block"], default="kill",
                     help="what a throttle denial does to the process")
    run.add_argument("--page-size", type=int, default=4096)
    run.add_argument("--drain-every", type=int, default=1, metavar="N",
                     help="agent drains after every Nth event; 0 disables")
    run.add_argument("--report", help="write the report here instead of stdout")
    run.add_argument("--debug-suppress-tlb-flush", action="store_true",
                     help=argparse.SUPPRESS)

    scan = sub.add_parser("scan", help="scan one page image against the rules")
    scan.add_argument("--rules", required=True)
    scan.add_argument("--page", required=True, help="page image (at most one page)")
    scan.add_argument("--page-size", type=int, default=4096)

    check = sub.add_parser("check-trace", help="parse and validate a trace file")
    check.add_argument("trace", help="trace file")
    check.add_argument("--page-size", type=int, default=4096)
    return parser


def _read(path: str) -> str:
    with open(path, "r", encoding="utf-8") as handle:
        return handle.read()


def _cmd_run(args) -> int:
    try:
        rules = parse_rules(_read(args.rules), page_size=args.page_size)
    except (OSError, RuleSyntaxError, ValueError) as exc:
        print(f"jitscan: rules: {exc}", file=sys.stderr)
        return 2
    try:
        lines = parse_trace(_read(args.trace), page_size=args.page_size)
    except (OSError, TraceError) as exc:
        print(f"jitscan: trace: {exc}", file=sys.stderr)
        return 2
    if args.drain_every < 0:
        print("jitscan: --drain-every must be >= 0", file=sys.stderr)
        return 2
    config = SimConfig(
        page_size=args.page_size,
        sync_check=args.sync_check == "on",
        detection_action=args.action,
        suppress_tlb_flush=args.debug_suppress_tlb_flush,
        drain_every=args.drain_every,
        guard=GuardConfig(
            threshold=args.threshold,
            penalty_action=args.penalty_action,
            ttl_penalty=args.ttl_penalty,
            ttl_evict=args.ttl_evict,
        ),
    )
    report = replay(lines, rules, config)
    payload = report.emit("jsonl")
    if args.report:
        with open(args.report, "wb") as handle:
            handle.write(payload)
        print(
            f"jitscan: {report.metrics['events']} events, "
            f"{report.metrics['detections']} detections -> {args.report}",
            file=sys.stderr,
        )
    else:
        sys.stdout.buffer.write(payload)
        sys.stdout.buffer.flush()
    return 1 if report.any_kill_detection else 0


def _cmd_scan(args) -> int:
    try:
        rules = parse_rules(_read(args.rules), page_size=args.page_size)
    except (OSError, RuleSyntaxError, ValueError) as exc:
        print(f"jitscan: rules: {exc}", file=sys.stderr)
        return 2
    try:
        with open(args.page, "rb") as handle:
            image = handle.read()
    except OSError as exc:
        print(f"jitscan: page: {exc}", file=sys.stderr)
        return 2
    if len(image) > args.page_size:
        print(
            f"jitscan: page image is {len(image)} bytes, larger than one "
            f"{args.page_size}-byte page",
            file=sys.stderr,
        )
        return 2
    result = scan_page(image.ljust(args.page_size, b"\x00"), rules)
    exit_kill = False
    for match in result.matches:
        rule = rules.by_name[match.rule]
        exit_kill = exit_kill or rule.severity == "kill"
        print(json.dumps(
            {"record": "match", "rule": rule.name, "family": rule.family,
             "severity": rule.severity, "offset": match.offset},
            sort_keys=True, separators=(",", ":"),
        ))
    print(json.dumps(
        {"record": "summary", "matches": len(result.matches)},
        sort_keys=True, separators=(",", ":"),
    ))
    return 1 if exit_kill else 0


def _cmd_check(args) -> int:
    try:
        lines = parse_trace(_read(args.trace), page_size=args.page_size)
    except (OSError, TraceError) as exc:
        print(f"jitscan: trace: {exc}", file=sys.stderr)
        return 2
    print(f"ok: {len(lines)} events")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "scan":
        return _cmd_scan(args)
    return _cmd_check(args)


if __name__ == "__main__":
    sys.exit(main())
