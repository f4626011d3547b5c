"""Command-line harness.

Subcommands: run (execute a suite against a config), report (re-render
records), oracle (enumerate the bounded conformance space, optionally
verifying the engine against it), fixture (emit the pricing golden scenario
as a suite file). Exit codes for run: 0 completed, 1 failure, 2 budget
exceeded, 3 engine error — a suite exits with the worst outcome seen.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .conformance import check_scenario
from .harness import (
    RunConfig,
    load_suite,
    read_records,
    report_text,
    run_suite,
    SuiteLoadError,
)
from .oracle import conformance_oracle, enumerate_scenarios


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="delegator",
        description="Planner/worker delegation runtime with an isolated execution layer.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a task suite")
    p_run.add_argument("--suite", required=True, help="suite JSON file")
    p_run.add_argument("--config", help="run config JSON file")
    p_run.add_argument("--out", help="output directory for records and report")

    p_report = sub.add_parser("report", help="render a report from records")
    p_report.add_argument("--records", required=True, help="records JSONL file")
    p_report.add_argument("--out", help="write the report here instead of stdout")

    p_oracle = sub.add_parser("oracle", help="enumerate the conformance space")
    p_oracle.add_argument("--max-subtasks", type=int, default=3)
    p_oracle.add_argument("--verify", action="store_true",
                          help="also run the engine on every scenario")
    p_oracle.add_argument("--limit", type=int, default=0,
                          help="stop after this many scenarios (0 = all)")

    p_fixture = sub.add_parser("fixture", help="emit the pricing golden scenario")
    p_fixture.add_argument("--out", help="directory to write suite.json into")

    args = parser.parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "report":
        return _cmd_report(args)
    if args.command == "oracle":
        return _cmd_oracle(args)
    return _cmd_fixture(args)


def _cmd_run(args) -> int:
    try:
        suite = load_suite(args.suite)
        config = RunConfig.from_file(args.config) if args.config else RunConfig()
        records, report = run_suite(suite, config, out_dir=args.out)
    except SuiteLoadError as exc:
        print(f"suite error: {exc}", file=sys.stderr)
        return 3
    print(report, end="")
    worst = 0
    for r in records:
        code = {"Completed": 0, "Failure": 1, "BudgetExceeded": 2}.get(r.outcome_kind, 3)
        worst = max(worst, code)
    return worst


def _cmd_report(args) -> int:
    records = read_records(args.records)
    report = report_text(records)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(report)
    else:
        print(report, end="")
    return 0


def _cmd_oracle(args) -> int:
    counts: dict = {}
    total = 0
    failures = 0
    for sc in enumerate_scenarios(max_subtasks=args.max_subtasks):
        total += 1
        (tag, _detail), _events = conformance_oracle(sc)
        counts[tag] = counts.get(tag, 0) + 1
        if args.verify:
            ok, detail = check_scenario(sc)
            if not ok:
                failures += 1
                print(f"MISMATCH: {detail}", file=sys.stderr)
        if args.limit and total >= args.limit:
            break
    print(f"scenarios: {total}")
    for tag in sorted(counts):
        print(f"  {tag}: {counts[tag]}")
    if args.verify:
        print(f"engine mismatches: {failures}")
        return 1 if failures else 0
    return 0


def _cmd_fixture(args) -> int:
    from .fixtures import pricing_task_obj

    doc = {"suite": "pricing_golden", "tasks": [pricing_task_obj()]}
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "suite.json")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {path}")
    else:
        print(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
