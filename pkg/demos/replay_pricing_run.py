"""Walk through one full delegation run, end to end.

A scripted planner decomposes the pricing task into three subtasks, each
worker runs in its own isolated session, and only typed messages travel
between the two sides. Watch the planner's context stay small while the
workers churn through cells.

Run from the repo root:  python demos/replay_pricing_run.py
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from delegator import fixtures
from delegator.harness import RunConfig, run_task_once, task_from_obj


def main():
    task = task_from_obj(fixtures.pricing_task_obj())
    print(f"task: {task.statement}\n")

    record, result = run_task_once(task, RunConfig(), seed=0)

    print("protocol events:")
    for kind, sid in result.trace.events:
        print(f"  {kind:<8} {sid}")

    print("\nfinal planner context (the planner never saw more than this):")
    print(result.workspace.planning_context())

    print("journal, message by message:")
    for entry in result.workspace.journal:
        preview = entry.payload[:96].replace("\n", " ")
        print(f"  #{entry.seq:<3} {entry.kind:<16} {entry.subtask_id or '-':<4} {preview}")

    clean, ann = result.workspace.resolve("df_clean")
    print(f"\ndf_clean: {ann.kind} {ann.shape[0]}x{ann.shape[1]}")
    print(f"outcome: {type(result.outcome).__name__}, success check passed: {record.success}")
    print(f"dispatches={record.dispatches} coder_cells={record.coder_iterations} "
          f"planner_context_chars={record.context_chars}")


if __name__ == "__main__":
    main()
