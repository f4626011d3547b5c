"""Metrics in isolation: pass^k, complexity stratification, and the context
cost of the two ablation modes on the same scripted run.

Run from the repo root:  python demos/metrics_walkthrough.py
"""

import dataclasses
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from delegator import fixtures
from delegator.harness import RunConfig, pass_hat_k, run_task_once, task_from_obj


def main():
    print("pass^k for n=4 runs as successes c vary:")
    print(f"{'c':>3} " + " ".join(f"{f'k={k}':>8}" for k in (1, 2, 3, 4)))
    for c in range(5):
        row = " ".join(f"{pass_hat_k(4, c, k):>8.4f}" for k in (1, 2, 3, 4))
        print(f"{c:>3} {row}")
    print("\n(success rate >= 75% stratifies Low, <= 25% High, Medium between)")

    task = task_from_obj(fixtures.pricing_task_obj())
    task = dataclasses.replace(task, scripted_policy="pricing_plain")
    print("\nplanner context cost of the same scripted run, per mode:")
    for mode in ("full", "no_epss", "single_agent"):
        record, _result = run_task_once(task, RunConfig(mode=mode), seed=0)
        print(f"  {mode:<13} context_chars={record.context_chars:>8} "
              f"success={record.success}")
    print("\nfull mode stays flat because artifact values never enter the "
          "planner's context; the ablations inline printed values or shared "
          "traces and pay for it.")


if __name__ == "__main__":
    main()
