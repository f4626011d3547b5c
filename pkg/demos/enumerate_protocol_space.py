"""Explore the dispatch/retry/replan state space.

The oracle replays the protocol over scripted outcome tables; here we
enumerate a bounded slice of that space, show the outcome distribution, and
spot-check the real engine against the oracle on a sample.

Run from the repo root:  python demos/enumerate_protocol_space.py
"""

import os
import random
import sys
from collections import Counter

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from delegator.conformance import check_scenario
from delegator.oracle import conformance_oracle, enumerate_scenarios


def main():
    scenarios = list(enumerate_scenarios(max_subtasks=2))
    outcomes = Counter()
    events = Counter()
    for sc in scenarios:
        (tag, _detail), evs = conformance_oracle(sc)
        outcomes[tag] += 1
        for kind, _sid in evs:
            events[kind] += 1

    print(f"scenarios with up to 2 subtasks: {len(scenarios)}")
    print("\noutcome distribution:")
    for tag, n in outcomes.most_common():
        print(f"  {tag:<16} {n}")
    print("\nevent totals across the space:")
    for kind, n in events.most_common():
        print(f"  {kind:<10} {n}")

    sample = random.Random(0).sample(scenarios, 200)
    mismatches = [detail for sc in sample for ok, detail in [check_scenario(sc)] if not ok]
    print(f"\nengine vs oracle on a 200-scenario sample: "
          f"{len(sample) - len(mismatches)}/{len(sample)} matched")
    for detail in mismatches[:3]:
        print(f"  {detail}")


if __name__ == "__main__":
    main()
