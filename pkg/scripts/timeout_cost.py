#!/usr/bin/env python3
"""Measure the detection cost of crashed inputs under virtual time.

Each crashed input holder costs the round exactly one receive window,
serialized, because the turn order stalls on the lowest missing slot.
The script crashes every subset of users in a farm and prints the
measured round duration next to the m * delta_t prediction.
"""
from __future__ import annotations

import argparse
import itertools

from votefarm.harness import (
    ExperimentSpec,
    FaultKind,
    FaultSpec,
    PipelineSpec,
    StageSpec,
    run_experiment,
)


def measure(n: int, crashed: tuple[int, ...], delta_t: float) -> float:
    spec = ExperimentSpec(
        pipeline=PipelineSpec(stages=(StageSpec(n=n, delta_t=delta_t),)),
        faults=tuple(
            FaultSpec(kind=FaultKind.CRASH_USER, voter=u) for u in crashed
        ),
    )
    report = run_experiment(spec)
    assert report.mean_duration is not None
    return report.mean_duration


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=4)
    parser.add_argument("--delta-t", type=float, default=1.0)
    args = parser.parse_args()

    print(f"{'crashed users':>16} {'m':>2} {'measured':>10} {'predicted':>10}")
    mismatches = 0
    for m in range(args.n):
        for crashed in itertools.combinations(range(1, args.n + 1), m):
            measured = measure(args.n, crashed, args.delta_t)
            predicted = m * args.delta_t
            label = ",".join(map(str, crashed)) or "-"
            tag = ""
            if measured != predicted:
                mismatches += 1
                tag = "  <- off"
            print(f"{label:>16} {m:>2} {measured:>10.4f} {predicted:>10.4f}{tag}")
    if mismatches:
        print(f"{mismatches} subsets deviated from the bound")
        return 1
    print("every subset matched m * delta_t exactly")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
