"""Command line front end.

Exit status: 0 when the requested run finished and its outcome assertion
held, 1 when the experiment ran but the final stage failed to agree on a
single voted value, 2 for usage or specification errors.
"""

from __future__ import annotations

import argparse
import itertools
import json
import sys

from .client import World
from .core import AlgorithmId, ValueSlot, VoteKind, VoteValue
from .harness import (
    ExperimentSpec,
    FaultKind,
    FaultSpec,
    PipelineSpec,
    Report,
    SpecError,
    StageSpec,
    bench,
    census_check,
    oracle_vote,
    run_experiment,
    run_pipeline,
    spec_from_json,
)
from .sim import REAL, VIRTUAL
from .voting import euclidean_metric, vote

_ALGORITHMS = {
    "majority": VoteKind.MAJORITY,
    "median": VoteKind.MEDIAN,
    "plurality": VoteKind.PLURALITY,
    "weighted-average": VoteKind.WEIGHTED_AVERAGE,
    "weighted_average": VoteKind.WEIGHTED_AVERAGE,
}


def _parse_fault(text: str) -> FaultSpec:
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise SpecError([f"fault {text!r} is not kind:target[:param]"])
    kind_text = parts[0].replace("-", "_").lower()
    try:
        kind = FaultKind(kind_text)
    except ValueError:
        names = ", ".join(k.value for k in FaultKind)
        raise SpecError([f"unknown fault kind {parts[0]!r} (one of {names})"])
    target = parts[1]
    try:
        if "." in target:
            stage_text, voter_text = target.split(".", 1)
            stage, voter = int(stage_text), int(voter_text)
        else:
            stage, voter = 1, int(target)
    except ValueError:
        raise SpecError([f"fault target {target!r} is not voter or stage.voter"])
    fault = FaultSpec(kind, voter=voter, stage=stage)
    if len(parts) == 2:
        return fault
    param = parts[2]
    try:
        if kind is FaultKind.CORRUPT_INPUT:
            return FaultSpec(kind, voter, stage, pattern=bytes.fromhex(param))
        if kind is FaultKind.DELAY_MESSAGE:
            return FaultSpec(kind, voter, stage, delay=float(param))
        if kind is FaultKind.DROP_MESSAGE:
            return FaultSpec(kind, voter, stage, index=int(param))
    except ValueError:
        raise SpecError([f"bad parameter {param!r} for {kind.value}"])
    raise SpecError([f"{kind.value} takes no parameter, got {param!r}"])


def _parse_input(text: str) -> VoteValue:
    try:
        return VoteValue.from_floats([float(p) for p in text.split(",")])
    except ValueError:
        raise SpecError([f"input {text!r} is not a comma-separated float list"])


def _spec_from_args(args, stage_count: int) -> ExperimentSpec:
    inline_used = (
        args.n is not None
        or args.inputs
        or args.faults
        or args.algorithm != "majority"
        or args.epsilon != 0.0
        or args.scaling != 1.0
        or args.delta_t != 1.0
        or args.metric != "default"
    )
    if args.spec is not None:
        if inline_used:
            raise SpecError(["--spec excludes the inline experiment flags"])
        try:
            with open(args.spec, "r", encoding="utf-8") as fh:
                obj = json.load(fh)
        except OSError as exc:
            raise SpecError([f"cannot read {args.spec}: {exc}"])
        except json.JSONDecodeError as exc:
            raise SpecError([f"{args.spec} is not JSON: {exc}"])
        return spec_from_json(obj)

    n = 3 if args.n is None else args.n
    stage = StageSpec(
        n=n,
        algorithm=_ALGORITHMS[args.algorithm],
        epsilon=args.epsilon,
        scaling=args.scaling,
        delta_t=args.delta_t,
    )
    stages = tuple(stage for _ in range(stage_count))
    return ExperimentSpec(
        pipeline=PipelineSpec(stages),
        inputs=tuple(_parse_input(t) for t in args.inputs) or None,
        faults=tuple(_parse_fault(t) for t in args.faults),
        seed=args.seed,
        clock=args.clock,
        repetitions=args.repetitions,
        metric=args.metric,
    )


def _emit(report: Report, args) -> None:
    text = report.to_csv() if args.output == "csv" else report.to_json()
    if args.output_path is None:
        sys.stdout.write(text)
    else:
        with open(args.output_path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _agreement_holds(report: Report) -> bool:
    """Every live final-stage voter produced the same voted value."""
    last = max(v.stage for r in report.repetitions for v in r.voters)
    for rep in report.repetitions:
        finals = [v for v in rep.voters if v.stage == last and v.live]
        if not finals:
            return False
        values = set()
        for v in finals:
            if v.outcome is None or not v.outcome.ok:
                return False
            values.add(v.outcome.value.data)
        if len(values) != 1:
            return False
    return True


def _cmd_run(args, stage_count_flag: bool) -> int:
    stage_count = getattr(args, "stages", 1) if stage_count_flag else 1
    spec = _spec_from_args(args, stage_count)
    report = run_pipeline(spec) if stage_count_flag else run_experiment(spec)
    _emit(report, args)
    if not _agreement_holds(report):
        print("assertion failed: final stage did not agree on one value",
              file=sys.stderr)
        return 1
    return 0


def _cmd_bench(args) -> int:
    try:
        n_values = tuple(int(p) for p in args.n_values.split(","))
    except ValueError:
        raise SpecError([f"--n-values {args.n_values!r} is not an int list"])
    if not n_values or any(n < 1 for n in n_values):
        raise SpecError(["--n-values needs positive farm sizes"])
    rows = bench(
        n_values=n_values,
        repetitions=args.repetitions,
        delta_t=args.delta_t,
        include_warmup=args.include_warmup,
    )
    if args.output == "csv":
        lines = ["n,repetitions,mean_duration,stddev_duration"]
        lines += [
            f"{r.n},{r.repetitions},{r.mean_duration!r},{r.stddev_duration!r}"
            for r in rows
        ]
        text = "\n".join(lines) + "\n"
    else:
        text = json.dumps(
            [
                {
                    "n": r.n,
                    "repetitions": r.repetitions,
                    "mean_duration": r.mean_duration,
                    "stddev_duration": r.stddev_duration,
                }
                for r in rows
            ],
            indent=2,
            sort_keys=True,
        ) + "\n"
    if args.output_path is None:
        sys.stdout.write(text)
    else:
        with open(args.output_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return 0


def _selftest_oracle() -> tuple[int, int]:
    checked = failed = 0
    pool = [None] + [VoteValue.from_floats([float(x)]) for x in (0, 1, 2)]
    for n in range(1, 5):
        for combo in itertools.product(pool, repeat=n):
            slots = tuple(
                ValueSlot(i, v is not None, v)
                if v is not None
                else ValueSlot.invalidated(i)
                for i, v in enumerate(combo, start=1)
            )
            for kind in VoteKind:
                got = vote(AlgorithmId(kind, 0.0, 1.0), slots, euclidean_metric)
                want = oracle_vote(kind, combo, metric="euclidean")
                checked += 1
                if got.ok != want.ok:
                    failed += 1
                elif got.ok and got.value.data != want.value.data:
                    failed += 1
                elif not got.ok and got.failure != want.failure:
                    failed += 1
    return checked, failed


def _selftest_census() -> tuple[int, int]:
    checked = failed = 0
    for n in range(1, 9):
        world = World(VIRTUAL)
        world.activate_farm(f"farm{n}", tuple(range(1, n + 1)))
        result = census_check(world.fabric, n)
        checked += 1
        if not result.passed:
            failed += 1
            print(result.detail(), file=sys.stderr)
    return checked, failed


def _cmd_selftest(args) -> int:
    oc, of = _selftest_oracle()
    print(f"oracle equivalence: {oc - of}/{oc} checks passed")
    cc, cf = _selftest_census()
    print(f"farm census: {cc - cf}/{cc} sizes passed")
    return 0 if of == 0 and cf == 0 else 1


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, default=None, help="voters per stage")
    p.add_argument(
        "--algorithm",
        choices=sorted(_ALGORITHMS),
        default="majority",
    )
    p.add_argument("--epsilon", type=float, default=0.0)
    p.add_argument("--scaling", type=float, default=1.0)
    p.add_argument("--delta-t", dest="delta_t", type=float, default=1.0)
    p.add_argument(
        "--metric",
        default="default",
        help="registered distance name (default: byte equality)",
    )
    p.add_argument(
        "--input",
        dest="inputs",
        action="append",
        default=[],
        metavar="V[,V...]",
        help="one user input (repeat per user; comma-separated components)",
    )
    p.add_argument(
        "--fault",
        "--faults",
        dest="faults",
        action="append",
        default=[],
        metavar="KIND:TARGET[:PARAM]",
        help="inject a fault, e.g. crash_user:2 or corrupt_input:1.3:ff",
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--clock", choices=(VIRTUAL, REAL), default=VIRTUAL)
    p.add_argument("--spec", default=None, help="JSON spec path (excludes inline flags)")


def _add_output_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--output", choices=("json", "csv"), default="json")
    p.add_argument("--output-path", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="votefarm",
        description="Run redundant voting farms and pipelines under faults.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="one farm, one round per repetition")
    _add_experiment_flags(run_p)
    _add_output_flags(run_p)

    pipe_p = sub.add_parser("pipeline", help="chained farm stages")
    pipe_p.add_argument("--stages", type=int, default=2)
    _add_experiment_flags(pipe_p)
    _add_output_flags(pipe_p)

    bench_p = sub.add_parser("bench", help="real-clock round latency per size")
    bench_p.add_argument("--n-values", default="1,2,3,4")
    bench_p.add_argument("--repetitions", type=int, default=50)
    bench_p.add_argument("--delta-t", dest="delta_t", type=float, default=0.05)
    bench_p.add_argument(
        "--include-warmup",
        action="store_true",
        help="keep the first (warm-up) repetition in the stats",
    )
    _add_output_flags(bench_p)

    sub.add_parser("selftest", help="oracle equivalence and census suites")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed its message; normalize the code
        return 0 if exc.code == 0 else 2
    try:
        if args.command == "run":
            return _cmd_run(args, stage_count_flag=False)
        if args.command == "pipeline":
            return _cmd_run(args, stage_count_flag=True)
        if args.command == "bench":
            return _cmd_bench(args)
        return _cmd_selftest(args)
    except SpecError as exc:
        parser.print_usage(sys.stderr)
        for v in exc.violations:
            print(f"votefarm: {v}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
