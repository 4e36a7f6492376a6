"""Metric-space voting over slot vectors.

All algorithms see the full slot vector (valid and invalid entries) and a
distance function on values.  Majority counts classes against the total
slot count, so invalid slots weigh against reaching a majority; the other
algorithms operate on the valid slots only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

from .core import (
    AlgorithmId,
    EqClass,
    ErrorCode,
    ValueSlot,
    VoteKind,
    VoteOutcome,
    VoteValue,
)

Metric = Callable[[VoteValue, VoteValue], float]


def default_metric(a: VoteValue, b: VoteValue) -> float:
    """Discrete distance: 0 if the byte sequences are identical, else 1."""
    return 0.0 if a.data == b.data else 1.0


def euclidean_metric(a: VoteValue, b: VoteValue) -> float:
    """Euclidean distance between the numeric views of two values."""
    xa, xb = a.floats(), b.floats()
    if len(xa) != len(xb):
        raise ValueError("dimension mismatch")
    return math.sqrt(sum((p - q) ** 2 for p, q in zip(xa, xb)))


_METRICS: dict[str, Metric] = {
    "default": default_metric,
    "euclidean": euclidean_metric,
}


def register_metric(name: str, fn: Metric) -> None:
    _METRICS[name] = fn


def resolve_metric(metric: Metric | str | None) -> tuple[Metric, str]:
    """Accept a metric callable, a registered name, or None (the default);
    return the callable together with a stable identifier."""
    if metric is None:
        return default_metric, "default"
    if isinstance(metric, str):
        try:
            return _METRICS[metric], metric
        except KeyError:
            raise KeyError(f"unknown metric {metric!r}") from None
    for name, fn in _METRICS.items():
        if fn is metric:
            return metric, name
    return metric, f"fn:{getattr(metric, '__qualname__', repr(metric))}"


@dataclass(frozen=True)
class Clustering:
    classes: tuple[EqClass, ...]


def cluster(
    slots: Sequence[ValueSlot], epsilon: float, metric: Metric
) -> Clustering:
    """Leader-scan clustering of the valid slots.

    Scanning in slot order, each value joins the first existing class whose
    leader is within epsilon; otherwise it leads a new class.  Invalid slots
    belong to no class.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    leaders: list[int] = []
    members: list[list[int]] = []
    for i, slot in enumerate(slots):
        if not slot.valid:
            continue
        for k, leader in enumerate(leaders):
            if metric(slot.value, slots[leader].value) <= epsilon:
                members[k].append(i)
                break
        else:
            leaders.append(i)
            members.append([i])
    return Clustering(
        tuple(EqClass(l, tuple(m)) for l, m in zip(leaders, members))
    )


def _representative(slots: Sequence[ValueSlot], cls: EqClass, metric: Metric) -> int:
    """Class member minimizing total distance to the other members; ties go
    to the lowest slot index."""
    best_index = cls.members[0]
    best_total = None
    for i in cls.members:
        total = sum(metric(slots[i].value, slots[j].value) for j in cls.members)
        if best_total is None or total < best_total:
            best_index, best_total = i, total
    return best_index


def vote_majority(
    slots: Sequence[ValueSlot], epsilon: float, metric: Metric
) -> VoteOutcome:
    """Strict majority over all N slots: a class must hold more than N/2
    members.  Invalid slots count toward N, never toward a class."""
    n = len(slots)
    clustering = cluster(slots, epsilon, metric)
    for cls in clustering.classes:
        if len(cls.members) * 2 > n:
            rep = _representative(slots, cls, metric)
            return VoteOutcome(value=slots[rep].value, winning_class=cls)
    return VoteOutcome(failure=ErrorCode.NO_MAJORITY)


def vote_median(slots: Sequence[ValueSlot], metric: Metric) -> VoteOutcome:
    """Generalized median: repeatedly discard the two remaining values at
    maximum pairwise distance (ties: lexicographically smallest index pair)
    until one or two remain; of two, the lower slot index wins."""
    remaining = [i for i, s in enumerate(slots) if s.valid]
    if not remaining:
        return VoteOutcome(failure=ErrorCode.BAD_STATE)
    while len(remaining) > 2:
        best_pair = None
        best_dist = -1.0
        for a in range(len(remaining)):
            for b in range(a + 1, len(remaining)):
                d = metric(slots[remaining[a]].value, slots[remaining[b]].value)
                if d > best_dist:
                    best_dist = d
                    best_pair = (remaining[a], remaining[b])
        remaining = [i for i in remaining if i not in best_pair]
    return VoteOutcome(value=slots[remaining[0]].value)


def vote_plurality(
    slots: Sequence[ValueSlot], epsilon: float, metric: Metric
) -> VoteOutcome:
    """Largest class wins; ties between classes go to the lowest leader
    slot index (the scan order makes that the earliest-formed class)."""
    clustering = cluster(slots, epsilon, metric)
    if not clustering.classes:
        return VoteOutcome(failure=ErrorCode.BAD_STATE)
    best = clustering.classes[0]
    for cls in clustering.classes[1:]:
        if len(cls.members) > len(best.members):
            best = cls
    rep = _representative(slots, best, metric)
    return VoteOutcome(value=slots[rep].value, winning_class=best)


def vote_weighted_average(
    slots: Sequence[ValueSlot], scaling_factor: float, metric: Metric
) -> VoteOutcome:
    """Distance-damped average of the numeric views.

    Each valid slot gets raw weight 1 / (1 + s * sum of its distances to the
    other valid slots); invalid slots get exactly zero.  Weights are
    normalized to sum to one, so s = 0 degenerates to the arithmetic mean.
    """
    valid = [i for i, s in enumerate(slots) if s.valid]
    if not valid:
        return VoteOutcome(failure=ErrorCode.BAD_STATE)
    for i in valid:
        if not slots[i].value.numeric:
            return VoteOutcome(failure=ErrorCode.BAD_STATE)
    dim = slots[valid[0]].value.dimension
    if any(slots[i].value.dimension != dim for i in valid):
        return VoteOutcome(failure=ErrorCode.BAD_STATE)

    raw = [0.0] * len(slots)
    for i in valid:
        total = 0.0
        for j in valid:
            if j != i:
                total += metric(slots[i].value, slots[j].value)
        raw[i] = 1.0 / (1.0 + scaling_factor * total)
    z = sum(raw[i] for i in valid)
    if not (z > 0.0) or math.isinf(z) or math.isnan(z):
        return VoteOutcome(failure=ErrorCode.BAD_STATE)
    weights = tuple(w / z for w in raw)

    out = [0.0] * dim
    for i in valid:
        comps = slots[i].value.floats()
        for c in range(dim):
            out[c] += weights[i] * comps[c]
    return VoteOutcome(value=VoteValue.from_floats(out), weights=weights)


def vote(
    algorithm: AlgorithmId, slots: Sequence[ValueSlot], metric: Metric
) -> VoteOutcome:
    """Dispatch to the algorithm named by the AlgorithmId."""
    if algorithm.kind == VoteKind.MAJORITY:
        return vote_majority(slots, algorithm.epsilon, metric)
    if algorithm.kind == VoteKind.MEDIAN:
        return vote_median(slots, metric)
    if algorithm.kind == VoteKind.PLURALITY:
        return vote_plurality(slots, algorithm.epsilon, metric)
    if algorithm.kind == VoteKind.WEIGHTED_AVERAGE:
        return vote_weighted_average(slots, algorithm.scaling_factor, metric)
    return VoteOutcome(failure=ErrorCode.BAD_STATE)
