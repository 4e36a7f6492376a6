"""Cooperative activity scheduler with virtual- and real-time clocks.

Activities are generators that yield Wait requests; everything else
(sends, spawns) is an ordinary call, so the only scheduling points are
message waits, sleeps, and timeouts.  Ready activities run FIFO and all
ties on the timer heap break by a global sequence number, which makes
virtual-time runs fully deterministic.  A timer only fires once every
runnable activity has blocked, so in virtual time a timeout means genuine
silence, not scheduling luck.
"""

from __future__ import annotations

import heapq
import itertools
import time
from collections import deque
from dataclasses import dataclass
from typing import Callable, Generator, Iterable


class _TimedOut:
    __slots__ = ()

    def __repr__(self) -> str:
        return "TIMED_OUT"


TIMED_OUT = _TimedOut()

VIRTUAL = "virtual"
REAL = "real"


@dataclass(frozen=True)
class Wait:
    """Yielded by an activity: wait for an item on any source, or for
    `timeout` time units (None blocks indefinitely, 0 yields the floor)."""

    sources: tuple
    timeout: float | None


class WaitSource:
    """A FIFO an activity can block on.  At most one waiter at a time."""

    __slots__ = ("scheduler", "queue", "waiter")

    def __init__(self, scheduler: "Scheduler"):
        self.scheduler = scheduler
        self.queue: deque = deque()
        self.waiter: Activity | None = None

    def put(self, item) -> None:
        self.queue.append((self.scheduler._next_seq(), item))
        if self.waiter is not None:
            self.scheduler._wake(self.waiter, "msg")


class DeadlockError(RuntimeError):
    pass


def sleep(duration: float):
    """Generator helper: block the calling activity for `duration`."""
    got = yield Wait((), duration)
    assert got is TIMED_OUT
    return None


class Activity:
    __slots__ = (
        "name",
        "gen",
        "role",
        "finished",
        "halted",
        "result",
        "waiting_on",
        "wait_seq",
        "in_ready",
        "_resume",
    )

    def __init__(self, name: str, gen: Generator, role: str):
        self.name = name
        self.gen = gen
        self.role = role
        self.finished = False
        self.halted = False
        self.result = None
        self.waiting_on: tuple | None = None
        self.wait_seq = 0
        self.in_ready = False
        self._resume = None

    @property
    def live(self) -> bool:
        return not self.finished and not self.halted

    def __repr__(self) -> str:
        return f"Activity({self.name})"


_T_TIMER = 0
_T_CALL = 1


class Scheduler:
    def __init__(self, clock: str = VIRTUAL):
        if clock not in (VIRTUAL, REAL):
            raise ValueError(f"unknown clock mode {clock!r}")
        self.clock_mode = clock
        self._vnow = 0.0
        self._epoch = time.monotonic()
        self._seq = itertools.count()
        self._ready: deque[Activity] = deque()
        self._heap: list = []
        self.activities: dict[str, Activity] = {}
        # Names to spawn pre-halted (silent-crash fault injection).
        self.kill_names: set[str] = set()

    # -- time ---------------------------------------------------------------

    @property
    def now(self) -> float:
        if self.clock_mode == VIRTUAL:
            return self._vnow
        return time.monotonic() - self._epoch

    def _advance_to(self, t: float) -> None:
        if self.clock_mode == VIRTUAL:
            if t > self._vnow:
                self._vnow = t
        else:
            delay = t - (time.monotonic() - self._epoch)
            if delay > 0:
                time.sleep(delay)

    # -- activities -----------------------------------------------------------

    def _next_seq(self) -> int:
        return next(self._seq)

    def spawn(self, name: str, gen: Generator, role: str = "activity") -> Activity:
        if name in self.activities and self.activities[name].live:
            raise ValueError(f"activity {name!r} already running")
        act = Activity(name, gen, role)
        self.activities[name] = act
        if name in self.kill_names:
            act.halted = True
        else:
            self._make_ready(act, None)
        return act

    def halt(self, name: str) -> None:
        act = self.activities[name]
        act.halted = True
        self._clear_wait(act)

    def live_activities(self) -> list[Activity]:
        return [a for a in self.activities.values() if a.live]

    def _make_ready(self, act: Activity, resume) -> None:
        act._resume = resume
        if not act.in_ready:
            act.in_ready = True
            self._ready.append(act)

    def _wake(self, act: Activity, reason: str) -> None:
        if not act.live:
            return
        act.wait_seq += 1  # invalidates any pending timer for this wait
        self._make_ready(act, reason)

    def _clear_wait(self, act: Activity) -> None:
        if act.waiting_on is not None:
            for src in act.waiting_on:
                if src.waiter is act:
                    src.waiter = None
            act.waiting_on = None

    def call_later(self, delay: float, fn: Callable[[], None]) -> None:
        if delay < 0:
            raise ValueError("delay must be >= 0")
        heapq.heappush(
            self._heap, (self.now + delay, self._next_seq(), _T_CALL, fn, 0)
        )

    def _arm_timer(self, act: Activity, timeout: float) -> None:
        heapq.heappush(
            self._heap,
            (self.now + timeout, self._next_seq(), _T_TIMER, act, act.wait_seq),
        )

    # -- stepping -------------------------------------------------------------

    def _pick(self, sources: Iterable[WaitSource]):
        best = None
        for src in sources:
            if src.queue and (best is None or src.queue[0][0] < best.queue[0][0]):
                best = src
        return best

    def _step(self, act: Activity) -> None:
        if not act.live:
            return
        reason, act._resume = act._resume, None
        if reason == "timeout":
            self._clear_wait(act)
            value = TIMED_OUT
        elif act.waiting_on is not None:
            src = self._pick(act.waiting_on)
            if src is None:
                # Sources are single-consumer, so a message wake implies a
                # queued item; anything else is a kernel bug.
                raise RuntimeError(f"spurious wake of {act.name}")
            self._clear_wait(act)
            value = (src, src.queue.popleft()[1])
        else:
            value = None  # first step

        while True:
            try:
                eff = act.gen.send(value)
            except StopIteration as stop:
                act.finished = True
                act.result = stop.value
                return
            if not isinstance(eff, Wait):
                raise TypeError(f"{act.name} yielded {eff!r}, expected Wait")
            src = self._pick(eff.sources)
            if src is not None:
                value = (src, src.queue.popleft()[1])
                continue
            act.waiting_on = tuple(eff.sources)
            for s in act.waiting_on:
                if s.waiter is not None and s.waiter is not act:
                    raise RuntimeError(
                        f"{s.waiter.name} and {act.name} both wait on one source"
                    )
                s.waiter = act
            act.wait_seq += 1
            if eff.timeout is not None:
                self._arm_timer(act, eff.timeout)
            return

    def _fire(self, entry) -> None:
        _, _, kind, payload, extra = entry
        if kind == _T_CALL:
            payload()
        else:
            act = payload
            if act.live and act.waiting_on is not None and act.wait_seq == extra:
                self._wake(act, "timeout")

    def run(
        self,
        until: Callable[[], bool] | None = None,
        max_steps: int = 20_000_000,
    ) -> None:
        """Step activities until quiescence (or `until` turns true).

        Quiescence: no activity is runnable and no timer or delayed call is
        pending, i.e. every surviving activity is blocked without timeout.
        """
        steps = 0
        while True:
            while self._ready:
                act = self._ready.popleft()
                act.in_ready = False
                self._step(act)
                steps += 1
                if steps > max_steps:
                    raise RuntimeError("scheduler step budget exhausted")
                if until is not None and until():
                    return
            if until is not None and until():
                return
            if not self._heap:
                return
            t = self._heap[0][0]
            self._advance_to(t)
            now = self.now
            while self._heap and self._heap[0][0] <= now:
                self._fire(heapq.heappop(self._heap))
