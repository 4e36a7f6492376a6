"""Point-to-point links, the fabric that owns them, and fault hooks.

Links carry encoded byte frames with per-direction FIFO order.  A link is
LOCAL when both parties are placed on the same node and VIRTUAL otherwise.
Fault hooks intercept deliveries per link, direction, and message index,
and may drop, corrupt, or delay the frame; a frame corrupted beyond
parseability is silently discarded, so the receiver only ever notices the
resulting silence through its timeout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

from .core import (
    HEADER_SIZE,
    VALUE_FLAG_SIZE,
    FrameError,
    Message,
    TransportDownError,
    decode_message,
    encode_message,
)
from .sim import TIMED_OUT, Scheduler, Wait, WaitSource


class LinkKind(Enum):
    LOCAL = "local"
    VIRTUAL = "virtual"


class Endpoint(WaitSource):
    """One side of a link; frames sent here land on the peer's queue."""

    __slots__ = ("link", "name")

    def __init__(self, scheduler: Scheduler, link: "Link", name: str):
        super().__init__(scheduler)
        self.link = link
        self.name = name

    @property
    def peer(self) -> "Endpoint":
        return self.link.b if self is self.link.a else self.link.a

    def __repr__(self) -> str:
        return f"Endpoint({self.name}->{self.peer_name})"

    @property
    def peer_name(self) -> str:
        return self.link.b.name if self is self.link.a else self.link.a.name


@dataclass
class Link:
    kind: LinkKind
    a: Endpoint = None
    b: Endpoint = None
    closed: bool = False
    # delivered-frame counters keyed by destination endpoint name
    delivered: dict = field(default_factory=dict)
    sent: dict = field(default_factory=dict)

    def endpoint_for(self, name: str) -> Endpoint:
        if self.a.name == name:
            return self.a
        if self.b.name == name:
            return self.b
        raise KeyError(name)

    def close(self) -> None:
        self.closed = True


@dataclass(frozen=True)
class LinkCensus:
    virtual: int
    local: int
    activities: int


@dataclass
class Delivery:
    """A frame in flight, shown to fault hooks before it lands."""

    link: Link
    src: str
    dst: str
    frame: bytes
    index: int  # 0-based count of frames sent on this link+direction
    delay: float = 0.0
    drop: bool = False


FaultHook = Callable[[Delivery], None]


@dataclass(frozen=True)
class MessageArrived:
    endpoint: Endpoint
    message: Message


@dataclass(frozen=True)
class TimedOut:
    pass


class Fabric:
    """Owns placements, links, and delivery (including fault injection)."""

    def __init__(self, scheduler: Scheduler):
        self.scheduler = scheduler
        self.placements: dict[str, int] = {}
        self.roles: dict[str, str] = {}
        self.links: dict[frozenset, Link] = {}
        self.hooks: list[FaultHook] = []
        self.dropped = 0
        self.delivered_total = 0

    def place(self, name: str, node: int, role: str = "activity") -> None:
        if node < 1:
            raise ValueError("node id must be >= 1")
        if name in self.placements and (
            self.placements[name] != node or self.roles[name] != role
        ):
            raise ValueError(f"{name!r} already placed elsewhere")
        self.placements[name] = node
        self.roles[name] = role

    def connect(self, a: str, b: str) -> Link:
        if a == b:
            raise ValueError("cannot connect an activity to itself")
        for name in (a, b):
            if name not in self.placements:
                raise ValueError(f"{name!r} is not placed on any node")
        key = frozenset((a, b))
        if key in self.links:
            raise ValueError(f"link {a!r} <-> {b!r} already exists")
        kind = (
            LinkKind.LOCAL
            if self.placements[a] == self.placements[b]
            else LinkKind.VIRTUAL
        )
        link = Link(kind)
        link.a = Endpoint(self.scheduler, link, a)
        link.b = Endpoint(self.scheduler, link, b)
        link.delivered = {a: 0, b: 0}
        link.sent = {a: 0, b: 0}
        self.links[key] = link
        return link

    def link_between(self, a: str, b: str) -> Link | None:
        return self.links.get(frozenset((a, b)))

    def links_of(self, name: str) -> list[tuple[str, Link]]:
        """(peer name, link) pairs involving `name`, in creation order."""
        out = []
        for key, link in self.links.items():
            if name in key:
                (peer,) = key - {name}
                out.append((peer, link))
        return out

    def add_hook(self, hook: FaultHook) -> None:
        self.hooks.append(hook)

    def send_from(self, endpoint: Endpoint, frame: bytes) -> None:
        """Ship one frame toward the peer endpoint; never blocks."""
        link = endpoint.link
        if link.closed:
            raise TransportDownError(
                f"link {endpoint.name} <-> {endpoint.peer_name} is closed"
            )
        dst = endpoint.peer
        d = Delivery(
            link=link,
            src=endpoint.name,
            dst=dst.name,
            frame=frame,
            index=link.sent[dst.name],
        )
        link.sent[dst.name] += 1
        for hook in self.hooks:
            hook(d)
            if d.drop:
                self.dropped += 1
                return
        # A frame mangled beyond parsing is dropped here: the receiver can
        # only ever observe the loss as silence.
        try:
            decode_message(d.frame)
        except FrameError:
            self.dropped += 1
            return
        if d.delay > 0:
            self.scheduler.call_later(d.delay, lambda: self._land(dst, d.frame))
        else:
            self._land(dst, d.frame)

    def _land(self, dst: Endpoint, frame: bytes) -> None:
        dst.link.delivered[dst.name] += 1
        self.delivered_total += 1
        dst.put(frame)

    def census(self) -> LinkCensus:
        virtual = sum(1 for l in self.links.values() if l.kind is LinkKind.VIRTUAL)
        local = sum(1 for l in self.links.values() if l.kind is LinkKind.LOCAL)
        return LinkCensus(
            virtual=virtual,
            local=local,
            activities=len(self.scheduler.live_activities()),
        )

    def live_count(self, role: str) -> int:
        return sum(
            1
            for a in self.scheduler.live_activities()
            if self.roles.get(a.name) == role
        )


def connect(fabric: Fabric, a: str, b: str) -> Link:
    return fabric.connect(a, b)


def link_census(fabric: Fabric) -> LinkCensus:
    return fabric.census()


class Outbox(WaitSource):
    """Per-voter send queue drained by a dedicated sender activity, so the
    owner never blocks on a send."""

    _POISON = object()

    def __init__(self, fabric: Fabric, owner: str):
        super().__init__(fabric.scheduler)
        self.fabric = fabric
        self.owner = owner
        self.closed = False

    def send(self, endpoint: Endpoint, msg: Message) -> None:
        """Enqueue a message for delivery; returns immediately."""
        if self.closed:
            raise TransportDownError(f"outbox of {self.owner} is closed")
        if endpoint.link.closed:
            raise TransportDownError(
                f"link {endpoint.name} <-> {endpoint.peer_name} is closed"
            )
        self.put((endpoint, encode_message(msg)))

    def close(self) -> None:
        self.closed = True
        self.put(self._POISON)

    def pump(self):
        """Generator body for the dedicated sender activity."""
        while True:
            _, item = yield Wait((self,), None)
            if item is self._POISON:
                return
            endpoint, frame = item
            if endpoint.link.closed:
                continue
            self.fabric.send_from(endpoint, frame)


def _recv_message(endpoints: Sequence[Endpoint], timeout: float | None):
    """Wait for the earliest parseable frame on any endpoint (generator).

    Frames that fail to parse are skipped; with a timeout the wait restarts,
    so garbled traffic looks exactly like silence.
    """
    while True:
        got = yield Wait(tuple(endpoints), timeout)
        if got is TIMED_OUT:
            return TimedOut()
        endpoint, frame = got
        try:
            return MessageArrived(endpoint, decode_message(frame))
        except FrameError:
            continue


def receive_any(endpoints: Sequence[Endpoint], timeout: float):
    """Generator: earliest message across `endpoints`, or TimedOut after at
    least `timeout` time units (never earlier)."""
    endpoints = tuple(endpoints)
    if not endpoints:
        raise ValueError("receive_any needs at least one link")
    if timeout is None or not (timeout > 0):
        raise ValueError("timeout must be > 0")
    if all(ep.link.closed for ep in endpoints):
        raise TransportDownError("all links are closed")
    result = yield from _recv_message(endpoints, timeout)
    return result


# -- fault hook constructors --------------------------------------------------


def _match(d: Delivery, link: Link, dst: str, index: int | None) -> bool:
    return d.link is link and d.dst == dst and (index is None or d.index == index)


def drop_hook(link: Link, dst: str, index: int | None = None) -> FaultHook:
    def hook(d: Delivery) -> None:
        if _match(d, link, dst, index):
            d.drop = True

    return hook


def delay_hook(link: Link, dst: str, delay: float, index: int | None = None) -> FaultHook:
    def hook(d: Delivery) -> None:
        if _match(d, link, dst, index):
            d.delay += delay

    return hook


def corrupt_value_payload(frame: bytes, pattern: bytes) -> bytes:
    """XOR `pattern` (cycled) over the raw value bytes of a frame carrying a
    value payload, leaving the header and value flag intact.  The result has
    the same length, so it stays parseable while the value itself changes."""
    if not pattern:
        return frame
    start = HEADER_SIZE + VALUE_FLAG_SIZE
    body = bytearray(frame)
    for i in range(start, len(body)):
        body[i] ^= pattern[(i - start) % len(pattern)]
    return bytes(body)


def corrupt_raw(frame: bytes, pattern: bytes, offset: int = 0) -> bytes:
    """XOR `pattern` into the frame starting at `offset`; may well produce
    an unparseable frame, which the fabric then drops."""
    body = bytearray(frame)
    for i, p in enumerate(pattern):
        if offset + i < len(body):
            body[offset + i] ^= p
    return bytes(body)


def corrupt_hook(
    link: Link,
    dst: str,
    pattern: bytes,
    index: int | None = None,
    payload_only: bool = True,
) -> FaultHook:
    def hook(d: Delivery) -> None:
        if _match(d, link, dst, index):
            if payload_only:
                d.frame = corrupt_value_payload(d.frame, pattern)
            else:
                d.frame = corrupt_raw(d.frame, pattern)

    return hook
