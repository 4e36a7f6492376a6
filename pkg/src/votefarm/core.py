"""Shared domain types for voter farms.

Identifiers, vote payloads, farm descriptors, protocol messages, error
codes, and the binary frame codec used on every link.  Everything here is
an immutable value; behaviour lives in the other modules.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from enum import IntEnum

# Sender id reserved for user modules; voter ids start at 1.
USER = 0


class ErrorCode(IntEnum):
    NONE = 0
    TIMEOUT = 1
    NOT_RUNNING = 2
    NO_MAJORITY = 3
    BAD_STATE = 4
    TRANSPORT_DOWN = 5
    # Recorded by client handles when a voter answers a request with REFUSED.
    REFUSED = 6


class Tag(IntEnum):
    """Message tags. INPUT/SET_*/GET/CLOSE flow client-to-voter,
    BROADCAST_* voter-to-voter, DONE/REFUSED/VOTED_VALUE voter-to-client."""

    INPUT = 1
    BROADCAST_VALUE = 2
    BROADCAST_INVALID = 3
    SET_ALGORITHM = 4
    SET_OUTPUT = 5
    GET = 6
    CLOSE = 7
    DONE = 8
    REFUSED = 9
    VOTED_VALUE = 10


class VoteKind(IntEnum):
    MAJORITY = 1
    MEDIAN = 2
    PLURALITY = 3
    WEIGHTED_AVERAGE = 4


class FarmState(IntEnum):
    DECLARED = 1
    DESCRIBED = 2
    RUNNING = 3
    CLOSED = 4


class VotingError(Exception):
    """Operation failure carrying one of the ErrorCode values."""

    def __init__(self, code: ErrorCode, message: str = ""):
        super().__init__(message or code.name)
        self.code = code


class BadStateError(VotingError):
    def __init__(self, message: str = ""):
        super().__init__(ErrorCode.BAD_STATE, message)


class TransportDownError(VotingError):
    def __init__(self, message: str = ""):
        super().__init__(ErrorCode.TRANSPORT_DOWN, message)


class FrameError(ValueError):
    """A byte sequence that does not parse as exactly one message frame."""


_F64 = struct.Struct("<d")


@dataclass(frozen=True)
class VoteValue:
    """An opaque byte string, optionally viewable as float64 components.

    Numeric values use one canonical encoding: little-endian float64s, so
    the byte length always equals 8 * dimension.
    """

    data: bytes
    numeric: bool = False

    def __post_init__(self) -> None:
        if not isinstance(self.data, bytes):
            raise TypeError("VoteValue.data must be bytes")
        if len(self.data) < 1:
            raise ValueError("VoteValue.data must be non-empty")
        if self.numeric and len(self.data) % 8 != 0:
            raise ValueError("numeric VoteValue length must be a multiple of 8")

    @classmethod
    def from_bytes(cls, data: bytes) -> "VoteValue":
        return cls(bytes(data), numeric=False)

    @classmethod
    def from_floats(cls, components) -> "VoteValue":
        comps = [float(c) for c in components]
        if not comps:
            raise ValueError("numeric VoteValue needs at least one component")
        return cls(b"".join(_F64.pack(c) for c in comps), numeric=True)

    def floats(self) -> tuple[float, ...]:
        if not self.numeric:
            raise ValueError("VoteValue has no numeric view")
        return tuple(
            _F64.unpack_from(self.data, off)[0] for off in range(0, len(self.data), 8)
        )

    @property
    def dimension(self) -> int:
        if not self.numeric:
            raise ValueError("VoteValue has no numeric view")
        return len(self.data) // 8


@dataclass(frozen=True)
class ValueSlot:
    """One position of a voter's slot vector, attributed to its origin voter."""

    origin: int
    valid: bool
    value: VoteValue | None = None

    def __post_init__(self) -> None:
        if self.origin < 1:
            raise ValueError("slot origin must be a voter id (>= 1)")
        if self.valid and self.value is None:
            raise ValueError("valid slot must carry a value")

    @classmethod
    def arrived(cls, origin: int, value: VoteValue) -> "ValueSlot":
        return cls(origin, True, value)

    @classmethod
    def invalidated(cls, origin: int) -> "ValueSlot":
        return cls(origin, False, None)


@dataclass(frozen=True)
class AlgorithmId:
    kind: VoteKind
    epsilon: float = 0.0
    scaling_factor: float = 1.0

    def __post_init__(self) -> None:
        if not isinstance(self.kind, VoteKind):
            raise TypeError("kind must be a VoteKind")
        if not (self.epsilon >= 0.0):
            raise ValueError("epsilon must be >= 0")
        if math.isnan(self.scaling_factor):
            raise ValueError("scaling_factor must not be NaN")


@dataclass(frozen=True)
class EqClass:
    """An equivalence class of slot indices; the leader is the first member."""

    leader: int
    members: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.members or self.members[0] != self.leader:
            raise ValueError("leader must be the first member")


@dataclass(frozen=True)
class VoteOutcome:
    """Result of one vote: exactly one of value / failure is set.

    winning_class and weights are voter-local detail; they are dropped when
    an outcome travels over a link.
    """

    value: VoteValue | None = None
    failure: ErrorCode | None = None
    winning_class: EqClass | None = None
    weights: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if (self.value is None) == (self.failure is None):
            raise ValueError("exactly one of value/failure must be set")
        if self.failure is not None and self.failure == ErrorCode.NONE:
            raise ValueError("failure must be a real error code")

    @property
    def ok(self) -> bool:
        return self.value is not None


@dataclass(frozen=True)
class FarmDescriptor:
    """Static description of a farm: node placement and comparison metric."""

    nodes: tuple[int, ...] = ()
    metric_id: str = "default"
    state: FarmState = FarmState.DECLARED

    @property
    def cardinality(self) -> int:
        return len(self.nodes)


def descriptor_add(descriptor: FarmDescriptor, node: int) -> FarmDescriptor:
    """Append a node to the descriptor. Duplicates are permitted; whether a
    node may host several voters is decided by whoever activates the farm."""
    if descriptor.state not in (FarmState.DECLARED, FarmState.DESCRIBED):
        raise BadStateError(f"cannot add nodes in state {descriptor.state.name}")
    if not isinstance(node, int) or isinstance(node, bool) or node < 1:
        raise ValueError("node id must be a positive integer")
    return replace(
        descriptor, nodes=descriptor.nodes + (node,), state=FarmState.DESCRIBED
    )


def advance_state(descriptor: FarmDescriptor, new_state: FarmState) -> FarmDescriptor:
    """Move the descriptor one step forward; no skips, no going back."""
    if new_state.value != descriptor.state.value + 1:
        raise BadStateError(
            f"illegal transition {descriptor.state.name} -> {new_state.name}"
        )
    if new_state == FarmState.RUNNING and not descriptor.nodes:
        raise BadStateError("cannot run a farm with no nodes")
    return replace(descriptor, state=new_state)


# --- wire format -----------------------------------------------------------
#
# frame := tag(1) | sender(2, LE) | payload kind(1) | payload length(4, LE)
#          | payload
#
# The layout is fixed so frames stay bit-stable across runs and corruption
# can be injected at known byte offsets.

_HEADER = struct.Struct("<BHBI")
_ALGO = struct.Struct("<Bdd")

HEADER_SIZE = _HEADER.size
VALUE_FLAG_SIZE = 1  # leading opaque/numeric flag inside a value payload

_P_NONE = 0
_P_VALUE = 1
_P_ALGO = 2
_P_TARGET = 3
_P_OUTCOME = 4

_TAG_PAYLOAD = {
    Tag.INPUT: _P_VALUE,
    Tag.BROADCAST_VALUE: _P_VALUE,
    Tag.BROADCAST_INVALID: _P_NONE,
    Tag.SET_ALGORITHM: _P_ALGO,
    Tag.SET_OUTPUT: _P_TARGET,
    Tag.GET: _P_NONE,
    Tag.CLOSE: _P_NONE,
    Tag.DONE: _P_NONE,
    Tag.REFUSED: _P_NONE,
    Tag.VOTED_VALUE: _P_OUTCOME,
}


@dataclass(frozen=True)
class Message:
    tag: Tag
    sender: int
    payload: object = None

    def __post_init__(self) -> None:
        if not isinstance(self.tag, Tag):
            raise TypeError("tag must be a Tag")
        if not isinstance(self.sender, int) or self.sender < 0:
            raise ValueError("sender must be USER (0) or a voter id (>= 1)")
        kind = _TAG_PAYLOAD[self.tag]
        p = self.payload
        if kind == _P_NONE and p is not None:
            raise ValueError(f"{self.tag.name} carries no payload")
        if kind == _P_VALUE and not isinstance(p, VoteValue):
            raise ValueError(f"{self.tag.name} requires a VoteValue payload")
        if kind == _P_ALGO and not isinstance(p, AlgorithmId):
            raise ValueError(f"{self.tag.name} requires an AlgorithmId payload")
        if kind == _P_TARGET and not isinstance(p, str):
            raise ValueError(f"{self.tag.name} requires a target identifier")
        if kind == _P_OUTCOME and not isinstance(p, VoteOutcome):
            raise ValueError(f"{self.tag.name} requires a VoteOutcome payload")


def _encode_value(value: VoteValue) -> bytes:
    return bytes([1 if value.numeric else 0]) + value.data


def _decode_value(body: bytes) -> VoteValue:
    if len(body) < 2:
        raise FrameError("value payload too short")
    flag = body[0]
    if flag not in (0, 1):
        raise FrameError("bad value flag")
    data = body[1:]
    if flag == 1 and len(data) % 8 != 0:
        raise FrameError("numeric value length not a multiple of 8")
    return VoteValue(data, numeric=flag == 1)


def encode_message(msg: Message) -> bytes:
    """Serialize a message to one self-delimiting frame."""
    if msg.sender > 0xFFFF:
        raise ValueError("sender id does not fit the frame")
    kind = _TAG_PAYLOAD[msg.tag]
    if kind == _P_NONE:
        body = b""
    elif kind == _P_VALUE:
        body = _encode_value(msg.payload)
    elif kind == _P_ALGO:
        a = msg.payload
        body = _ALGO.pack(a.kind.value, a.epsilon, a.scaling_factor)
    elif kind == _P_TARGET:
        body = msg.payload.encode("utf-8")
    else:  # _P_OUTCOME
        o = msg.payload
        if o.ok:
            body = bytes([0]) + _encode_value(o.value)
        else:
            body = bytes([o.failure.value])
    return _HEADER.pack(msg.tag.value, msg.sender, kind, len(body)) + body


def decode_message(frame: bytes) -> Message:
    """Parse exactly one frame; raises FrameError on anything else."""
    if len(frame) < HEADER_SIZE:
        raise FrameError("frame shorter than header")
    raw_tag, sender, kind, length = _HEADER.unpack_from(frame, 0)
    try:
        tag = Tag(raw_tag)
    except ValueError as exc:
        raise FrameError(f"unknown tag {raw_tag}") from exc
    if kind != _TAG_PAYLOAD[tag]:
        raise FrameError(f"payload kind {kind} not allowed for {tag.name}")
    body = frame[HEADER_SIZE:]
    if len(body) != length:
        raise FrameError("declared payload length does not match frame")

    payload: object
    if kind == _P_NONE:
        if body:
            raise FrameError(f"{tag.name} must not carry payload bytes")
        payload = None
    elif kind == _P_VALUE:
        payload = _decode_value(body)
    elif kind == _P_ALGO:
        if len(body) != _ALGO.size:
            raise FrameError("bad algorithm payload length")
        raw_kind, epsilon, scaling = _ALGO.unpack(body)
        try:
            vkind = VoteKind(raw_kind)
        except ValueError as exc:
            raise FrameError(f"unknown algorithm kind {raw_kind}") from exc
        if not (epsilon >= 0.0) or math.isnan(scaling):
            raise FrameError("bad algorithm parameters")
        payload = AlgorithmId(vkind, epsilon, scaling)
    elif kind == _P_TARGET:
        try:
            payload = body.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FrameError("target identifier is not valid UTF-8") from exc
    else:  # _P_OUTCOME
        if len(body) < 1:
            raise FrameError("empty outcome payload")
        status = body[0]
        if status == 0:
            payload = VoteOutcome(value=_decode_value(body[1:]))
        else:
            try:
                code = ErrorCode(status)
            except ValueError as exc:
                raise FrameError(f"unknown failure code {status}") from exc
            if len(body) != 1:
                raise FrameError("failure outcome must not carry value bytes")
            payload = VoteOutcome(failure=code)
    try:
        return Message(tag, sender, payload)
    except ValueError as exc:
        raise FrameError(str(exc)) from exc
