"""Over-the-air frames between the keypad node and the verifier node.

Wire layout: one tag byte followed by a fixed-size payload.

    0x01 KeyPress   1 byte ASCII symbol (0-9, A-F)
    0x02 PinReset   -
    0x03 PinSubmit  -
    0x04 AuthOk     -
    0x05 AuthFail   1 byte remaining attempts
    0x06 Locked     4 bytes big-endian unsigned milliseconds
    0x07 Telemetry  2 bytes big-endian signed centi-degrees Celsius
    0x08 Ack        1 byte tag of the acknowledged frame
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import ClassVar, Union

PIN_ALPHABET = "0123456789ABCDEF"
PIN_LENGTH = 4

TAG_KEYPRESS = 0x01
TAG_PIN_RESET = 0x02
TAG_PIN_SUBMIT = 0x03
TAG_AUTH_OK = 0x04
TAG_AUTH_FAIL = 0x05
TAG_LOCKED = 0x06
TAG_TELEMETRY = 0x07
TAG_ACK = 0x08

INT16_MIN, INT16_MAX = -(2**15), 2**15 - 1
UINT32_MAX = 2**32 - 1


class FrameError(ValueError):
    """Frame construction or decoding failed."""


class InvalidFrame(FrameError):
    pass


class InvalidSymbol(FrameError):
    pass


class UnknownTag(FrameError):
    pass


class TruncatedFrame(FrameError):
    """Payload length does not match the tag (short or long)."""


def _check_int(value, lo: int, hi: int, what: str) -> None:
    if isinstance(value, bool) or not isinstance(value, int) or not lo <= value <= hi:
        raise InvalidFrame(f"{what} must be an int in [{lo}, {hi}], got {value!r}")


@dataclass(frozen=True)
class KeyPress:
    symbol: str
    TAG: ClassVar[int] = TAG_KEYPRESS

    def __post_init__(self) -> None:
        if not isinstance(self.symbol, str) or len(self.symbol) != 1 or self.symbol not in PIN_ALPHABET:
            raise InvalidSymbol(f"PIN symbol must be one of {PIN_ALPHABET}, got {self.symbol!r}")


@dataclass(frozen=True)
class PinReset:
    TAG: ClassVar[int] = TAG_PIN_RESET


@dataclass(frozen=True)
class PinSubmit:
    TAG: ClassVar[int] = TAG_PIN_SUBMIT


@dataclass(frozen=True)
class AuthOk:
    TAG: ClassVar[int] = TAG_AUTH_OK


@dataclass(frozen=True)
class AuthFail:
    remaining_attempts: int
    TAG: ClassVar[int] = TAG_AUTH_FAIL

    def __post_init__(self) -> None:
        _check_int(self.remaining_attempts, 0, 0xFF, "remaining_attempts")


@dataclass(frozen=True)
class Locked:
    remaining_ms: int
    TAG: ClassVar[int] = TAG_LOCKED

    def __post_init__(self) -> None:
        _check_int(self.remaining_ms, 0, UINT32_MAX, "remaining_ms")


@dataclass(frozen=True)
class Telemetry:
    temp_centi_c: int
    TAG: ClassVar[int] = TAG_TELEMETRY

    def __post_init__(self) -> None:
        _check_int(self.temp_centi_c, INT16_MIN, INT16_MAX, "temp_centi_c")


@dataclass(frozen=True)
class Ack:
    of: int
    TAG: ClassVar[int] = TAG_ACK

    def __post_init__(self) -> None:
        if self.of not in FRAME_TYPES:
            raise UnknownTag(f"Ack refers to unassigned tag {self.of!r}")


Frame = Union[KeyPress, PinReset, PinSubmit, AuthOk, AuthFail, Locked, Telemetry, Ack]

FRAME_TYPES: dict[int, type] = {
    cls.TAG: cls
    for cls in (KeyPress, PinReset, PinSubmit, AuthOk, AuthFail, Locked, Telemetry, Ack)
}

_PAYLOAD_LEN = {
    TAG_KEYPRESS: 1,
    TAG_PIN_RESET: 0,
    TAG_PIN_SUBMIT: 0,
    TAG_AUTH_OK: 0,
    TAG_AUTH_FAIL: 1,
    TAG_LOCKED: 4,
    TAG_TELEMETRY: 2,
    TAG_ACK: 1,
}


@dataclass(frozen=True)
class Pin:
    """A stored 4-symbol PIN."""

    symbols: str

    def __post_init__(self) -> None:
        if not isinstance(self.symbols, str) or len(self.symbols) != PIN_LENGTH:
            raise InvalidSymbol(f"PIN must be exactly {PIN_LENGTH} symbols, got {self.symbols!r}")
        bad = [c for c in self.symbols if c not in PIN_ALPHABET]
        if bad:
            raise InvalidSymbol(f"PIN symbols must be in {PIN_ALPHABET}, got {bad[0]!r}")

    @classmethod
    def parse(cls, text: str) -> Pin:
        """Build a PIN from user text; lowercase hex letters are accepted."""
        return cls(text.strip().upper())

    def __str__(self) -> str:
        return self.symbols


def frame_kind(frame_or_tag) -> str:
    tag = frame_or_tag if isinstance(frame_or_tag, int) else frame_or_tag.TAG
    return FRAME_TYPES[tag].__name__


def encode_frame(f: Frame) -> bytes:
    if isinstance(f, KeyPress):
        return bytes((TAG_KEYPRESS, ord(f.symbol)))
    if isinstance(f, (PinReset, PinSubmit, AuthOk)):
        return bytes((f.TAG,))
    if isinstance(f, AuthFail):
        return bytes((TAG_AUTH_FAIL, f.remaining_attempts))
    if isinstance(f, Locked):
        return struct.pack(">BI", TAG_LOCKED, f.remaining_ms)
    if isinstance(f, Telemetry):
        return struct.pack(">Bh", TAG_TELEMETRY, f.temp_centi_c)
    if isinstance(f, Ack):
        return bytes((TAG_ACK, f.of))
    raise TypeError(f"not a frame: {f!r}")


def decode_frame(data: bytes) -> Frame:
    """Decode exactly one frame; the whole input must be consumed."""
    data = bytes(data)
    if not data:
        raise TruncatedFrame("empty input")
    tag = data[0]
    if tag not in _PAYLOAD_LEN:
        raise UnknownTag(f"unassigned tag 0x{tag:02X}")
    payload = data[1:]
    if len(payload) != _PAYLOAD_LEN[tag]:
        raise TruncatedFrame(
            f"{frame_kind(tag)} expects {_PAYLOAD_LEN[tag]} payload bytes, got {len(payload)}"
        )
    if tag == TAG_KEYPRESS:
        ch = chr(payload[0])
        if ch not in PIN_ALPHABET:
            raise InvalidSymbol(f"KeyPress payload 0x{payload[0]:02X} is not a PIN symbol")
        return KeyPress(ch)
    if tag == TAG_AUTH_FAIL:
        return AuthFail(payload[0])
    if tag == TAG_LOCKED:
        return Locked(struct.unpack(">I", payload)[0])
    if tag == TAG_TELEMETRY:
        return Telemetry(struct.unpack(">h", payload)[0])
    if tag == TAG_ACK:
        return Ack(payload[0])
    return FRAME_TYPES[tag]()
