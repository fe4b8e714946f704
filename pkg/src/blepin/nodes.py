"""Keypad (peripheral) and verifier (central) state machines.

Both machines are pure step functions returning a new state plus the frames
to transmit; the simulator owns time and delivery.
"""

from __future__ import annotations

import enum
import hmac
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np

from .protocol import (
    INT16_MAX,
    INT16_MIN,
    PIN_ALPHABET,
    PIN_LENGTH,
    TAG_TELEMETRY,
    Ack,
    AuthFail,
    AuthOk,
    Frame,
    KeyPress,
    Locked,
    Pin,
    PinReset,
    PinSubmit,
    Telemetry,
)

log = logging.getLogger(__name__)

DISPLAY_COLS = 16
DISPLAY_ROWS = 2
RESET_KEY = "*"
SUBMIT_KEY = "#"
KEYPAD_KEYS = PIN_ALPHABET + RESET_KEY + SUBMIT_KEY

DEFAULT_MAX_COUNT = 3
DEFAULT_LOCKOUT_MS = 30_000
DEFAULT_TELEMETRY_PERIOD_MS = 1_000


def _fit(text: str) -> str:
    return text[:DISPLAY_COLS].ljust(DISPLAY_COLS)


@dataclass(frozen=True)
class Display:
    """16x2 character display modelled as two space-padded rows."""

    rows: tuple[str, str] = (" " * DISPLAY_COLS, " " * DISPLAY_COLS)

    def __post_init__(self) -> None:
        if len(self.rows) != DISPLAY_ROWS:
            raise ValueError(f"display has {DISPLAY_ROWS} rows, got {len(self.rows)}")
        object.__setattr__(self, "rows", tuple(_fit(r) for r in self.rows))
        for r in self.rows:
            if not r.isprintable():
                raise ValueError(f"non-printable display text {r!r}")

    @classmethod
    def show(cls, top: str = "", bottom: str = "") -> Display:
        return cls((top, bottom))

    def with_row(self, index: int, text: str) -> Display:
        rows = list(self.rows)
        rows[index] = text
        return Display(tuple(rows))

    def render(self) -> str:
        edge = "+" + "-" * DISPLAY_COLS + "+"
        return "\n".join([edge, *(f"|{r}|" for r in self.rows), edge])

    def __str__(self) -> str:
        return "\n".join(self.rows)


def format_temperature(centi_c: int) -> str:
    sign = "-" if centi_c < 0 else ""
    whole, frac = divmod(abs(centi_c), 100)
    return f"T={sign}{whole}.{frac:02d}C"


def verify_pin(entered: Sequence[str], stored: Pin) -> bool:
    """Constant-time comparison of an entered symbol sequence with the stored PIN."""
    entered_s = "".join(entered)
    # compare_digest examines every byte even when lengths differ
    same = hmac.compare_digest(
        entered_s.encode("utf-8", "surrogatepass"), stored.symbols.encode("ascii")
    )
    return same and len(entered) == PIN_LENGTH


# --- peripheral -------------------------------------------------------------


class PeripheralPhase(enum.Enum):
    ENTERING = "Entering"
    AWAITING_VERDICT = "AwaitingVerdict"
    AUTHENTICATED = "Authenticated"
    LOCKED_OUT = "LockedOut"


@dataclass(frozen=True)
class KeyPressed:
    key: str


@dataclass(frozen=True)
class FrameReceived:
    frame: Frame


@dataclass(frozen=True)
class TimerFired:
    """Telemetry timer expiry carrying the sensor reading taken at that instant."""

    temp_centi_c: int


PeripheralEvent = Union[KeyPressed, FrameReceived, TimerFired]


@dataclass(frozen=True)
class PeripheralState:
    pin_buffer: str = ""
    phase: PeripheralPhase = PeripheralPhase.ENTERING
    locked_until: float | None = None
    telemetry_period_ms: float = DEFAULT_TELEMETRY_PERIOD_MS
    next_telemetry_at: float | None = None

    def __post_init__(self) -> None:
        if len(self.pin_buffer) > PIN_LENGTH:
            raise ValueError("pin_buffer holds at most 4 symbols")
        if not self.telemetry_period_ms > 0:
            raise ValueError("telemetry_period_ms must be > 0")


def peripheral_step(
    state: PeripheralState, event: PeripheralEvent, now: float
) -> tuple[PeripheralState, list[Frame]]:
    if state.phase is PeripheralPhase.LOCKED_OUT and state.locked_until is not None and now >= state.locked_until:
        state = replace(state, phase=PeripheralPhase.ENTERING, locked_until=None, pin_buffer="")

    if isinstance(event, KeyPressed):
        return _peripheral_key(state, event.key)

    if isinstance(event, FrameReceived):
        f = event.frame
        if isinstance(f, AuthOk):
            return (
                replace(
                    state,
                    phase=PeripheralPhase.AUTHENTICATED,
                    pin_buffer="",
                    next_telemetry_at=now + state.telemetry_period_ms,
                ),
                [],
            )
        if isinstance(f, AuthFail):
            if state.phase is PeripheralPhase.LOCKED_OUT:
                return state, []
            return replace(state, phase=PeripheralPhase.ENTERING, pin_buffer=""), []
        if isinstance(f, Locked):
            return (
                replace(
                    state,
                    phase=PeripheralPhase.LOCKED_OUT,
                    pin_buffer="",
                    locked_until=now + f.remaining_ms,
                    next_telemetry_at=None,
                ),
                [],
            )
        return state, []

    if isinstance(event, TimerFired):
        if state.phase is not PeripheralPhase.AUTHENTICATED:
            return state, []
        nxt = (state.next_telemetry_at or now) + state.telemetry_period_ms
        return replace(state, next_telemetry_at=nxt), [Telemetry(event.temp_centi_c)]

    raise TypeError(f"unknown peripheral event {event!r}")


def _peripheral_key(state: PeripheralState, key: str) -> tuple[PeripheralState, list[Frame]]:
    if state.phase is not PeripheralPhase.ENTERING:
        return state, []
    key = key.upper()
    if key == RESET_KEY:
        return replace(state, pin_buffer=""), [PinReset()]
    if key == SUBMIT_KEY:
        return replace(state, phase=PeripheralPhase.AWAITING_VERDICT), [PinSubmit()]
    if len(key) == 1 and key in PIN_ALPHABET:
        if len(state.pin_buffer) >= PIN_LENGTH:
            return state, []
        return replace(state, pin_buffer=state.pin_buffer + key), [KeyPress(key)]
    return state, []


# --- central ----------------------------------------------------------------


class Session(enum.Enum):
    UNAUTHENTICATED = "Unauthenticated"
    AUTHENTICATED = "Authenticated"


@dataclass(frozen=True)
class CentralState:
    stored_pin: Pin
    max_count: int = DEFAULT_MAX_COUNT
    lockout_duration_ms: float = DEFAULT_LOCKOUT_MS
    wrong_counter: int = 0
    locked_until: float | None = None
    rx_buffer: str = ""
    session: Session = Session.UNAUTHENTICATED
    display: Display = field(default_factory=Display)

    def __post_init__(self) -> None:
        if self.max_count < 1:
            raise ValueError("max_count must be >= 1")
        if self.lockout_duration_ms < 0:
            raise ValueError("lockout_duration_ms must be >= 0")
        if len(self.rx_buffer) > PIN_LENGTH:
            raise ValueError("rx_buffer holds at most 4 symbols")

    def is_locked(self, now: float) -> bool:
        return self.locked_until is not None and now < self.locked_until

    def remaining_lock_ms(self, now: float) -> int:
        if not self.is_locked(now):
            return 0
        return int(math.ceil(self.locked_until - now))


def _mask(n: int) -> str:
    return "*" * n


def central_step(
    state: CentralState, frame: Frame, now: float
) -> tuple[CentralState, list[Frame]]:
    if state.locked_until is not None and now >= state.locked_until:
        state = replace(state, locked_until=None, display=Display())
    locked = state.locked_until is not None

    if isinstance(frame, KeyPress):
        if locked or state.session is Session.AUTHENTICATED:
            return state, []
        if len(state.rx_buffer) >= PIN_LENGTH:
            return state, []
        buf = state.rx_buffer + frame.symbol
        return replace(state, rx_buffer=buf, display=Display.show(_mask(len(buf)))), []

    if isinstance(frame, PinReset):
        if locked or state.session is Session.AUTHENTICATED:
            return state, []
        return replace(state, rx_buffer="", display=Display.show()), []

    if isinstance(frame, PinSubmit):
        if locked:
            return state, [Locked(state.remaining_lock_ms(now))]
        if state.session is Session.AUTHENTICATED:
            return state, [AuthOk()]
        if verify_pin(state.rx_buffer, state.stored_pin):
            return (
                replace(
                    state,
                    session=Session.AUTHENTICATED,
                    wrong_counter=0,
                    rx_buffer="",
                    display=Display.show("HELLO"),
                ),
                [AuthOk()],
            )
        wrong = state.wrong_counter + 1
        if wrong >= state.max_count:
            until = now + state.lockout_duration_ms
            new = replace(
                state,
                wrong_counter=0,
                locked_until=until,
                rx_buffer="",
                display=Display.show("LOCKED OUT", f"retry in {int(math.ceil(state.lockout_duration_ms / 1000))}s"),
            )
            return new, [AuthFail(0), Locked(new.remaining_lock_ms(now))]
        return (
            replace(
                state,
                wrong_counter=wrong,
                rx_buffer="",
                display=Display.show("Wrong PIN,", "enter again"),
            ),
            [AuthFail(state.max_count - wrong)],
        )

    if isinstance(frame, Telemetry):
        if state.session is not Session.AUTHENTICATED:
            return state, []
        disp = state.display.with_row(1, format_temperature(frame.temp_centi_c))
        return replace(state, display=disp), [Ack(TAG_TELEMETRY)]

    # AuthOk / AuthFail / Locked / Ack are central->peripheral only
    return state, []


# --- temperature source -----------------------------------------------------


@dataclass(frozen=True)
class TemperatureSource:
    """Synthetic ambient sensor: sinusoid plus Gaussian noise."""

    base_c: float = 25.0
    amplitude_c: float = 0.5
    period_ms: float = 60_000.0
    noise_sd_c: float = 0.05
    seed: int = 0

    def __post_init__(self) -> None:
        if self.amplitude_c < 0 or self.noise_sd_c < 0:
            raise ValueError("amplitude_c and noise_sd_c must be >= 0")
        if not self.period_ms > 0:
            raise ValueError("period_ms must be > 0")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def read_temperature(
    src: TemperatureSource, now: float, rng: np.random.Generator
) -> tuple[int, bool]:
    """Return ``(centi_c, clamped)``; one normal deviate is consumed per call."""
    z = float(rng.standard_normal())
    value_c = src.base_c + src.amplitude_c * math.sin(2 * math.pi * now / src.period_ms) + src.noise_sd_c * z
    centi = round(100 * value_c)
    if centi < INT16_MIN or centi > INT16_MAX:
        log.warning("temperature %.2f C outside int16 centi-degree range; clamped", value_c)
        return min(max(centi, INT16_MIN), INT16_MAX), True
    return centi, False


def sample_temperature(src: TemperatureSource, now: float, rng: np.random.Generator) -> int:
    return read_temperature(src, now, rng)[0]
