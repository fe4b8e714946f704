"""Discrete-event link simulator and RSSI sweep experiments.

A session couples one keypad node and one verifier node through the channel
model.  Each direction is a FIFO link: a frame occupies the link until it is
delivered or exhausts its retries, and every transmission attempt draws its
own shadowed RSSI and a Bernoulli delivery outcome.
"""

from __future__ import annotations

import csv
import enum
import heapq
import io
import itertools
import zlib
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import channel
from .channel import (
    CompositeScenario,
    InvalidDistance,
    Scenario,
    delivery_probability,
    mean_rssi,
    sample_rssi,
)
from .nodes import (
    KEYPAD_KEYS,
    CentralState,
    FrameReceived,
    KeyPressed,
    PeripheralPhase,
    PeripheralState,
    Session,
    TemperatureSource,
    TimerFired,
    central_step,
    peripheral_step,
    read_temperature,
)
from .protocol import Frame, KeyPress, encode_frame

P2C = "p2c"
C2P = "c2p"

# stream ids mixed into the session seed
_CHANNEL_STREAM = 0
_SENSOR_STREAM = 1


@dataclass(frozen=True)
class LinkConfig:
    distance_m: float
    scenario: Scenario
    seed: int = 1
    conn_interval_ms: float = 30.0
    per_frame_airtime_ms: float = 1.0
    sensitivity_dbm: float = channel.DEFAULT_SENSITIVITY_DBM
    logistic_width_db: float = channel.DEFAULT_LOGISTIC_WIDTH_DB
    max_retries: int = 5
    processing_delay_ms: float = 0.0

    def __post_init__(self) -> None:
        if not self.distance_m > 0:
            raise InvalidDistance(self.distance_m)
        if not self.conn_interval_ms > 0:
            raise ValueError("conn_interval_ms must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.per_frame_airtime_ms < 0 or self.processing_delay_ms < 0:
            raise ValueError("airtime and processing delay must be >= 0")
        if not self.logistic_width_db > 0:
            raise ValueError("logistic_width_db must be > 0")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")


class Outcome(enum.Enum):
    AUTHENTICATED = "Authenticated"
    LOCKED_OUT = "LockedOut"
    LINK_LOST = "LinkLost"
    TIMED_OUT = "TimedOut"


@dataclass(frozen=True)
class TraceEvent:
    """One transmission attempt."""

    time_ms: float
    direction: str
    frame: Frame
    rssi_dbm: float
    delivered: bool
    attempt: int
    queued_ms: float
    received_ms: float | None = None


@dataclass(frozen=True)
class Delivery:
    """A frame handed to the receiving node, with the frames it produced."""

    time_ms: float
    direction: str
    frame: Frame
    replies: tuple[Frame, ...]


@dataclass
class SessionTrace:
    events: list[TraceEvent]
    outcome: Outcome
    keypress_to_display_latencies_ms: list[float]
    deliveries: list[Delivery] = field(default_factory=list)
    dropped: list[TraceEvent] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    peripheral: PeripheralState | None = None
    central: CentralState | None = None

    def export_lines(self) -> list[str]:
        lines = ["time_ms,dir,frame,rssi_dbm,delivered"]
        for ev in self.events:
            lines.append(
                f"{ev.time_ms:.3f},{ev.direction},{encode_frame(ev.frame).hex()},"
                f"{ev.rssi_dbm:.4f},{int(ev.delivered)}"
            )
        return lines

    def export(self) -> str:
        return "\n".join(self.export_lines()) + "\n"


@dataclass
class _Outgoing:
    frame: Frame
    queued_ms: float
    key_time_ms: float | None = None
    attempts: int = 0


class LinkSimulation:
    """Incremental event engine; ``run_session`` is the batch wrapper.

    Keys can be scheduled at any time not earlier than the current clock, and
    ``advance`` processes everything up to and including a given time.
    """

    def __init__(
        self,
        link: LinkConfig,
        peripheral: PeripheralState,
        central: CentralState,
        sensor: TemperatureSource | None = None,
    ) -> None:
        self.link = link
        self.peripheral = peripheral
        self.central = central
        self.sensor = sensor or TemperatureSource()
        self.now = 0.0
        self._chan_rng = np.random.default_rng([link.seed, _CHANNEL_STREAM])
        self._sensor_rng = np.random.default_rng([link.seed, _SENSOR_STREAM])
        self._heap: list = []
        self._seq = itertools.count()
        self._queues = {P2C: deque(), C2P: deque()}
        self._busy = {P2C: False, C2P: False}
        self._free_at = {P2C: 0.0, C2P: 0.0}
        self._timer_at: float | None = None
        self.events: list[TraceEvent] = []
        self.deliveries: list[Delivery] = []
        self.dropped: list[TraceEvent] = []
        self.latencies: list[float] = []
        self.notes: list[str] = []

    def _push(self, t: float, kind: str, payload=None) -> None:
        heapq.heappush(self._heap, (t, next(self._seq), kind, payload))

    def press(self, key: str, at: float) -> None:
        if at < self.now:
            raise ValueError(f"cannot schedule key at {at} ms, clock is at {self.now} ms")
        self._push(at, "key", key)

    def advance(self, until: float) -> None:
        while self._heap and self._heap[0][0] <= until:
            t, _, kind, payload = heapq.heappop(self._heap)
            self.now = t
            getattr(self, f"_on_{kind}")(payload)
        self.now = max(self.now, until)

    # --- event handlers -----------------------------------------------------

    def _on_key(self, key: str) -> None:
        self.peripheral, out = peripheral_step(self.peripheral, KeyPressed(key), self.now)
        self._send(P2C, out, key_time=self.now)
        self._sync_timer()

    def _on_timer(self, at: float) -> None:
        if at != self._timer_at:
            return
        self._timer_at = None
        value, clamped = read_temperature(self.sensor, self.now, self._sensor_rng)
        if clamped:
            self.notes.append(f"{self.now:.3f}: temperature reading clamped to {value}")
        self.peripheral, out = peripheral_step(self.peripheral, TimerFired(value), self.now)
        self._send(P2C, out)
        self._sync_timer()

    def _on_tx(self, direction: str) -> None:
        link = self.link
        item = self._queues[direction][0]
        item.attempts += 1
        rssi = sample_rssi(link.scenario, link.distance_m, self._chan_rng)
        p = delivery_probability(rssi, link)
        delivered = bool(self._chan_rng.random() < p)
        received = self.now + link.per_frame_airtime_ms if delivered else None
        ev = TraceEvent(
            time_ms=self.now,
            direction=direction,
            frame=item.frame,
            rssi_dbm=rssi,
            delivered=delivered,
            attempt=item.attempts,
            queued_ms=item.queued_ms,
            received_ms=received,
        )
        self.events.append(ev)
        if delivered:
            self._queues[direction].popleft()
            self._push(received + link.processing_delay_ms, "rx", (direction, item))
        elif item.attempts <= link.max_retries:
            self._push(self.now + link.conn_interval_ms, "tx", direction)
            return
        else:
            self._queues[direction].popleft()
            self.dropped.append(ev)
            self.notes.append(
                f"{self.now:.3f}: {direction} {type(item.frame).__name__} dropped "
                f"after {item.attempts} attempts"
            )
        self._free_at[direction] = self.now + link.per_frame_airtime_ms
        if self._queues[direction]:
            self._push(self._free_at[direction], "tx", direction)
        else:
            self._busy[direction] = False

    def _on_rx(self, payload) -> None:
        direction, item = payload
        frame = item.frame
        if direction == P2C:
            self.central, out = central_step(self.central, frame, self.now)
            if isinstance(frame, KeyPress) and item.key_time_ms is not None:
                self.latencies.append(self.now - item.key_time_ms)
            self.deliveries.append(Delivery(self.now, direction, frame, tuple(out)))
            self._send(C2P, out)
        else:
            self.peripheral, out = peripheral_step(self.peripheral, FrameReceived(frame), self.now)
            self.deliveries.append(Delivery(self.now, direction, frame, tuple(out)))
            self._send(P2C, out)
            self._sync_timer()

    # --- helpers ------------------------------------------------------------

    def _send(self, direction: str, frames: Iterable[Frame], key_time: float | None = None) -> None:
        q = self._queues[direction]
        for f in frames:
            q.append(_Outgoing(f, self.now, key_time))
        if q and not self._busy[direction]:
            self._busy[direction] = True
            self._push(max(self.now, self._free_at[direction]), "tx", direction)

    def _sync_timer(self) -> None:
        p = self.peripheral
        if p.phase is PeripheralPhase.AUTHENTICATED and p.next_telemetry_at is not None:
            if self._timer_at != p.next_telemetry_at:
                self._timer_at = p.next_telemetry_at
                self._push(p.next_telemetry_at, "timer", p.next_telemetry_at)
        else:
            self._timer_at = None

    def outcome(self) -> Outcome:
        if self.central.session is Session.AUTHENTICATED:
            return Outcome.AUTHENTICATED
        if self.central.is_locked(self.now):
            return Outcome.LOCKED_OUT
        if self.dropped:
            return Outcome.LINK_LOST
        return Outcome.TIMED_OUT

    def trace(self) -> SessionTrace:
        return SessionTrace(
            events=list(self.events),
            outcome=self.outcome(),
            keypress_to_display_latencies_ms=list(self.latencies),
            deliveries=list(self.deliveries),
            dropped=list(self.dropped),
            notes=list(self.notes),
            peripheral=self.peripheral,
            central=self.central,
        )


def run_session(
    link: LinkConfig,
    peripheral: PeripheralState,
    central: CentralState,
    script: Sequence[tuple[float, str]],
    horizon_ms: float,
    sensor: TemperatureSource | None = None,
) -> SessionTrace:
    """Run a scripted session to ``horizon_ms`` and return its trace.

    ``script`` holds ``(time_ms, key)`` pairs with keys from the 4x4 keypad
    (``0-9``, ``A-F``, ``*`` reset, ``#`` submit).
    """
    if not horizon_ms > 0:
        raise ValueError("horizon_ms must be > 0")
    for t, key in script:
        if t < 0 or t > horizon_ms:
            raise ValueError(f"script time {t} ms outside [0, {horizon_ms}] ms")
        if key.upper() not in KEYPAD_KEYS:
            raise ValueError(f"not a keypad key: {key!r}")
    sim = LinkSimulation(link, peripheral, central, sensor)
    for t, key in sorted(script, key=lambda item: item[0]):
        sim.press(key, t)
    sim.advance(horizon_ms)
    return sim.trace()


def pin_attempt_script(
    attempts: Sequence[str],
    *,
    start_ms: float = 100.0,
    key_interval_ms: float = 250.0,
    attempt_gap_ms: float = 1500.0,
) -> list[tuple[float, str]]:
    """Keystrokes typing each attempt followed by ``#``."""
    script = []
    t = start_ms
    for attempt in attempts:
        for ch in attempt:
            script.append((t, ch))
            t += key_interval_ms
        script.append((t, "#"))
        t += attempt_gap_ms
    return script


# --- RSSI sweeps --------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    scenario: str
    distance_m: float
    trial: int
    rssi_dbm: float
    delivered: bool


@dataclass(frozen=True)
class DistanceSummary:
    distance_m: float
    mean_rssi_dbm: float
    std_rssi_dbm: float
    delivery_rate: float
    expected_rssi_dbm: float


@dataclass
class SweepReport:
    scenario: Scenario
    distances: list[float]
    trials: int
    rows: list[SweepRow]
    summary: list[DistanceSummary]

    @property
    def name(self) -> str:
        return self.scenario.name

    def mean_at(self, d: float) -> float:
        for s in self.summary:
            if np.isclose(s.distance_m, d, rtol=0, atol=1e-9):
                return s.mean_rssi_dbm
        raise KeyError(f"distance {d} not in sweep")

    def samples(self, delivered_only: bool = False) -> list[channel.RssiSample]:
        return [
            channel.RssiSample(r.distance_m, r.rssi_dbm, r.scenario, r.trial)
            for r in self.rows
            if r.delivered or not delivered_only
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scenario", "distance_m", "trial", "rssi_dbm", "delivered"])
        for r in self.rows:
            w.writerow([r.scenario, _fmt_distance(r.distance_m), r.trial, f"{r.rssi_dbm:.6f}", int(r.delivered)])
        return buf.getvalue()

    def overlay_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scenario", "distance_m", "expected_rssi_dbm"])
        for s in self.summary:
            w.writerow([self.name, _fmt_distance(s.distance_m), f"{s.expected_rssi_dbm:.6f}"])
        return buf.getvalue()


def _fmt_distance(d: float) -> str:
    return repr(float(d))


def _scenario_key(scenario: Scenario) -> int:
    return zlib.crc32(scenario.name.encode("utf-8"))


def trial_rng(seed: int, scenario: Scenario, distance_index: int, trial: int) -> np.random.Generator:
    """Independent stream per (seed, scenario, distance index, trial)."""
    return np.random.default_rng([seed, _scenario_key(scenario), distance_index, trial])


def sweep_distance(
    scenario: Scenario,
    distances: Sequence[float],
    trials: int,
    seed: int,
    *,
    sensitivity_dbm: float = channel.DEFAULT_SENSITIVITY_DBM,
    logistic_width_db: float = channel.DEFAULT_LOGISTIC_WIDTH_DB,
) -> SweepReport:
    distances = [float(d) for d in distances]
    if not distances:
        raise ValueError("distances must be non-empty")
    for d in distances:
        if not d > 0:
            raise InvalidDistance(d)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")

    rows: list[SweepRow] = []
    summary: list[DistanceSummary] = []
    for di, d in enumerate(distances):
        values = np.empty(trials)
        hits = 0
        for trial in range(trials):
            rng = trial_rng(seed, scenario, di, trial)
            rssi = sample_rssi(scenario, d, rng)
            p = delivery_probability(rssi, sensitivity_dbm=sensitivity_dbm, width_db=logistic_width_db)
            delivered = bool(rng.random() < p)
            rows.append(SweepRow(scenario.name, d, trial, rssi, delivered))
            values[trial] = rssi
            hits += delivered
        summary.append(
            DistanceSummary(
                distance_m=d,
                mean_rssi_dbm=float(values.mean()),
                std_rssi_dbm=float(values.std(ddof=1)) if trials > 1 else 0.0,
                delivery_rate=hits / trials,
                expected_rssi_dbm=mean_rssi(scenario, d),
            )
        )
    return SweepReport(scenario=scenario, distances=distances, trials=trials, rows=rows, summary=summary)


def _grid(start: float, stop: float, step: float) -> list[float]:
    n = int(round((stop - start) / step))
    return [round(start + i * step, 6) for i in range(n + 1)]


FIGURE_GRIDS: dict[str, list[float]] = {
    "indoor": _grid(0.1, 6.0, 0.1),
    "outdoor": _grid(1.0, 50.0, 1.0),
    "combined": _grid(1.0, 30.0, 0.5),
    "ground": _grid(1.0, 30.0, 1.0),
}


def figure_scenarios() -> dict[str, Scenario]:
    return {
        "indoor": channel.scenario_preset("indoor"),
        "outdoor": channel.scenario_preset("outdoor"),
        "combined": channel.default_composite(),
        "ground": channel.scenario_preset("ground"),
    }


def reproduce_figures(
    seed: int, *, trials: int = 100, out_dir: str | Path | None = None
) -> dict[str, SweepReport]:
    """Run the four environment sweeps; optionally write their CSVs.

    Files written per scenario: ``<name>_sweep.csv`` and ``<name>_analytical.csv``.
    """
    reports = {
        name: sweep_distance(sc, FIGURE_GRIDS[name], trials, seed)
        for name, sc in figure_scenarios().items()
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, rep in reports.items():
            (out / f"{name}_sweep.csv").write_text(rep.to_csv())
            (out / f"{name}_analytical.csv").write_text(rep.overlay_csv())
    return reports
