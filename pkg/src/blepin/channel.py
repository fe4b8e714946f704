"""Log-distance RSSI channel with log-normal shadowing.

Mean received power follows

    rssi(d) = rssi_at_d0 - 10 * alpha * log10(d / d0)

and a measurement adds a zero-mean Gaussian deviate with standard deviation
``sigma_db``.  Deviates come from a ``numpy.random.Generator`` (PCG64 bit
generator, ziggurat normal sampler), so a seed plus a call sequence fully
determines every sample.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

DEFAULT_RSSI_AT_D0 = -45.0
DEFAULT_D0 = 1.0
DEFAULT_SENSITIVITY_DBM = -90.0
DEFAULT_LOGISTIC_WIDTH_DB = 2.0

# name -> (path-loss exponent, shadowing sigma in dB)
PRESETS: dict[str, tuple[float, float]] = {
    "indoor": (3.1, 2.5),
    "outdoor": (2.55, 1.5),
    "combined": (2.85, 2.0),
    "ground": (2.75, 2.0),
}

COMPOSITE_BOUNDARY_M = 16.0
COMPOSITE_OFFSET_DB = 6.0


class ChannelError(ValueError):
    """Base class for channel model errors."""


class UnknownScenario(ChannelError):
    def __init__(self, name: str) -> None:
        super().__init__(
            f"unknown scenario {name!r}; expected one of: {', '.join(PRESETS)}"
        )
        self.name = name


class InvalidDistance(ChannelError):
    def __init__(self, distance: float) -> None:
        super().__init__(f"distance must be > 0 m, got {distance!r}")
        self.distance = distance


class DegenerateInput(ChannelError):
    """Not enough information to fit the path-loss model."""


class MeasurementFormatError(ChannelError):
    """A measurement CSV could not be parsed."""


@dataclass(frozen=True)
class ScenarioParams:
    """Propagation parameters for one environment."""

    name: str
    alpha: float
    rssi_at_d0: float = DEFAULT_RSSI_AT_D0
    d0: float = DEFAULT_D0
    sigma_db: float = 0.0

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ChannelError(f"alpha must be > 0, got {self.alpha}")
        if not self.d0 > 0:
            raise ChannelError(f"d0 must be > 0, got {self.d0}")
        if not self.sigma_db >= 0:
            raise ChannelError(f"sigma_db must be >= 0, got {self.sigma_db}")


@dataclass(frozen=True)
class Segment:
    start_m: float
    params: ScenarioParams
    offset_db: float = 0.0


@dataclass(frozen=True)
class CompositeScenario:
    """Piecewise scenario: each segment covers [start_m, next start_m)."""

    name: str
    segments: tuple[Segment, ...]

    def __post_init__(self) -> None:
        if not self.segments:
            raise ChannelError("composite scenario needs at least one segment")
        if self.segments[0].start_m != 0:
            raise ChannelError("first segment must start at 0 m")
        starts = [s.start_m for s in self.segments]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ChannelError(f"segment starts must be strictly increasing: {starts}")

    def segment_for(self, d: float) -> Segment:
        _check_distance(d)
        chosen = self.segments[0]
        for seg in self.segments[1:]:
            if d >= seg.start_m:
                chosen = seg
            else:
                break
        return chosen


Scenario = Union[ScenarioParams, CompositeScenario]


@dataclass(frozen=True)
class RssiSample:
    distance_m: float
    rssi_dbm: float
    scenario: str = ""
    trial: int = 0

    def __post_init__(self) -> None:
        _check_distance(self.distance_m)
        if self.trial < 0:
            raise ChannelError(f"trial index must be >= 0, got {self.trial}")


@dataclass(frozen=True)
class PathLossFit:
    alpha_hat: float
    rssi0_hat: float
    rmse_db: float
    n: int


def _check_distance(d: float) -> None:
    if not (isinstance(d, (int, float, np.floating, np.integer)) and d > 0):
        raise InvalidDistance(d)


def scenario_preset(
    name: str,
    *,
    rssi_at_d0: float = DEFAULT_RSSI_AT_D0,
    d0: float = DEFAULT_D0,
    sigma_db: float | None = None,
) -> ScenarioParams:
    """Return the preset for ``indoor``, ``outdoor``, ``combined`` or ``ground``."""
    key = name.strip().lower() if isinstance(name, str) else name
    if key not in PRESETS:
        raise UnknownScenario(name)
    alpha, default_sigma = PRESETS[key]
    return ScenarioParams(
        name=key,
        alpha=alpha,
        rssi_at_d0=rssi_at_d0,
        d0=d0,
        sigma_db=default_sigma if sigma_db is None else sigma_db,
    )


def default_composite(
    *,
    boundary_m: float = COMPOSITE_BOUNDARY_M,
    offset_db: float = COMPOSITE_OFFSET_DB,
    rssi_at_d0: float = DEFAULT_RSSI_AT_D0,
    sigma_db: float | None = None,
) -> CompositeScenario:
    """Indoor-to-outdoor path: the combined preset with a step up past the wall."""
    base = scenario_preset("combined", rssi_at_d0=rssi_at_d0, sigma_db=sigma_db)
    return CompositeScenario(
        name="combined",
        segments=(Segment(0.0, base, 0.0), Segment(boundary_m, base, offset_db)),
    )


def scenario_name(scenario: Scenario) -> str:
    return scenario.name


def expected_rssi(params: ScenarioParams, d: float) -> float:
    _check_distance(d)
    return params.rssi_at_d0 - 10.0 * params.alpha * math.log10(d / params.d0)


def expected_rssi_composite(cs: CompositeScenario, d: float) -> float:
    seg = cs.segment_for(d)
    return expected_rssi(seg.params, d) + seg.offset_db


def mean_rssi(scenario: Scenario, d: float) -> float:
    """Noise-free RSSI for either a plain or a composite scenario."""
    if isinstance(scenario, CompositeScenario):
        return expected_rssi_composite(scenario, d)
    return expected_rssi(scenario, d)


def shadowing_sigma(scenario: Scenario, d: float) -> float:
    if isinstance(scenario, CompositeScenario):
        return scenario.segment_for(d).params.sigma_db
    return scenario.sigma_db


def sample_rssi(scenario: Scenario, d: float, rng: np.random.Generator) -> float:
    """Draw one shadowed RSSI value.

    Exactly one standard normal is consumed per call, including when
    ``sigma_db`` is zero, so streams stay aligned across parameter changes.
    """
    mean = mean_rssi(scenario, d)
    z = float(rng.standard_normal())
    return mean + shadowing_sigma(scenario, d) * z


def estimate_distance(params: ScenarioParams, rssi: float) -> float:
    return params.d0 * 10.0 ** ((params.rssi_at_d0 - rssi) / (10.0 * params.alpha))


def fit_path_loss(samples: Sequence[RssiSample], d0: float = DEFAULT_D0) -> PathLossFit:
    """Ordinary least squares for (alpha, rssi_at_d0) on log-distance data."""
    if len(samples) < 2:
        raise DegenerateInput(f"need at least 2 samples, got {len(samples)}")
    if not d0 > 0:
        raise InvalidDistance(d0)
    d = np.array([s.distance_m for s in samples], dtype=float)
    y = np.array([s.rssi_dbm for s in samples], dtype=float)
    if np.any(d <= 0):
        raise InvalidDistance(float(d[d <= 0][0]))
    x = -10.0 * np.log10(d / d0)
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx <= 1e-12 * max(1.0, float(x @ x)):
        raise DegenerateInput("all samples share one distance; slope is undetermined")
    alpha = float(xc @ (y - y.mean())) / sxx
    rssi0 = float(y.mean() - alpha * x.mean())
    resid = y - (rssi0 + alpha * x)
    rmse = float(np.sqrt(np.mean(resid**2)))
    return PathLossFit(alpha_hat=alpha, rssi0_hat=rssi0, rmse_db=rmse, n=len(samples))


def delivery_probability(
    rssi: float,
    link=None,
    *,
    sensitivity_dbm: float | None = None,
    width_db: float | None = None,
) -> float:
    """Logistic packet-success probability centred on the receiver sensitivity.

    ``link`` may be any object with ``sensitivity_dbm`` and
    ``logistic_width_db`` attributes (normally a ``LinkConfig``); explicit
    keyword arguments take precedence.
    """
    s = sensitivity_dbm
    w = width_db
    if s is None:
        s = getattr(link, "sensitivity_dbm", DEFAULT_SENSITIVITY_DBM)
    if w is None:
        w = getattr(link, "logistic_width_db", DEFAULT_LOGISTIC_WIDTH_DB)
    z = (s - rssi) / w
    # split on sign so exp() never overflows
    if z >= 0:
        e = math.exp(-z)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(z))


def read_measurements(path: str | Path) -> list[RssiSample]:
    """Load ``distance_m,rssi_dbm`` rows.  Extra columns are ignored."""
    with open(path, newline="") as fh:
        return parse_measurements(fh)


def parse_measurements(lines: Iterable[str]) -> list[RssiSample]:
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None:
        raise MeasurementFormatError("empty input: no header row")
    cols = [h.strip() for h in header]
    try:
        di = cols.index("distance_m")
        ri = cols.index("rssi_dbm")
    except ValueError:
        raise MeasurementFormatError(
            "line 1: header must contain distance_m and rssi_dbm"
        ) from None
    samples = []
    for row in reader:
        lineno = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        try:
            d = float(row[di])
            r = float(row[ri])
        except (IndexError, ValueError):
            raise MeasurementFormatError(f"line {lineno}: malformed row {row!r}") from None
        if not (math.isfinite(d) and math.isfinite(r)) or d <= 0:
            raise MeasurementFormatError(f"line {lineno}: invalid values {row!r}")
        samples.append(RssiSample(distance_m=d, rssi_dbm=r))
    return samples
