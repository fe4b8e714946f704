"""Simulated BLE keypad PIN authentication over a log-distance RSSI channel."""

from .channel import (
    CompositeScenario,
    DegenerateInput,
    InvalidDistance,
    PathLossFit,
    RssiSample,
    ScenarioParams,
    Segment,
    UnknownScenario,
    default_composite,
    delivery_probability,
    estimate_distance,
    expected_rssi,
    expected_rssi_composite,
    fit_path_loss,
    sample_rssi,
    scenario_preset,
)
from .nodes import (
    CentralState,
    Display,
    PeripheralState,
    TemperatureSource,
    central_step,
    peripheral_step,
    sample_temperature,
    verify_pin,
)
from .protocol import Pin, decode_frame, encode_frame
from .simulator import (
    LinkConfig,
    Outcome,
    SessionTrace,
    SweepReport,
    reproduce_figures,
    run_session,
    sweep_distance,
)

__version__ = "0.1.0"
