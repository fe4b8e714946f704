import math

import numpy as np
import pytest

from blepin import channel
from blepin.nodes import CentralState, PeripheralState
from blepin.protocol import TAG_TELEMETRY, Ack, AuthOk, KeyPress, Pin, Telemetry
from blepin.simulator import (
    C2P,
    FIGURE_GRIDS,
    P2C,
    LinkConfig,
    Outcome,
    pin_attempt_script,
    reproduce_figures,
    run_session,
    sweep_distance,
)

STORED = Pin("12AB")


def session(distance=1.0, scenario=None, attempts=("12AB",), horizon=5_000.0, seed=1, **link_kw):
    scenario = scenario or channel.scenario_preset("indoor")
    link = LinkConfig(distance, scenario, seed=seed, **link_kw)
    script = pin_attempt_script(list(attempts))
    return run_session(link, PeripheralState(), CentralState(STORED), script, horizon)


def test_correct_pin_noiseless_link():
    tr = session(scenario=channel.scenario_preset("indoor", sigma_db=0.0))
    assert tr.outcome is Outcome.AUTHENTICATED
    kinds = [type(e.frame).__name__ for e in tr.events]
    first_ok = kinds.index("AuthOk")
    assert "Telemetry" in kinds[first_ok:]
    assert all(e.rssi_dbm == channel.expected_rssi(channel.scenario_preset("indoor"), 1.0) for e in tr.events)
    assert "HELLO" in tr.central.display.rows[0]


def test_far_link_is_lost():
    tr = session(distance=1000.0)
    assert tr.outcome is Outcome.LINK_LOST
    assert not any(e.delivered for e in tr.events)
    # every frame exhausts 1 + max_retries attempts
    assert len(tr.events) == len(tr.dropped) * 6


def test_empty_script_times_out():
    tr = session(attempts=())
    assert tr.outcome is Outcome.TIMED_OUT
    assert tr.events == []


def test_three_wrong_attempts_lock_out():
    tr = session(attempts=("0000", "1111", "2222"), horizon=10_000.0)
    assert tr.outcome is Outcome.LOCKED_OUT


def test_authenticates_after_lockout_expires():
    link = LinkConfig(1.0, channel.scenario_preset("indoor", sigma_db=0.0))
    script = pin_attempt_script(["0000", "0000", "0000"])
    retry_at = 40_000.0
    script += [(retry_at + 100 * i, k) for i, k in enumerate("12AB#")]
    tr = run_session(link, PeripheralState(), CentralState(STORED, lockout_duration_ms=30_000), script, 45_000.0)
    assert tr.outcome is Outcome.AUTHENTICATED


def test_script_validation():
    link = LinkConfig(1.0, channel.scenario_preset("indoor"))
    with pytest.raises(ValueError):
        run_session(link, PeripheralState(), CentralState(STORED), [(6000.0, "1")], 5000.0)
    with pytest.raises(ValueError):
        run_session(link, PeripheralState(), CentralState(STORED), [(10.0, "x")], 5000.0)
    with pytest.raises(ValueError):
        run_session(link, PeripheralState(), CentralState(STORED), [], 0.0)


@pytest.mark.parametrize(
    "kwargs",
    [dict(distance_m=0.0), dict(conn_interval_ms=0.0), dict(max_retries=-1), dict(seed=-3)],
)
def test_link_config_validation(kwargs):
    base = dict(distance_m=1.0, scenario=channel.scenario_preset("indoor"))
    base.update(kwargs)
    with pytest.raises(ValueError):
        LinkConfig(**base)


def test_session_determinism():
    a = session(distance=24.0, seed=9)
    b = session(distance=24.0, seed=9)
    c = session(distance=24.0, seed=10)
    assert a.export() == b.export()
    assert a.export() != c.export()


def test_export_format():
    tr = session(scenario=channel.scenario_preset("indoor", sigma_db=0.0))
    lines = tr.export_lines()
    assert lines[0] == "time_ms,dir,frame,rssi_dbm,delivered"
    assert lines[1] == "100.000,p2c,0131,-45.0000,1"


def _lossy_traces(n=60):
    out = []
    for seed in range(n):
        out.append(
            session(
                distance=20.0 + seed % 10,
                attempts=("0000", "12AB"),
                horizon=8_000.0,
                seed=seed,
                processing_delay_ms=2.0,
            )
        )
    return out


def test_causality_and_retry_spacing():
    for tr in _lossy_traces():
        times = [e.time_ms for e in tr.events]
        assert times == sorted(times)
        for e in tr.events:
            if e.delivered:
                assert e.received_ms >= e.time_ms
            assert e.time_ms >= e.queued_ms
        for d in (P2C, C2P):
            evs = [e for e in tr.events if e.direction == d]
            for prev, cur in zip(evs, evs[1:]):
                if cur.attempt > 1:
                    assert prev.attempt == cur.attempt - 1
                    assert cur.time_ms - prev.time_ms == pytest.approx(30.0)
        for dv in tr.deliveries:
            assert any(
                e.delivered and e.frame == dv.frame and e.received_ms <= dv.time_ms for e in tr.events
            )


def test_some_lossy_sessions_needed_retries():
    retried = sum(any(e.attempt > 1 for e in tr.events) for tr in _lossy_traces())
    assert retried > 0


def test_latency_accounting():
    for tr in _lossy_traces():
        expected = [
            (e.time_ms - e.queued_ms) + 1.0 + 2.0
            for e in tr.events
            if e.delivered and e.direction == P2C and isinstance(e.frame, KeyPress)
        ]
        assert tr.keypress_to_display_latencies_ms == pytest.approx(expected)


def test_latency_noiseless_is_airtime():
    tr = session(scenario=channel.scenario_preset("indoor", sigma_db=0.0))
    assert tr.keypress_to_display_latencies_ms == [1.0] * 4


def test_auth_gate_under_loss():
    for tr in _lossy_traces():
        auth_at = min((d.time_ms for d in tr.deliveries if AuthOk() in d.replies), default=math.inf)
        for d in tr.deliveries:
            if isinstance(d.frame, Telemetry) and Ack(TAG_TELEMETRY) in d.replies:
                assert d.time_ms >= auth_at


# sweeps


def test_noiseless_sweep_means_match_model():
    sc = channel.scenario_preset("outdoor", sigma_db=0.0)
    ds = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0]
    rep = sweep_distance(sc, ds, 4, seed=3)
    means = [s.mean_rssi_dbm for s in rep.summary]
    assert means == [channel.expected_rssi(sc, d) for d in ds]
    assert all(a > b for a, b in zip(means, means[1:]))
    assert len(rep.rows) == len(ds) * 4


def test_sweep_determinism_and_trial_independence():
    sc = channel.scenario_preset("indoor")
    a = sweep_distance(sc, [0.5, 2.0], 5, seed=7)
    b = sweep_distance(sc, [0.5, 2.0], 5, seed=7)
    assert a.to_csv() == b.to_csv()
    short = sweep_distance(sc, [0.5, 2.0], 3, seed=7)
    assert [r for r in a.rows if r.trial < 3] == short.rows


def test_sweep_validation():
    sc = channel.scenario_preset("indoor")
    with pytest.raises(channel.InvalidDistance):
        sweep_distance(sc, [1.0, -2.0], 3, seed=1)
    with pytest.raises(ValueError):
        sweep_distance(sc, [], 3, seed=1)
    with pytest.raises(ValueError):
        sweep_distance(sc, [1.0], 0, seed=1)


def test_indoor_sweep_fit_recovers_alpha():
    sc = channel.scenario_preset("indoor")
    rep = sweep_distance(sc, np.geomspace(0.1, 6.0, 20), 200, seed=1)
    fit = channel.fit_path_loss(rep.samples(delivered_only=True))
    assert abs(fit.alpha_hat - 3.1) <= 0.15


def test_delivery_rate_consistency():
    sc = channel.scenario_preset("indoor")
    d = channel.estimate_distance(sc, -90.0)
    n = 10_000
    rep = sweep_distance(sc, [d], n, seed=5)
    p = np.array([channel.delivery_probability(r.rssi_dbm) for r in rep.rows])
    rate = rep.summary[0].delivery_rate
    se = math.sqrt(p.mean() * (1 - p.mean()) / n)
    assert abs(rate - p.mean()) <= 3 * se


def test_sweep_csv_formats():
    sc = channel.scenario_preset("ground", sigma_db=0.0)
    rep = sweep_distance(sc, [1.0, 10.0], 2, seed=1)
    lines = rep.to_csv().splitlines()
    assert lines[0] == "scenario,distance_m,trial,rssi_dbm,delivered"
    assert lines[1] == "ground,1.0,0,-45.000000,1"
    over = rep.overlay_csv().splitlines()
    assert over == ["scenario,distance_m,expected_rssi_dbm", "ground,1.0,-45.000000", "ground,10.0,-72.500000"]


def test_reproduce_figures(tmp_path):
    reports = reproduce_figures(7, trials=20, out_dir=tmp_path)
    assert set(reports) == {"indoor", "outdoor", "combined", "ground"}
    for name, rep in reports.items():
        assert len(rep.rows) == len(FIGURE_GRIDS[name]) * 20
        sweep = (tmp_path / f"{name}_sweep.csv").read_text().splitlines()
        assert len(sweep) == len(rep.rows) + 1
        assert (tmp_path / f"{name}_analytical.csv").exists()
    assert FIGURE_GRIDS["indoor"][0] == 0.1 and FIGURE_GRIDS["indoor"][-1] == 6.0
    assert FIGURE_GRIDS["outdoor"][-1] == 50.0
    assert FIGURE_GRIDS["combined"][-1] == 30.0 and 15.5 in FIGURE_GRIDS["combined"]
