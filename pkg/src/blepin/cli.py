"""Command-line interface: sweeps, fitting, scripted and interactive sessions.

Settings are resolved as: command-line flag, then ``--config`` file
(``key = value`` lines, ``;`` starts a comment), then built-in default.

Exit codes: 0 success, 2 usage/validation, 3 I/O, 4 degenerate input.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from pathlib import Path
from typing import Callable, Sequence, TextIO

import numpy as np

from . import channel
from .channel import (
    ChannelError,
    CompositeScenario,
    DegenerateInput,
    MeasurementFormatError,
    Scenario,
    Segment,
)
from .nodes import KEYPAD_KEYS, CentralState, PeripheralState
from .protocol import FrameError, Pin
from .simulator import (
    LinkConfig,
    LinkSimulation,
    figure_scenarios,
    pin_attempt_script,
    reproduce_figures,
    run_session,
    sweep_distance,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DEGENERATE = 4


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE) -> None:
        super().__init__(message)
        self.code = code


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise ValueError(f"must be > 0: {text}")
    return v


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise ValueError(f"must be >= 0: {text}")
    return v


def _pos_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise ValueError(f"must be >= 1: {text}")
    return v


# key -> (converter, default)
SETTINGS: dict[str, tuple[Callable[[str], object], object]] = {
    "seed": (_nonneg_int, 1),
    "scenario": (str, "indoor"),
    "out": (str, None),
    "sigma": (float, None),
    "rssi0": (float, channel.DEFAULT_RSSI_AT_D0),
    "pin": (str, "12AB"),
    "max_count": (_pos_int, 3),
    "lockout_ms": (float, 30_000.0),
    "trials": (_pos_int, 100),
    "start": (_positive_float, 0.1),
    "stop": (_positive_float, 6.0),
    "points": (_pos_int, 20),
    "spacing": (str, "log"),
    "distances": (str, None),
    "overlay": (str, None),
    "distance": (_positive_float, 1.0),
    "horizon_ms": (_positive_float, None),
    "key_interval_ms": (_positive_float, 250.0),
    "telemetry_period_ms": (_positive_float, 1000.0),
    "conn_interval_ms": (_positive_float, 30.0),
    "airtime_ms": (float, 1.0),
    "max_retries": (_nonneg_int, 5),
    "sensitivity": (float, channel.DEFAULT_SENSITIVITY_DBM),
    "d0": (_positive_float, channel.DEFAULT_D0),
    "expect_alpha": (float, None),
}


def load_config(path: str) -> dict[str, object]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}", EXIT_IO) from None
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split(";", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in SETTINGS:
            raise CliError(f"{path}:{lineno}: unknown setting {key!r}")
        conv = SETTINGS[key][0]
        try:
            values[key] = conv(value)
        except ValueError as exc:
            raise CliError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return values


def resolve(args: argparse.Namespace) -> dict[str, object]:
    config = load_config(args.config) if getattr(args, "config", None) else {}
    merged = {}
    for key, (_, default) in SETTINGS.items():
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
        elif key in config:
            merged[key] = config[key]
        else:
            merged[key] = default
    return merged


def parse_scenario(text: str, *, sigma: float | None = None, rssi0: float = channel.DEFAULT_RSSI_AT_D0) -> Scenario:
    """Preset name, or a composite spec ``name:start[:offset_db],...``.

    ``combined:0,combined:16:6`` is the default indoor-to-outdoor path.
    """
    if ":" not in text:
        return channel.scenario_preset(text, rssi_at_d0=rssi0, sigma_db=sigma)
    segments = []
    for part in text.split(","):
        fields = part.strip().split(":")
        if len(fields) not in (2, 3):
            raise CliError(f"bad composite segment {part!r}; expected name:start[:offset_db]")
        try:
            start = float(fields[1])
            offset = float(fields[2]) if len(fields) == 3 else 0.0
        except ValueError:
            raise CliError(f"bad number in composite segment {part!r}") from None
        params = channel.scenario_preset(fields[0], rssi_at_d0=rssi0, sigma_db=sigma)
        segments.append(Segment(start, params, offset))
    return CompositeScenario("composite", tuple(segments))


def _distances(cfg: dict) -> list[float]:
    if cfg["distances"]:
        try:
            ds = [float(x) for x in str(cfg["distances"]).split(",") if x.strip()]
        except ValueError:
            raise CliError(f"bad distance list {cfg['distances']!r}") from None
    else:
        lo, hi, n = cfg["start"], cfg["stop"], cfg["points"]
        if hi < lo:
            raise CliError("--to must be >= --from")
        if cfg["spacing"] == "log":
            ds = np.geomspace(lo, hi, n).tolist()
        elif cfg["spacing"] == "linear":
            ds = np.linspace(lo, hi, n).tolist()
        else:
            raise CliError(f"unknown spacing {cfg['spacing']!r}; use log or linear")
    if not ds or any(not d > 0 for d in ds):
        raise CliError("distances must be non-empty and all > 0")
    return ds


def _write_atomic(files: dict[Path, str]) -> None:
    """Write all files or none of them."""
    staged = []
    try:
        for path, text in files.items():
            fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            staged.append((tmp, path))
        for tmp, path in staged:
            os.replace(tmp, path)
    except OSError as exc:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)
        raise CliError(f"cannot write output: {exc}", EXIT_IO) from None


# --- commands -----------------------------------------------------------------


def cmd_sweep(args: argparse.Namespace, out: TextIO) -> int:
    cfg = resolve(args)
    scenario = parse_scenario(cfg["scenario"], sigma=cfg["sigma"], rssi0=cfg["rssi0"])
    distances = _distances(cfg)
    report = sweep_distance(
        scenario, distances, cfg["trials"], cfg["seed"], sensitivity_dbm=cfg["sensitivity"]
    )
    sweep_path = Path(cfg["out"] or "sweep.csv")
    overlay_path = Path(cfg["overlay"]) if cfg["overlay"] else sweep_path.with_name(
        f"{sweep_path.stem}_analytical.csv"
    )
    _write_atomic({sweep_path: report.to_csv(), overlay_path: report.overlay_csv()})

    print(f"scenario {report.name}: {len(distances)} distances x {report.trials} trials", file=out)
    print(f"{'distance_m':>11} {'mean_dBm':>9} {'std_dB':>7} {'model_dBm':>9} {'delivery':>8}", file=out)
    for s in report.summary:
        print(
            f"{s.distance_m:11.3f} {s.mean_rssi_dbm:9.2f} {s.std_rssi_dbm:7.2f} "
            f"{s.expected_rssi_dbm:9.2f} {s.delivery_rate:8.3f}",
            file=out,
        )
    print(f"wrote {sweep_path} ({len(report.rows)} rows) and {overlay_path}", file=out)
    return EXIT_OK


def cmd_fit(args: argparse.Namespace, out: TextIO) -> int:
    cfg = resolve(args)
    try:
        samples = channel.read_measurements(args.csv)
    except OSError as exc:
        raise CliError(f"cannot read {args.csv}: {exc}", EXIT_IO) from None
    except MeasurementFormatError as exc:
        if str(exc).startswith("empty input"):
            raise CliError(f"{args.csv}: {exc}", EXIT_DEGENERATE) from None
        raise CliError(f"{args.csv}: {exc}") from None
    if args.delivered_only:
        samples = _delivered_rows(args.csv, samples)
    if not samples:
        raise CliError(f"{args.csv}: empty input: no data rows", EXIT_DEGENERATE)
    try:
        fit = channel.fit_path_loss(samples, d0=cfg["d0"])
    except DegenerateInput as exc:
        raise CliError(f"DegenerateInput: {exc}", EXIT_DEGENERATE) from None

    print(f"alpha_hat={fit.alpha_hat:.6f}", file=out)
    print(f"rssi0_hat={fit.rssi0_hat:.6f}", file=out)
    print(f"rmse_db={fit.rmse_db:.6f}", file=out)
    print(f"n={fit.n}", file=out)
    expect = cfg["expect_alpha"]
    if expect is None and args.scenario is not None:
        expect = channel.scenario_preset(args.scenario).alpha
    if expect is not None:
        print(f"alpha_deviation={fit.alpha_hat - expect:+.6f} (expected {expect:g})", file=out)
    return EXIT_OK


def _delivered_rows(path: str, samples: list[channel.RssiSample]) -> list[channel.RssiSample]:
    import csv

    with open(path, newline="") as fh:
        rows = [r for r in csv.DictReader(fh) if any((v or "").strip() for v in r.values())]
    if rows and "delivered" not in rows[0]:
        raise CliError(f"{path}: --delivered-only needs a 'delivered' column")
    return [s for s, r in zip(samples, rows) if r["delivered"].strip() == "1"]


def read_script(path: str) -> list[tuple[float, str]]:
    """Keystroke script: one ``time_ms key`` pair per line."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise CliError(f"cannot read script {path}: {exc}", EXIT_IO) from None
    script = []
    for lineno, line in enumerate(lines, 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 2:
            raise CliError(f"{path}:{lineno}: expected 'time_ms key'")
        try:
            t = float(parts[0])
        except ValueError:
            raise CliError(f"{path}:{lineno}: bad time {parts[0]!r}") from None
        key = parts[1].upper()
        if key not in KEYPAD_KEYS or len(key) != 1:
            raise CliError(f"{path}:{lineno}: {parts[1]!r} is not a keypad key")
        script.append((t, key))
    return script


def _session_objects(cfg: dict) -> tuple[LinkConfig, PeripheralState, CentralState]:
    scenario = parse_scenario(cfg["scenario"], sigma=cfg["sigma"], rssi0=cfg["rssi0"])
    link = LinkConfig(
        distance_m=cfg["distance"],
        scenario=scenario,
        seed=cfg["seed"],
        conn_interval_ms=cfg["conn_interval_ms"],
        per_frame_airtime_ms=cfg["airtime_ms"],
        sensitivity_dbm=cfg["sensitivity"],
        max_retries=cfg["max_retries"],
    )
    peripheral = PeripheralState(telemetry_period_ms=cfg["telemetry_period_ms"])
    central = CentralState(
        stored_pin=Pin.parse(cfg["pin"]),
        max_count=cfg["max_count"],
        lockout_duration_ms=cfg["lockout_ms"],
    )
    return link, peripheral, central


def cmd_session(args: argparse.Namespace, out: TextIO) -> int:
    cfg = resolve(args)
    if args.script and args.pin_attempts:
        raise CliError("use either --script or --pin-attempts, not both")
    if args.script:
        script = read_script(args.script)
    elif args.pin_attempts:
        attempts = [a.strip().upper() for a in args.pin_attempts.split(",")]
        for a in attempts:
            if any(c not in KEYPAD_KEYS for c in a):
                raise CliError(f"attempt {a!r} contains non-keypad keys")
        script = pin_attempt_script(attempts, key_interval_ms=cfg["key_interval_ms"])
    else:
        script = []
    last = max((t for t, _ in script), default=0.0)
    horizon = cfg["horizon_ms"] if cfg["horizon_ms"] is not None else last + 5_000.0
    if last > horizon:
        raise CliError(f"script time {last:g} ms is beyond the horizon {horizon:g} ms")
    link, peripheral, central = _session_objects(cfg)

    trace = run_session(link, peripheral, central, script, horizon)
    if cfg["out"]:
        _write_atomic({Path(cfg["out"]): trace.export()})

    print(f"outcome: {trace.outcome.value}", file=out)
    print(trace.central.display.render(), file=out)
    lat = trace.keypress_to_display_latencies_ms
    if lat:
        print(
            f"keypress->display latency: n={len(lat)} mean={np.mean(lat):.2f} ms max={max(lat):.2f} ms",
            file=out,
        )
    else:
        print("keypress->display latency: no keypresses displayed", file=out)
    delivered = sum(e.delivered for e in trace.events)
    print(f"attempts: {len(trace.events)} delivered: {delivered} dropped frames: {len(trace.dropped)}", file=out)
    for note in trace.notes:
        print(f"note: {note}", file=out)
    return EXIT_OK


def cmd_interactive(args: argparse.Namespace, out: TextIO, stdin: TextIO | None = None) -> int:
    cfg = resolve(args)
    stdin = stdin or sys.stdin
    link, peripheral, central = _session_objects(cfg)
    sim = LinkSimulation(link, peripheral, central)
    step = cfg["key_interval_ms"]
    seen = 0
    print("keys: 0-9 A-F, * reset, # submit, q quit", file=out)
    print(sim.central.display.render(), file=out)
    for line in stdin:
        for ch in line.strip():
            if ch.isspace():
                continue
            if ch in "qQ":
                print("bye", file=out)
                return EXIT_OK
            key = ch.upper()
            if key not in KEYPAD_KEYS:
                print(f"ignored {ch!r}: use 0-9, A-F, *, # or q", file=out)
                continue
            at = sim.now + step
            sim.press(key, at)
            sim.advance(at + step)
            for ev in sim.events[seen:]:
                status = "ok" if ev.delivered else "lost"
                print(
                    f"  t={ev.time_ms:9.1f} {ev.direction} {type(ev.frame).__name__:<9} "
                    f"rssi={ev.rssi_dbm:7.2f} dBm {status}",
                    file=out,
                )
            seen = len(sim.events)
            print(sim.central.display.render(), file=out)
    return EXIT_OK


def cmd_reproduce(args: argparse.Namespace, out: TextIO) -> int:
    cfg = resolve(args)
    out_dir = Path(cfg["out"] or "figures")
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create {out_dir}: {exc}", EXIT_IO) from None
    reports = reproduce_figures(cfg["seed"], trials=cfg["trials"])
    files = {}
    for name, rep in reports.items():
        files[out_dir / f"{name}_sweep.csv"] = rep.to_csv()
        files[out_dir / f"{name}_analytical.csv"] = rep.overlay_csv()
    _write_atomic(files)
    for name, rep in reports.items():
        fit = channel.fit_path_loss(rep.samples(delivered_only=True))
        model = figure_scenarios()[name]
        alpha = model.alpha if hasattr(model, "alpha") else model.segments[0].params.alpha
        print(
            f"{name:9s} rows={len(rep.rows):6d} model alpha={alpha:<5g} fitted alpha={fit.alpha_hat:.3f}",
            file=out,
        )
    print(f"wrote {len(files)} files to {out_dir}", file=out)
    return EXIT_OK


# --- parser -------------------------------------------------------------------


def _typed(conv):
    def parse(text: str):
        try:
            return conv(text)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None

    return parse


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_typed(_nonneg_int))
    common.add_argument("--scenario", help="indoor, outdoor, combined, ground, or name:start[:offset],...")
    common.add_argument("--out", help="output path")
    common.add_argument("--config", help="key = value settings file")

    link = argparse.ArgumentParser(add_help=False)
    link.add_argument("--distance", type=_typed(_positive_float), help="node separation (m)")
    link.add_argument("--sigma", type=float, help="shadowing sigma override (dB)")
    link.add_argument("--rssi0", type=float, help="RSSI at 1 m (dBm)")
    link.add_argument("--pin", help="stored 4-symbol PIN")
    link.add_argument("--max-count", type=_typed(_pos_int))
    link.add_argument("--lockout-ms", type=float)
    link.add_argument("--key-interval-ms", type=_typed(_positive_float))
    link.add_argument("--telemetry-period-ms", type=_typed(_positive_float))
    link.add_argument("--conn-interval-ms", type=_typed(_positive_float))
    link.add_argument("--airtime-ms", type=float)
    link.add_argument("--max-retries", type=_typed(_nonneg_int))
    link.add_argument("--sensitivity", type=float, help="receiver sensitivity midpoint (dBm)")

    parser = argparse.ArgumentParser(prog="blepin", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", parents=[common], help="RSSI vs distance sweep to CSV")
    p.add_argument("--from", dest="start", type=_typed(_positive_float))
    p.add_argument("--to", dest="stop", type=_typed(_positive_float))
    p.add_argument("--points", type=_typed(_pos_int))
    p.add_argument("--spacing", choices=["log", "linear"])
    p.add_argument("--distances", help="comma-separated distances (overrides --from/--to)")
    p.add_argument("--trials", type=_typed(_pos_int))
    p.add_argument("--sigma", type=float)
    p.add_argument("--rssi0", type=float)
    p.add_argument("--sensitivity", type=float)
    p.add_argument("--overlay", help="analytical curve CSV path")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit", parents=[common], help="fit path-loss exponent to a CSV")
    p.add_argument("csv")
    p.add_argument("--d0", type=_typed(_positive_float))
    p.add_argument("--expect-alpha", type=float)
    p.add_argument("--delivered-only", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("session", parents=[common, link], help="run a scripted session")
    p.add_argument("--script", help="file of 'time_ms key' lines")
    p.add_argument("--pin-attempts", help="comma-separated PIN attempts, each submitted with #")
    p.add_argument("--horizon-ms", type=_typed(_positive_float))
    p.set_defaults(func=cmd_session)

    p = sub.add_parser("interactive", parents=[common, link], help="type PINs on a virtual keypad")
    p.set_defaults(func=cmd_interactive)

    p = sub.add_parser("reproduce-figures", parents=[common], help="run the four environment sweeps")
    p.add_argument("--trials", type=_typed(_pos_int))
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv: Sequence[str] | None = None, out: TextIO | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    out = out or sys.stdout
    try:
        return args.func(args, out)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ChannelError, FrameError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
