import io

import pytest

from blepin.cli import cmd_interactive, build_parser, main


def run(argv):
    out = io.StringIO()
    code = main([str(a) for a in argv], out=out)
    return code, out.getvalue()


def test_sweep_row_count_and_overlay(tmp_path):
    path = tmp_path / "s.csv"
    code, text = run(
        ["sweep", "--scenario", "indoor", "--from", 0.1, "--to", 6, "--points", 20, "--trials", 100, "--seed", 7, "--out", path]
    )
    assert code == 0
    assert len(path.read_text().splitlines()) == 2001
    overlay = tmp_path / "s_analytical.csv"
    assert overlay.read_text().startswith("scenario,distance_m,expected_rssi_dbm\n")
    assert "2000 rows" in text


def test_sweep_is_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert run(["sweep", "--seed", 7, "--trials", 10, "--out", p])[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_sweep_unknown_scenario(tmp_path, capsys):
    out = tmp_path / "x.csv"
    code, _ = run(["sweep", "--scenario", "attic", "--out", out])
    assert code == 2
    err = capsys.readouterr().err
    for name in ("indoor", "outdoor", "combined", "ground"):
        assert name in err
    assert not out.exists()


def test_sweep_bad_args_exit_2(tmp_path):
    assert run(["sweep", "--trials", 0, "--out", tmp_path / "x.csv"])[0] == 2
    assert run(["sweep", "--from", 5, "--to", 1, "--out", tmp_path / "x.csv"])[0] == 2
    assert run(["sweep", "--distances", "1,-1", "--out", tmp_path / "x.csv"])[0] == 2
    assert not (tmp_path / "x.csv").exists()


def test_sweep_unwritable_path(tmp_path):
    code, _ = run(["sweep", "--trials", 2, "--out", tmp_path / "missing" / "s.csv"])
    assert code == 3


def test_sweep_composite_spec(tmp_path):
    path = tmp_path / "c.csv"
    code, _ = run(
        ["sweep", "--scenario", "combined:0,combined:16:6", "--sigma", 0, "--distances", "15.5,16.5", "--trials", 1, "--out", path]
    )
    assert code == 0
    rows = path.read_text().splitlines()[1:]
    r155, r165 = (float(r.split(",")[3]) for r in rows)
    assert r165 > r155


def test_fit_on_noiseless_ground_sweep(tmp_path):
    path = tmp_path / "g.csv"
    run(["sweep", "--scenario", "ground", "--sigma", 0, "--from", 1, "--to", 30, "--trials", 2, "--out", path])
    code, text = run(["fit", path, "--expect-alpha", 2.75])
    assert code == 0
    vals = dict(line.split("=", 1) for line in text.splitlines() if "=" in line)
    assert float(vals["alpha_hat"]) == pytest.approx(2.75, abs=1e-6)
    assert float(vals["rssi0_hat"]) == pytest.approx(-45.0, abs=1e-5)
    assert int(vals["n"]) == 40
    assert "alpha_deviation=+0.000000" in text


def test_fit_delivered_only(tmp_path):
    path = tmp_path / "s.csv"
    run(["sweep", "--scenario", "indoor", "--from", 1, "--to", 60, "--trials", 5, "--out", path])
    code, text = run(["fit", path, "--delivered-only"])
    assert code == 0
    n = int(dict(line.split("=", 1) for line in text.splitlines() if "=" in line)["n"])
    assert 0 < n < 100


def test_fit_one_row_is_degenerate(tmp_path, capsys):
    path = tmp_path / "one.csv"
    path.write_text("distance_m,rssi_dbm\n1.0,-45\n")
    assert run(["fit", path])[0] == 4
    assert "DegenerateInput" in capsys.readouterr().err


def test_fit_header_only(tmp_path, capsys):
    path = tmp_path / "h.csv"
    path.write_text("distance_m,rssi_dbm\n")
    assert run(["fit", path])[0] == 4
    assert "empty input" in capsys.readouterr().err


def test_fit_malformed_row_names_line(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("distance_m,rssi_dbm\n1,-45\n2,oops\n")
    assert run(["fit", path])[0] == 2
    assert "line 3" in capsys.readouterr().err


def test_fit_missing_file(tmp_path):
    assert run(["fit", tmp_path / "nope.csv"])[0] == 3


def test_session_correct_pin(tmp_path):
    trace = tmp_path / "trace.csv"
    code, text = run(["session", "--pin-attempts", "12AB", "--out", trace])
    assert code == 0
    assert "outcome: Authenticated" in text
    assert "HELLO" in text
    assert trace.read_text().startswith("time_ms,dir,frame,rssi_dbm,delivered\n")


def test_session_wrong_pin():
    code, text = run(["session", "--pin-attempts", "0000"])
    assert code == 0
    assert "Wrong PIN," in text and "enter again" in text


def test_session_lockout():
    code, text = run(["session", "--pin-attempts", "0000,1111,2222", "--max-count", 3])
    assert code == 0
    assert "outcome: LockedOut" in text


def test_session_script_file(tmp_path):
    script = tmp_path / "keys.txt"
    script.write_text("100 1\n300 2\n500 a\n700 b\n900 #\n")
    code, text = run(["session", "--script", script])
    assert code == 0 and "outcome: Authenticated" in text


def test_session_script_beyond_horizon(tmp_path):
    script = tmp_path / "keys.txt"
    script.write_text("100 1\n9000 #\n")
    assert run(["session", "--script", script, "--horizon-ms", 5000])[0] == 2


def test_session_bad_script_key(tmp_path):
    script = tmp_path / "keys.txt"
    script.write_text("100 Z\n")
    assert run(["session", "--script", script])[0] == 2


def test_config_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("; lab defaults\npin = 0000\nmax-count = 1\n")
    code, text = run(["session", "--config", cfg, "--pin-attempts", "0000"])
    assert "outcome: Authenticated" in text
    code, text = run(["session", "--config", cfg, "--pin", "12AB", "--pin-attempts", "0000"])
    assert "outcome: LockedOut" in text


def test_config_errors(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("colour = blue\n")
    assert run(["session", "--config", cfg])[0] == 2
    assert run(["session", "--config", tmp_path / "none.cfg"])[0] == 3


def test_usage_errors():
    assert run([])[0] == 2
    assert run(["sweep", "--seed", "-1"])[0] == 2
    assert run(["session", "--pin", "12"])[0] == 2


def _interactive(keys):
    args = build_parser().parse_args(["interactive"])
    out = io.StringIO()
    code = cmd_interactive(args, out, stdin=io.StringIO(keys))
    return code, out.getvalue()


def test_interactive_hello():
    code, text = _interactive("1 2 A B #\nq\n")
    assert code == 0
    assert "|HELLO           |" in text
    assert "rssi=" in text


def test_interactive_reset_clears_mask():
    code, text = _interactive("1 2 *\n")
    assert code == 0
    frames = text.split("+----------------+\n")
    assert "|**              |" in text
    assert frames[-1] == "" and "|                |\n|                |" in frames[-2]


def test_interactive_hint_and_quit():
    code, text = _interactive("x\nq\n1\n")
    assert code == 0
    assert "ignored 'x'" in text
    assert text.rstrip().endswith("bye")


def test_reproduce_figures_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(["reproduce-figures", "--seed", 7, "--trials", 5, "--out", d])[0] == 0
    names = sorted(p.name for p in a.iterdir())
    assert len(names) == 8
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()
