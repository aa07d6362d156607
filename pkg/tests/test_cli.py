import csv
import json
import os

import numpy as np
import pytest

from ssflab import cli, pipelines
from ssflab.config import PRESETS, load_config
from ssflab.errors import ConfigError, DomainCoverageError, SolverFailureError
from ssflab.spectral import TestFunction, counting_curve, krein_rhs


def _read_csv(path):
    with open(os.path.join(path, "curves.csv")) as fh:
        return list(csv.DictReader(fh))


def test_all_presets_parse():
    for name in PRESETS:
        cfg = load_config(preset=name)
        assert len(cfg.digest) == 16


def test_unknown_keys_are_errors():
    with pytest.raises(ConfigError, match="grid.spacing"):
        load_config(text="[grid]\nspacing = 0.1\n")
    with pytest.raises(ConfigError, match="unknown section"):
        load_config(text="[plotting]\ncolor = red\n")


def test_small_shift_rejected_at_parse_time():
    with pytest.raises(ConfigError, match="M > 1"):
        load_config(text="[transform]\nshift = 0.5\n")


def test_other_parse_time_checks():
    bad = ["[experiment]\ndimension = 2\n", "[experiment]\nlambdas = 1, 0.5\n",
           "[ssf]\neta_factors = 1, 2, 3\n", "[excess]\nradii = 1, 2, 4, 30\n",
           "[excess]\nradii = 1, 2, 3, 4\n", "[probes]\nbeta = 3.6\n",
           "[potential]\nalpha = 3.5\n", "[tolerances]\nkrein = 0\n"]
    for text in bad:
        with pytest.raises(ConfigError):
            load_config(text=text)


def test_tolerance_override_and_hash():
    a = load_config(preset="zero-1d")
    b = load_config(preset="zero-1d", overrides=["friedel=0.01"])
    assert b.tol("friedel") == 0.01 and a.digest != b.digest
    assert load_config(preset="zero-1d").digest == a.digest
    with pytest.raises(ConfigError):
        load_config(preset="zero-1d", overrides=["nonsense=1"])


def test_serialized_config_round_trips(tmp_path):
    cfg = load_config(preset="square-well-3d")
    path = tmp_path / "c.ini"
    path.write_text(cfg.serialize())
    again = load_config(str(path))
    assert again.digest == cfg.digest and again.dimension == 3


def test_ssf_zero_preset_all_zero(tmp_path):
    out = tmp_path / "zero"
    assert cli.main(["ssf", "--preset", "zero-1d", "--out", str(out)]) == 0
    rows = _read_csv(out)
    assert rows and all(float(r["xi"]) == 0.0 for r in rows)
    assert set(rows[0]) == {"lambda", "xi", "xi_err", "eta", "route"}
    assert json.loads((out / "report.json").read_text())["passed"] is True


def test_friedel_zero_preset(tmp_path):
    out = tmp_path / "f"
    assert cli.main(["friedel-check", "--preset", "zero-1d", "--out", str(out)]) == 0
    for r in _read_csv(out):
        assert float(r["theta"]) == float(r["xi"]) == float(r["z_inf"]) == 0.0


def test_krein_zero_preset(tmp_path):
    out = tmp_path / "k"
    assert cli.main(["krein-check", "--preset", "zero-1d", "--out", str(out)]) == 0
    for r in _read_csv(out):
        assert float(r["lhs"]) == float(r["rhs"]) == 0.0


def test_malformed_config_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text("[transform]\nshift = 0.9\n")
    assert cli.main(["ssf", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "shift" in capsys.readouterr().err


def test_shift_below_spectrum_bound_is_config_error(tmp_path):
    # M = 1.1 passes the parse-time check but fails once inf spec(H) < 0 is known
    path = tmp_path / "m.ini"
    path.write_text("[transform]\nshift = 1.1\n[potential]\ndepth = -3\n")
    assert cli.main(["ssf", "--config", str(path), "--out", str(tmp_path / "o")]) == 2


def test_failing_check_exit_code(tmp_path):
    out = tmp_path / "k"
    code = cli.main(["krein-check", "--preset", "square-well-1d", "--out", str(out),
                     "--tolerance-override", "krein=1e-15"])
    assert code == 1
    assert "FAIL" in (out / "report.txt").read_text()


def test_solver_failure_exit_code(tmp_path, monkeypatch):
    def boom(cfg, threads=1):
        raise SolverFailureError("forced", 1.0)

    monkeypatch.setitem(cli.PIPELINES, "ssf", boom)
    assert cli.main(["ssf", "--preset", "zero-1d", "--out", str(tmp_path)]) == 3


def test_outputs_are_reproducible_across_thread_counts(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["ssf", "--preset", "gaussian-1d-small", "--out", str(a)]) == 0
    assert cli.main(["ssf", "--preset", "gaussian-1d-small", "--out", str(b), "--threads", "3"]) == 0
    assert (a / "curves.csv").read_bytes() == (b / "curves.csv").read_bytes()
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()


def test_csv_has_seventeen_digit_numbers(tmp_path):
    cli.main(["phase", "--preset", "gaussian-1d-small", "--out", str(tmp_path)])
    rows = _read_csv(tmp_path)
    theta = rows[0]["theta"]
    assert float(theta) == float(format(float(theta), ".17g"))
    assert all("theta_err" in r for r in rows)


def test_report_merge(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    cli.main(["krein-check", "--preset", "zero-1d", "--out", str(a)])
    cli.main(["probes", "--preset", "probe", "--out", str(b)])
    code = cli.main(["report", str(a), str(b), "--out", str(tmp_path / "m")])
    assert code == 0
    merged = json.loads((tmp_path / "m" / "report.json").read_text())
    assert len(merged["checks"]) == 4 + 3


def test_krein_domain_error_surfaces():
    cfg = load_config(preset="square-well-1d")
    channels = pipelines.build_channels(cfg)
    f = TestFunction("bump", center=-50.0, width=1.0)
    ch = channels[0]
    curve = counting_curve(ch.eigH, ch.eigH0, -2.0, 5.0, 0.01)
    with pytest.raises(DomainCoverageError):
        krein_rhs(curve, TestFunction("bump", center=6.0, width=2.0))
    assert pipelines.krein_values(cfg, channels, f) == (0.0, 0.0)


def test_square_well_ssf_tracks_phase(tmp_path):
    cfg = load_config(preset="square-well-1d",
                      text="[experiment]\nlambdas = 0.2, 1.0, 2.5, 5.0\n")
    rep = pipelines.run_ssf(cfg)
    ph = pipelines.run_phase(cfg)
    xi = {r[0]: (r[1], r[2]) for r in rep.rows if r[4] == "contour"}
    for lam, theta, _ in ph.rows:
        value, err = xi[lam]
        assert abs(value - theta) < max(5 * err, 0.02)
    assert np.isfinite([r[1] for r in rep.rows]).all()
