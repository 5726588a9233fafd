import math
import subprocess
import sys

import numpy as np
import pytest

from geopulse.cli import main
from geopulse.configio import parse_kv, write_kv
from geopulse.robustness import reoptimize, unprotected_variant
from geopulse.schedule import PRESETS


def run(args, capsys):
    code = main(args)
    out, err = capsys.readouterr()
    return code, out, err


def read_table(path):
    lines = path.read_text().splitlines()
    return lines[0].split(","), np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])


def test_synth_h_table(tmp_path, capsys):
    out = tmp_path / "h.csv"
    code, _, _ = run(["synth", "--preset", "H", "--samples", "1000", "--out", str(out)], capsys)
    assert code == 0
    header, rows = read_table(out)
    assert header == ["t", "theta", "phi", "beta", "delta", "omega", "psi"]
    assert rows.shape == (1000, 7)
    assert rows[0, 0] == 0.0 and rows[0, 1] == pytest.approx(0.7854)


def test_synth_s_peak_amplitude(tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert run(["synth", "--preset", "S", "--out", str(out)], capsys)[0] == 0
    _, rows = read_table(out)
    assert rows[:, 5].max() <= 1.001


def test_synth_unknown_preset(capsys):
    code, _, err = run(["synth", "--preset", "X"], capsys)
    assert code == 2
    assert "unknown preset" in err


def test_bad_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["synth", "--no-such-flag"])
    assert info.value.code == 2


def test_verify_t_passes(capsys):
    code, out, _ = run(["verify", "--preset", "T"], capsys)
    assert code == 0
    assert parse_kv(out)["check_fidelity"] == "pass"


def test_verify_s_reports_gamma(capsys):
    _, out, _ = run(["verify", "--preset", "S"], capsys)
    assert float(parse_kv(out)["gamma"]) == pytest.approx(0.785, abs=1e-3)


def test_verify_fails_without_beta(tmp_path, capsys):
    cfg = tmp_path / "flat.cfg"
    write_kv(cfg, PRESETS["S"].replace(d1=0.0, d2=0.0, d3=0.0).to_mapping())
    code, out, _ = run(["verify", "--config", str(cfg)], capsys)
    assert code == 1
    assert parse_kv(out)["check_dynamical_residual"] == "fail"


def test_missing_config_is_usage_error(tmp_path, capsys):
    code, _, err = run(["verify", "--config", str(tmp_path / "none.cfg")], capsys)
    assert code == 2


def test_sweep_unitary_zero_range(tmp_path, capsys):
    out = tmp_path / "u.csv"
    code, _, _ = run(["sweep-unitary", "--preset", "H", "--grid", "3", "--range", "0", "--out", str(out)], capsys)
    assert code == 0
    _, rows = read_table(out)
    assert rows.shape == (3, 4)
    assert np.all(np.abs(rows[:, 1:] - 1) <= 1e-3)


def test_sweep_outputs_are_byte_identical(tmp_path, capsys):
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for p in paths:
        run(["sweep-lindblad", "--preset", "T", "--grid", "3", "--format", "json", "--out", str(p)], capsys)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_sweep_threshold_exit_codes(tmp_path, capsys):
    args = ["sweep-unitary", "--preset", "T", "--grid", "3", "--diagonal", "--out", str(tmp_path / "d.csv")]
    assert run(args + ["--min-fidelity", "0.99"], capsys)[0] == 0
    assert run(args + ["--min-fidelity", "0.99999"], capsys)[0] == 1


def test_config_supplies_run_keys(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("preset = T\ngrid = 2\n")
    out = tmp_path / "g.csv"
    assert run(["sweep-unitary", "--config", str(cfg), "--out", str(out)], capsys)[0] == 0
    assert len(out.read_text().splitlines()) == 3
    assert run(["sweep-unitary", "--config", str(cfg), "--grid", "4", "--out", str(out)], capsys)[0] == 0
    assert len(out.read_text().splitlines()) == 5


def test_sweep_ct_noise_off_small_grid(tmp_path, capsys):
    out = tmp_path / "ct.csv"
    code, _, _ = run(["sweep-ct", "--grid", "1", "--noise", "off", "--out", str(out)], capsys)
    assert code == 0
    _, rows = read_table(out)
    assert rows[0, 1] >= 0.999


def test_sweep_ct_reads_rydberg_config(tmp_path, capsys):
    cfg = tmp_path / "ryd.cfg"
    cfg.write_text("omega_prime_hz = 750000\ntau_r_s = 5e-5\ndephasing_hz = 1150\ndelta_hz = 0\n")
    out = tmp_path / "ct.csv"
    code, _, _ = run(["sweep-ct", "--config", str(cfg), "--grid", "1", "--out", str(out), "--min-fidelity", "0.998"], capsys)
    assert code == 0


def order_points(text):
    return [ln for ln in text.splitlines() if ln.startswith("point ")]


def slope_of(text):
    return float(text.strip().splitlines()[-1].split()[1])


def test_order_fit_reoptimized_s(capsys):
    code, out, _ = run(["order-fit", "--preset", "S", "--reoptimize"], capsys)
    assert code == 0
    assert 3.5 <= slope_of(out) <= 4.5


def test_order_fit_broken_preset(tmp_path, capsys):
    cfg = tmp_path / "broken.cfg"
    write_kv(cfg, unprotected_variant(reoptimize(PRESETS["S"]).preset).to_mapping())
    code, out, _ = run(["order-fit", "--config", str(cfg)], capsys)
    assert code == 0
    assert 1.5 <= slope_of(out) <= 2.5


def test_order_fit_point_count(capsys):
    _, out, _ = run(["order-fit", "--preset", "T", "--range", "0.01", "0.1", "--points", "8"], capsys)
    assert len(order_points(out)) == 8


def test_optimize_from_target(tmp_path, capsys):
    out = tmp_path / "opt.cfg"
    code, _, _ = run(["optimize", "--target", str(math.pi / 8), "0", "0", "--out", str(out), "--name", "T2"], capsys)
    assert code == 0
    data = parse_kv(out.read_text())
    assert data["name"] == "T2"
    assert float(data["tau"]) <= 1.25 * math.pi
    assert float(data["d12_abs"]) <= 1e-3
    assert main(["verify", "--config", str(out)]) == 0


def test_optimize_non_convergence_exit_code(tmp_path, capsys):
    code, _, err = run(["optimize", "--preset", "S", "--max-iters", "1", "--tolerance", "1e-20", "--out", str(tmp_path / "o.cfg")], capsys)
    assert code == 1
    assert "failed" in err


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "geopulse", "verify", "--preset", "T"], capture_output=True, text=True)
    assert out.returncode == 0
    assert "check_d12 = pass" in out.stdout
