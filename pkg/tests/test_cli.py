import json
import math
from pathlib import Path

import numpy as np
import pytest

from kdtl import cli
from kdtl.datasets import FringeScan, format_scan, load_dataset, synth_scan
from kdtl.physics import visibility_signed
from kdtl.presets import C70, REFERENCE_GEOMETRY

ROOT = Path(__file__).parents[1]
MODEL = str(ROOT / "data" / "c70_model.json")
SYNTH = sorted(str(p) for p in (ROOT / "data" / "synthetic").glob("c70_*.json"))
DATA = Path(__file__).parent / "data"


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def table(text):
    rows = [line for line in text.splitlines() if line and not line.startswith("#")]
    return np.array([[float(v) for v in row.split(",")] for row in rows])


# -- predict -----------------------------------------------------------------


def test_predict_zero_power(capsys):
    code, out, _ = run(["predict", "--config", MODEL, "--powers", "0"], capsys)
    assert code == 0
    assert table(out).tolist() == [[0.0, 0.0]]


def test_predict_beam_a_grid(capsys):
    code, out, _ = run(["predict", "--config", MODEL, "--pmin", 0, "--pmax", 2, "--n", 50], capsys)
    t = table(out)
    assert code == 0 and t.shape == (50, 2)
    assert np.all((t[:, 1] >= 0) & (t[:, 1] <= 1))
    assert "# units: power_W [W], V [dimensionless]" in out
    assert "# config_sha256: " in out


def test_predict_zero_spread_is_monochromatic(capsys):
    code, out, _ = run(["predict", "--config", MODEL, "--n", 11, "--dv-zero", "--mono"], capsys)
    t = table(out)
    assert code == 0
    assert np.array_equal(t[:, 1], t[:, 2])
    expect = np.abs(visibility_signed(C70, REFERENCE_GEOMETRY, t[:, 0], 99.7))
    assert np.allclose(t[:, 1], expect, rtol=1e-15, atol=0)


def test_predict_overrides(capsys, tmp_path):
    out = tmp_path / "p.txt"
    code, _, _ = run(["predict", "--config", MODEL, "--powers", "1", "--alpha-A3", 200, "--sigma-abs-cm2", 0, "--out", out], capsys)
    text = out.read_text()
    assert code == 0
    assert "# alpha_A3: 200.0" in text and "# sigma_abs_cm2: 0.0" in text


def test_predict_validation_exit_code(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    doc = json.loads(Path(MODEL).read_text())
    doc["geometry"]["lambda_nm"] = 500
    bad.write_text(json.dumps(doc))
    code, _, err = run(["predict", "--config", bad, "--powers", "1"], capsys)
    assert code == 2 and "lambda_L" in err
    code, _, err = run(["predict", "--config", tmp_path / "missing.json"], capsys)
    assert code == 2


# -- fit and sensitivity -----------------------------------------------------


@pytest.fixture(scope="module")
def fit_report(tmp_path_factory):
    out = tmp_path_factory.mktemp("fit") / "report.json"
    code = cli.main(["fit", *SYNTH, "--out", str(out)])
    return code, json.loads(out.read_text())


def test_fit_synthetic_ensemble(fit_report):
    code, report = fit_report
    assert code == 0
    r = report["result"]
    assert r["alpha_A3"] == pytest.approx(117.0, abs=2.0)
    lo, hi = r["stat_interval_A3"]
    assert lo < r["alpha_A3"] < hi
    assert [b["component"] for b in r["budget"]] == ["power_calibration", "waist_wy", "sigma_abs", "statistical"]
    assert 0 < r["sigma_abs_shift_rel"] <= 0.05
    assert len(report["datasets"]) == 8


def test_fit_prints_summary(capsys, tmp_path):
    code, out, _ = run(["fit", SYNTH[1], "--out", tmp_path / "r.json"], capsys)
    assert code == 0
    assert out.startswith("alpha_L = ")
    assert "envelope interval" in out and "total (quadrature)" in out


def test_fit_sigma_override_recorded(capsys, tmp_path):
    out = tmp_path / "r.json"
    code, _, _ = run(["fit", SYNTH[1], "--sigma-abs-cm2", "2.1e-17", "--out", out], capsys)
    assert code == 0
    assert json.loads(out.read_text())["sigma_abs_cm2_override"] == 2.1e-17


def test_fit_insufficient_points(capsys, tmp_path):
    doc = json.loads(Path(SYNTH[0]).read_text())
    doc["points"] = doc["points"][1:3]
    path = tmp_path / "two.json"
    path.write_text(json.dumps(doc))
    code, _, err = run(["fit", path, "--out", tmp_path / "r.json"], capsys)
    assert code == 2 and "insufficient points" in err


def test_fit_bracket_failure(capsys, tmp_path):
    code, _, err = run(["fit", SYNTH[1], "--bracket", 150, 400, "--out", tmp_path / "r.json"], capsys)
    assert code == 3 and "widen" in err


def test_fit_rejects_unknown_option(capsys, tmp_path):
    cfg = tmp_path / "fit.json"
    cfg.write_text(json.dumps({"alpha_tolerance": 1e-3}))
    code, _, err = run(["fit", SYNTH[1], "--config", cfg, "--out", tmp_path / "r.json"], capsys)
    assert code == 2 and "alpha_tolerance" in err


def test_sensitivity_command(capsys):
    code, out, _ = run(["sensitivity", SYNTH[0]], capsys)
    rel, shift = table(out)[0]
    assert code == 0 and rel == 0.5
    assert 0.01 < shift <= 0.05


# -- extract -----------------------------------------------------------------


def _scan_file(tmp_path, counts):
    x = np.arange(0.0, 532.0, 20.0)
    path = tmp_path / "scan.txt"
    path.write_text(format_scan(FringeScan(x * 1e-9, counts(x), 266e-9)))
    return path


def test_extract_clean_sinusoid(capsys, tmp_path):
    path = _scan_file(tmp_path, lambda x: 200 * (1 + 0.3 * np.cos(2 * math.pi * x / 266)))
    code, out, _ = run(["extract", path, "--out", tmp_path / "v.json"], capsys)
    assert code == 0 and "V = 0.300000" in out
    assert json.loads((tmp_path / "v.json").read_text())["visibility"] == pytest.approx(0.3, abs=1e-12)


def test_extract_constant(capsys, tmp_path):
    path = _scan_file(tmp_path, lambda x: np.full(x.size, 50.0))
    code, _, _ = run(["extract", path, "--out", tmp_path / "v.json"], capsys)
    assert code == 0
    assert json.loads((tmp_path / "v.json").read_text())["visibility"] < 1e-12


def test_extract_seeded_record(capsys, tmp_path):
    code, _, _ = run(["extract", DATA / "scan_seeded.txt", "--out", tmp_path / "v.json"], capsys)
    assert code == 0
    assert json.loads((tmp_path / "v.json").read_text()) == json.loads((DATA / "scan_seeded_record.json").read_text())


def test_extract_degenerate(capsys, tmp_path):
    path = _scan_file(tmp_path, lambda x: np.zeros(x.size))
    code, _, err = run(["extract", path], capsys)
    assert code != 0 and err
    short = tmp_path / "short.txt"
    short.write_text(format_scan(synth_scan(0.3, 100.0, 266e-9, np.arange(0, 200, 20.0) * 1e-9)))
    code, _, err = run(["extract", short], capsys)
    assert code == 2 and "period" in err


# -- synth and oracle --------------------------------------------------------


def test_synth_is_byte_identical(capsys, tmp_path):
    args = ["synth", "--config", MODEL, "--noise", 0.01, "--seed", 7]
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert cli.main([str(v) for v in [*args, "--out", a]]) == 0
    assert cli.main([str(v) for v in [*args, "--out", b]]) == 0
    assert a.read_bytes() == b.read_bytes()
    ds = load_dataset(a)
    assert ds.molecule.alpha_A3 == pytest.approx(117.0) and len(ds.points) == 20


def test_synth_matches_golden(tmp_path):
    out = tmp_path / "g.json"
    argv = ["synth", "--config", MODEL, "--pmin", "0", "--pmax", "2", "--n", "20", "--noise", "0.01", "--seed", "7"]
    assert cli.main([*argv, "--label", "golden C70 synthetic", "--out", str(out)]) == 0
    assert out.read_text() == (DATA / "golden_synth_c70.json").read_text()


def test_oracle_command(capsys):
    code, out, _ = run(["oracle", "--phis", "1,3", "--ratios", "0.5,3.5"], capsys)
    t = table(out)
    assert code == 0 and t.shape == (4, 6)
    assert np.max(np.abs(t[:, 5])) <= 0.02


def test_oracle_config_error(capsys):
    code, _, err = run(["oracle", "--grid-points", 16], capsys)
    assert code == 2 and "under-resolves" in err


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0
    assert capsys.readouterr().out.startswith("kdtl ")
