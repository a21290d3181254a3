import csv
import json

import numpy as np
import pytest

from mirrortrap.cli import main, parse_quantity, UsageError
from mirrortrap.photometry import Lineshape, eval_lineshape


def run(tmp_path, *argv):
    try:
        return main([*argv, "--out-dir", str(tmp_path)])
    except SystemExit as exc:
        return exc.code


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.mark.parametrize("text, kind, value", [
    ("100um", "length_um", 100.0),
    ("-2.5 μm", "length_um", -2.5),
    ("8mm", "length_mm", 8.0),
    ("90deg", "angle", np.pi / 2),
    ("62.3MHz", "frequency_mhz", 62.3),
    ("500kHz", "rate_hz", 500e3),
    ("6V", "voltage", 6.0),
])
def test_parse_quantity(text, kind, value):
    assert parse_quantity(text, kind) == pytest.approx(value)


@pytest.mark.parametrize("text, kind", [("100", "length_um"), ("8mm", "length_um"),
                                        ("abcum", "length_um"), ("5V", "angle")])
def test_parse_quantity_rejects(text, kind):
    with pytest.raises(UsageError):
        parse_quantity(text, kind)


def test_analytic_ring_row(tmp_path, oracle):
    assert run(tmp_path, "analytic", "--ring", "--h", "100um", "--theta", "0.1rad") == 0
    rows = read_csv(tmp_path / "analytic.csv")
    assert rows[0] == ["design", "r_um", "phi_deg", "NA", "eta"]
    assert float(rows[1][1]) == pytest.approx(oracle["ring_radius_h100_theta0.1"], rel=1e-12)
    manifest = json.loads((tmp_path / "analytic_manifest.json").read_text())
    assert manifest["command"] == "analytic"
    assert manifest["outputs"][0]["path"] == "analytic.csv"


def test_analytic_mirror(tmp_path, oracle):
    assert run(tmp_path, "analytic", "--mirror", "--roc", "150um", "--r", "60um") == 0
    rows = read_csv(tmp_path / "analytic.csv")
    assert float(rows[1][3]) == pytest.approx(oracle["na_ideal"], rel=1e-6)


def test_unknown_flag_exits_2(tmp_path):
    assert run(tmp_path, "analytic", "--ring", "--bogus") == 2


def test_unit_mismatch_exits_2(tmp_path):
    assert run(tmp_path, "analytic", "--ring", "--h", "100mm") == 2
    assert run(tmp_path, "analytic", "--ring", "--h", "100") == 2


def test_missing_file_exits_2(tmp_path):
    assert run(tmp_path, "fit-lineshape", str(tmp_path / "nope.csv")) == 2


def test_bad_csv_header_exits_2(tmp_path):
    p = tmp_path / "data.csv"
    p.write_text("a,b\n1,2\n")
    assert run(tmp_path, "fit-lineshape", str(p)) == 2


def test_unknown_figure_exits_2(tmp_path):
    assert run(tmp_path, "reproduce", "7z") == 2


def test_numerical_failure_exits_1(tmp_path):
    code = run(tmp_path, "waveform", "--start", "-10um", "--stop", "0um", "--steps", "2",
               "--bound", "0.01V")
    assert code == 1


def write_csv(path, header, a, b):
    rows = "".join(f"{float(u)!r},{float(v)!r}\n" for u, v in zip(a, b))
    path.write_text(header + "\n" + rows)


def test_fit_lineshape_roundtrip(tmp_path):
    d = np.linspace(-150, 200, 200)
    y = eval_lineshape(Lineshape(0.0, 11.0, 1000.0, 60.0), d)
    p = tmp_path / "scan.csv"
    write_csv(p, "detuning_MHz,counts", d, y)
    assert run(tmp_path, "fit-lineshape", str(p)) == 0
    out = json.loads((tmp_path / "lineshape.json").read_text())
    manifest = json.loads((tmp_path / "fit-lineshape_manifest.json").read_text())
    assert str(p) in manifest["config_sha256"]
    assert out["ratio"] == pytest.approx(0.06, rel=1e-6)
    assert out["modulation"]["beta"] == pytest.approx(0.4759, abs=1e-3)


def test_enhancement_cli(tmp_path):
    z = np.linspace(-300, 300, 61)
    c = 1000 * (1 + 0.9 * np.exp(-z**2 / 1800))
    p = tmp_path / "prof.csv"
    write_csv(p, "z_um,counts", z, c)
    assert run(tmp_path, "enhancement", str(p)) == 2
    assert run(tmp_path, "enhancement", str(p), "--baseline-distance", "250um") == 0
    out = json.loads((tmp_path / "enhancement.json").read_text())
    assert out["peak"] == pytest.approx(1.9, abs=0.01)


def test_outputs_are_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(d, "efficiency", "--rays", "20000", "--seed", "4") == 0
    ma = json.loads((a / "efficiency_manifest.json").read_text())
    mb = json.loads((b / "efficiency_manifest.json").read_text())
    assert ma["outputs"] == mb["outputs"]


def test_reproduce_9a_model(tmp_path):
    assert run(tmp_path, "reproduce", "9a-model") == 0
    rows = read_csv(tmp_path / "figure_9a_model.csv")
    assert rows[0] == ["detuning_MHz", "rate"] and len(rows) == 302


def test_trace_null_small(tmp_path):
    assert run(tmp_path, "trace-null", "--start", "-20um", "--stop", "20um",
               "--step", "10um") == 0
    rows = read_csv(tmp_path / "null_contour.csv")
    assert len(rows) == 6
    assert abs(float(rows[3][2]) - 62.477) < 0.25
