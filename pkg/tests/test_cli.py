import json
import textwrap

import numpy as np
import pytest

from nfsar.cli import main, run_pipeline
from nfsar.config import parse_config
from nfsar.fileio import read_raw_image

DATE = "2026-01-01"

LINEAR = """
file_name: single
seed: 7
scan_notes: |
  corner reflector on foam
aperture:
  geometry: linear
  y_step_mm: 0.9434
  num_y_steps: 64
scene:
  scatterers:
    - {y_mm: 8, z_mm: 270}
errors:
  noise_sigma: 0.05
recon:
  algorithm: linear_rma_2d
  grid:
    y: {start_mm: -40, stop_mm: 40, step_mm: 4}
    z: {start_mm: 180, stop_mm: 360, step_mm: 9}
output:
  formats: [raw, csv, pgm]
"""

SYNC = """
file_name: trig
sync:
  mm_per_rev: 110
  pulses_per_rev: 20000
  x_max_size_mm: 120
  x_step_mm: 1
  num_x_steps: 50
  x_offset_mm: 5
  delta_x_mm: 50
"""


def write(tmp_path, text, name="run.yaml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return str(p)


def run_dir(tmp_path, name):
    return tmp_path / "out" / DATE / name


def test_single_scatterer_report(tmp_path):
    res = run_pipeline(parse_config(LINEAR), out=str(tmp_path / "out"), date=DATE, oracle=True)
    assert res.status == 0
    peaks = res.report["peaks"]
    assert len(peaks) == 1
    assert abs(peaks[0]["position_m"]["y"] - 0.008) <= 0.004 + 1e-12
    assert abs(peaks[0]["position_m"]["z"] - 0.270) <= 0.009 + 1e-12
    assert res.report["oracle_correlation"] >= 0.9
    d = run_dir(tmp_path, "single")
    for f in ("beat_cube.raw", "image.raw", "image.raw.json", "image.csv", "image.pgm",
              "peaks.csv", "report.txt", "report.json", "scan_notes.txt"):
        assert (d / f).is_file(), f
    assert (d / "scan_notes.txt").read_text() == "corner reflector on foam\n"
    text = (d / "report.txt").read_text()
    assert "range resolution" in text.lower()
    img = read_raw_image(d / "image.raw")
    assert img.values.shape == (21, 21) and np.all(np.isfinite(img.values))


def test_dry_run_writes_nothing(tmp_path):
    cfg = write(tmp_path, LINEAR)
    assert main(["pipeline", "--config", cfg, "--out", str(tmp_path / "out"), "--dry-run"]) == 0
    assert not (tmp_path / "out").exists()


def test_sync_only_config(tmp_path):
    res = run_pipeline(parse_config(SYNC), out=str(tmp_path / "out"), date=DATE)
    assert res.status == 0
    names = sorted(p.name for p in run_dir(tmp_path, "trig").iterdir())
    assert names == ["sync.png", "sync_report.json", "sync_report.txt", "sync_triggers.csv"]
    rep = json.loads((run_dir(tmp_path, "trig") / "sync_report.json").read_text())
    assert rep["sync"]["sweeps"]["forward"]["ok"]


def test_determinism_byte_identical(tmp_path):
    cfg = parse_config(LINEAR)
    a = run_pipeline(cfg, out=str(tmp_path / "a"), date=DATE)
    b = run_pipeline(cfg, out=str(tmp_path / "b"), date=DATE)
    for f in ("beat_cube.raw", "image.raw"):
        assert (a.run_dir / f).read_bytes() == (b.run_dir / f).read_bytes()
    c = run_pipeline(cfg, out=str(tmp_path / "c"), date=DATE, seed=8)
    assert (c.run_dir / "beat_cube.raw").read_bytes() != (a.run_dir / "beat_cube.raw").read_bytes()


def test_reconstruct_saved_cube(tmp_path):
    cfg = parse_config(LINEAR)
    sim = run_pipeline(cfg, ("simulate",), out=str(tmp_path / "s"), date=DATE)
    full = run_pipeline(cfg, out=str(tmp_path / "f"), date=DATE)
    rec = run_pipeline(
        cfg, ("reconstruct",), out=str(tmp_path / "r"), date=DATE,
        cube_path=sim.run_dir / "beat_cube.raw",
    )
    assert rec.report["peaks"][0]["position_m"] == full.report["peaks"][0]["position_m"]


def test_config_error_exit_code(tmp_path, capsys):
    bad = LINEAR.replace("algorithm: linear_rma_2d", "algorithm: circular_pfa_2d")
    assert main(["pipeline", "--config", write(tmp_path, bad)]) == 3
    assert "CFG104" in capsys.readouterr().err


def test_runtime_error_rolls_back(tmp_path, capsys):
    # odd element count puts an element at the origin, on top of the scatterer
    bad = LINEAR.replace("{y_mm: 8, z_mm: 270}", "{y_mm: 0, z_mm: 0}")
    bad = bad.replace("num_y_steps: 64", "num_y_steps: 63")
    out = tmp_path / "out"
    assert main(["pipeline", "--config", write(tmp_path, bad), "--out", str(out)]) == 4
    assert "SIM201" in capsys.readouterr().err
    assert not out.exists() or not any(p.is_file() for p in out.rglob("*"))


def test_missing_config_file(tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "nope.yaml")]) == 4
    assert "IO601" in capsys.readouterr().err


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as info:
        main(["pipeline"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        main(["pipeline", "--config", "x.yaml", "--format", "tiff"])
    assert info.value.code == 2


def test_calibrate_subcommand(tmp_path):
    text = LINEAR.replace("  noise_sigma: 0.05", "  phase_offset_rad: 0.4\n  range_bias_mm: 2")
    text += "calibration:\n  reflector_range_mm: 300\n"
    res = run_pipeline(parse_config(text), ("calibrate",), out=str(tmp_path / "out"), date=DATE)
    cal = res.report["calibration"]["radar1"]
    assert cal["phase_offset_rad"] == pytest.approx(0.4, abs=1e-6)
    assert cal["range_bias_m"] == pytest.approx(2e-3, abs=1e-9)


def test_msp_check(capsys):
    assert main(["msp-check"]) == 0
    name, value = capsys.readouterr().out.strip().split(",")
    assert name == "fidelity" and float(value) >= 0.9


def test_failed_grid_check_keeps_artifacts(tmp_path, capsys):
    # breakpoints run past the end of the travel, so some triggers are missed
    text = SYNC.replace("num_x_steps: 50", "num_x_steps: 100")
    out = tmp_path / "out"
    code = main(["sync", "--config", write(tmp_path, text), "--out", str(out)])
    assert code == 1
    assert "check failed" in capsys.readouterr().err
    assert any(p.name == "sync_report.json" for p in out.rglob("*"))
