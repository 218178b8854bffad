"""Config parsing, report files and the CSV summary format."""
import csv
from dataclasses import replace

import pytest

import timebin_qkd as tq

GOOD_CONFIG = """\
# minimal operating point
mu0 = 0.49
mu1 = 0.22
p_mu0 = 0.74
p_za = 0.65
p_zb = 0.99
attenuation_db = 1.58
receiver_loss_db = 1.37
visibility = 0.996
dark_rate_hz = 100.0
z_error_prob = 0.004
n_slots = 1000000
seed = 7
"""


def _report(**overrides):
    base = dict(
        fiber_length_km=10.0, attenuation_db=1.58, mu0=0.49, mu1=0.22,
        p_mu0=0.74, p_za=0.65, p_zb=0.99, sift_rate_bps=1.594e8,
        qber_z=0.004, phi_z=0.008, key_length=55_000_000, skr_bps=6.4e7,
        leakage_bits=2.38e7, block_bits=1 << 27, seed=1, n_slots=10 ** 8,
        workers=4, max_buffered=3, key_digest="00ff", status="ok")
    base.update(overrides)
    return tq.DistillationReport(**base)


def test_load_config_happy_path(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(GOOD_CONFIG)
    cfg = tq.load_config(path)
    assert cfg.params.mu0 == 0.49
    assert cfg.params.p_zb == 0.99
    assert cfg.link.attenuation_db == 1.58
    assert cfg.link.z_error_prob == 0.004
    assert cfg.n_slots == 1_000_000
    assert cfg.seed == 7
    assert cfg.detector_model is None


def test_load_config_resolves_relative_paths(tmp_path):
    model_path = tmp_path / "det.model"
    tq.write_model(tq.MultipixelModel(), model_path)
    path = tmp_path / "run.cfg"
    path.write_text(GOOD_CONFIG + "detector_model = det.model\n")
    cfg = tq.load_config(path)
    assert cfg.detector_model == str(model_path)


def test_load_config_missing_keys(tmp_path):
    path = tmp_path / "empty.cfg"
    path.write_text("# nothing here\n")
    with pytest.raises(tq.MissingKey) as err:
        tq.load_config(path)
    for key in ("mu0", "mu1", "attenuation_db"):
        assert key in str(err.value)


def test_load_config_rejects_unknown_and_duplicate_keys(tmp_path):
    unknown = tmp_path / "unknown.cfg"
    unknown.write_text(GOOD_CONFIG + "laser_wavelength_nm = 1550\n")
    with pytest.raises(tq.ParseError):
        tq.load_config(unknown)
    duplicate = tmp_path / "duplicate.cfg"
    duplicate.write_text(GOOD_CONFIG + "mu0 = 0.5\n")
    with pytest.raises(tq.ParseError):
        tq.load_config(duplicate)
    garbled = tmp_path / "garbled.cfg"
    garbled.write_text("mu0 0.49\n")
    with pytest.raises(tq.ParseError):
        tq.load_config(garbled)


def test_load_config_validates_ranges(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text(GOOD_CONFIG.replace("p_zb = 0.99", "p_zb = 1.2"))
    with pytest.raises(tq.InvalidProbability):
        tq.load_config(path)
    swapped = tmp_path / "swapped.cfg"
    swapped.write_text(GOOD_CONFIG.replace("mu1 = 0.22", "mu1 = 0.6"))
    with pytest.raises(tq.InvalidIntensities):
        tq.load_config(swapped)


def test_shipped_configs_load(cfg10, cfg102):
    assert (cfg10.params.mu0, cfg10.params.mu1) == (0.49, 0.22)
    assert cfg10.link.attenuation_db == 1.58
    assert (cfg102.params.mu0, cfg102.params.mu1) == (0.46, 0.20)
    assert cfg102.link.attenuation_db == 16.34
    for cfg in (cfg10, cfg102):
        assert cfg.detector_model and cfg.detector_model.endswith(
            "detector.model")


def test_report_roundtrip(tmp_path):
    report = _report()
    path = tmp_path / "report.txt"
    tq.write_report(report, path)
    back = tq.read_report(path)
    # Execution-environment fields are not stored in the file.
    assert back == replace(report, workers=1, max_buffered=0)
    text = path.read_text()
    assert "workers" not in text
    assert "max_buffered" not in text


def test_report_file_rejects_bad_content(tmp_path):
    path = tmp_path / "report.txt"
    tq.write_report(_report(), path)
    lines = path.read_text().splitlines()
    missing = tmp_path / "missing.txt"
    missing.write_text("\n".join(line for line in lines
                                 if not line.startswith("skr_bps")) + "\n")
    with pytest.raises(tq.MissingKey):
        tq.read_report(missing)
    extra = tmp_path / "extra.txt"
    extra.write_text("\n".join(lines) + "\nmystery = 1\n")
    with pytest.raises(tq.ParseError):
        tq.read_report(extra)


def test_csv_column_order_and_units(tmp_path):
    path = tmp_path / "sweep.csv"
    tq.config.append_csv_row(_report(), path)
    tq.config.append_csv_row(_report(attenuation_db=5.0), path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 3  # header plus two data rows
    header = rows[0]
    assert header[:11] == [
        "fiber_length_km", "attenuation_db", "mu0", "mu1", "p_mu0",
        "p_za", "p_zb", "r_sift_mbps", "phi_z_pct", "q_z_pct", "skr_mbps"]
    first = rows[1]
    assert float(first[7]) == pytest.approx(159.4)   # Mbps
    assert float(first[8]) == pytest.approx(0.8)     # percent
    assert float(first[9]) == pytest.approx(0.4)     # percent
    assert float(first[10]) == pytest.approx(64.0)   # Mbps
    assert float(rows[2][1]) == 5.0
