import json
import math
import subprocess
import sys

import numpy as np
import pytest

from eprsim.cli import main, parse_r_spec, CliError


def _summary(out: str) -> dict:
    return dict(line.split("=", 1) for line in out.splitlines() if "=" in line and " " not in line)


def test_run_minimal_config(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"r": 1.0, "shots": 100_000, "seed": 3}))
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    lines = _summary(capsys.readouterr().out)
    assert float(lines["duan_analytic"]) == pytest.approx(0.271, abs=5e-4)
    assert lines["epr_violation"] == "true"
    files = {p.name for p in out.iterdir()}
    assert {"report.json", "state.json", "hist_X_A.csv", "hist_Y_B.csv"} <= files
    doc = json.loads((out / "report.json").read_text())
    assert doc["schema_version"] == "1"
    assert "metadata" not in doc


def test_flags_override_config(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"r": 1.0, "shots": 1000}))
    assert main(["run", "--config", str(cfg), "--r", "0", "--out", str(tmp_path), "--format", "json"]) == 0
    assert float(_summary(capsys.readouterr().out)["duan_analytic"]) == 2.0
    assert not list(tmp_path.glob("hist_*.csv"))


def test_missing_config_names_path(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert main(["run", "--config", str(missing), "--out", str(tmp_path / "o")]) == 1
    assert str(missing) in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_squeeze_bound_violation(tmp_path, capsys):
    assert main(["run", "--r", "12", "--out", str(tmp_path / "o")]) == 1
    assert "r_a=12" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


@pytest.mark.parametrize("payload", ["{not json", json.dumps({"r": 1, "colour": "red"}), json.dumps([1, 2]),
                                     json.dumps({"r": 1, "shots": "many"})])
def test_bad_config_files(tmp_path, payload):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(payload)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1


def test_save_shots_round_trip(tmp_path, capsys):
    from eprsim.measurement import ShotBatch

    assert main(["run", "--r", "1", "--shots", "500", "--out", str(tmp_path), "--save-shots"]) == 0
    text = (tmp_path / "shots_X.csv").read_text()
    sidecar = json.loads((tmp_path / "shots_X.json").read_text())
    assert text.splitlines()[0] == "shot,0:X,1:X"
    batch = ShotBatch.from_csv(text, sidecar)
    assert batch.samples.shape == (500, 2)


def test_sweep_range(tmp_path, capsys):
    assert main(["sweep", "--r", "0:2:0.5", "--shots", "5000", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0] == "r,duan_analytic,duan_sampled,duan_se,reid,heisenberg"
    rows = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    assert rows.shape[0] == 5
    assert np.all(np.diff(rows[:, 1]) < 0)
    np.testing.assert_allclose(rows[:, 1], 2 * np.exp(-2 * rows[:, 0]), rtol=1e-12)


def test_sweep_single_and_empty(tmp_path, capsys):
    assert main(["sweep", "--r", "0", "--shots", "100", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert len(lines) == 2 and float(lines[1].split(",")[1]) == 2.0
    assert main(["sweep", "--r", "2:0:0.5", "--out", str(tmp_path / "e")]) == 1
    assert main(["sweep", "--r", "", "--out", str(tmp_path / "e")]) == 1
    assert not (tmp_path / "e").exists()


def test_parse_r_spec():
    assert parse_r_spec("0:1:0.25") == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert parse_r_spec("0.1,0.4") == [0.1, 0.4]
    assert parse_r_spec([1, 2]) == [1.0, 2.0]
    with pytest.raises(CliError):
        parse_r_spec("1:2")
    with pytest.raises(CliError):
        parse_r_spec("0:1:0")


def test_dice_command(tmp_path, capsys):
    assert main(["dice", "--n", "600000", "--seed", "0", "--out", str(tmp_path)]) == 0
    lines = _summary(capsys.readouterr().out)
    assert float(lines["prediction_accuracy"]) == 1.0
    doc = json.loads((tmp_path / "dice.json").read_text())
    sigma = math.sqrt((1 / 6) * (5 / 6) / 600_000)
    assert all(abs(f - 1 / 6) < 3 * sigma for f in doc["top_frequencies"])


def test_dice_byte_identical(tmp_path, capsys):
    for d in ("a", "b"):
        assert main(["dice", "--n", "1000", "--seed", "42", "--out", str(tmp_path / d)]) == 0
    for name in ("dice.json", "dice_faces.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_dice_edge_cases(tmp_path, capsys):
    assert main(["dice", "--n", "1", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "dice.json").read_text())["n_throws"] == 1
    assert main(["dice", "--n", "0", "--out", str(tmp_path / "z")]) == 1


def test_timestamp_is_isolated(tmp_path, capsys):
    assert main(["dice", "--n", "10", "--out", str(tmp_path), "--timestamp"]) == 0
    doc = json.loads((tmp_path / "dice.json").read_text())
    assert set(doc["metadata"]) == {"generated_at"}


def _state_file(tmp_path, cov, mean=None):
    cov = np.asarray(cov, dtype=float)
    mean = np.zeros(len(cov)) if mean is None else mean
    path = tmp_path / "state.json"
    path.write_text(json.dumps({"schema_version": "1", "mean": list(mean), "cov": cov.tolist()}))
    return path


def test_validate_identity(tmp_path, capsys):
    assert main(["validate", str(_state_file(tmp_path, np.eye(2)))]) == 0
    assert _summary(capsys.readouterr().out)["physical"] == "true"


def test_validate_sub_vacuum(tmp_path, capsys):
    assert main(["validate", str(_state_file(tmp_path, 0.5 * np.eye(2)))]) == 2


def test_validate_epr_state_from_run(tmp_path, capsys):
    assert main(["run", "--r", "1", "--shots", "100", "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    assert main(["validate", str(tmp_path / "state.json"), "--verify"]) == 0
    lines = _summary(capsys.readouterr().out)
    assert float(lines["duan"]) == pytest.approx(0.2707, abs=1e-4)


def test_validate_verify_fails_on_separable_state(tmp_path, capsys):
    assert main(["validate", str(_state_file(tmp_path, np.eye(4))), "--verify"]) == 3


@pytest.mark.parametrize("payload", ["[]", "{}", '{"mean": [0, 0], "cov": [[1, 0]]}', "nonsense"])
def test_validate_malformed(tmp_path, payload):
    path = tmp_path / "bad.json"
    path.write_text(payload)
    assert main(["validate", str(path)]) == 1
    assert main(["validate", str(tmp_path / "absent.json")]) == 1


def test_unknown_command_is_input_error(capsys):
    assert main(["explode"]) == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "eprsim", "dice", "--n", "6", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "prediction_accuracy=1" in proc.stdout
