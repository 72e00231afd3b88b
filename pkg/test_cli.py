import io
import json

import pandas as pd
import pytest

from schemas import ExperimentConfig
from src.cli import main, parse_snr_grid
from src.core.exceptions import ConfigError

RATE_HEADER = "snr_db,rate_lattice,rate_separation,rate_awgn_bound,rate_tdma,rate_kolmogorov"
SIMULATION_HEADER = "snr_db,trials,sum_decode_failures,accuracy_failures,max_ok_error"


def _write_config(tmp_path, **fields):
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps(fields), encoding="utf-8")
    return str(path)


def test_parse_snr_grid():
    assert parse_snr_grid("0:5:30") == [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]
    assert parse_snr_grid("0:0.5:1") == [0.0, 0.5, 1.0]
    assert parse_snr_grid("12") == [12.0]
    with pytest.raises(ConfigError):
        parse_snr_grid("0:-1:10")
    with pytest.raises(ConfigError):
        parse_snr_grid("a:b:c")


def test_rates_to_stdout(capsys):
    assert main(["rates", "--snr-db", "0:5:30"]) == 0
    out = capsys.readouterr().out
    lines = out.splitlines()
    assert lines[0] == RATE_HEADER
    assert len(lines) == 8
    frame = pd.read_csv(io.StringIO(out))
    assert frame["rate_lattice"].iloc[0] == 0.0
    assert frame.loc[frame["snr_db"] == 15.0, "rate_lattice"].iloc[0] == pytest.approx(0.17396, rel=1e-4)


def test_rates_bytes_are_deterministic(tmp_path):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["rates", "--snr-db", "0:1:30", "--out", str(first)]) == 0
    assert main(["rates", "--snr-db", "0:1:30", "--out", str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()
    assert first.read_text().startswith(RATE_HEADER + "\n")


def test_b0_report(capsys):
    assert main(["b0"]) == 0
    out = capsys.readouterr().out
    assert "function: arithmetic_mean" in out
    assert "b0: 11" in out
    assert "v: 0" in out
    assert "eta: 10" in out


def test_b0_coarse_accuracy(tmp_path, capsys):
    config = _write_config(tmp_path, eps=0.5)
    assert main(["b0", "--config", config]) == 0
    assert "b0: 3" in capsys.readouterr().out


def test_simulate_noiseless_has_no_failures(tmp_path):
    config = _write_config(
        tmp_path, topology={"N": 3}, noiseless=True, snr_db=[0.0, 10.0], trials=50, lattice={"k": 4}
    )
    out = tmp_path / "sim.csv"
    assert main(["simulate", "--config", config, "--seed", "5", "--out", str(out)]) == 0
    text = out.read_text()
    assert text.splitlines()[0] == SIMULATION_HEADER
    frame = pd.read_csv(out)
    assert frame["trials"].tolist() == [50, 50]
    assert frame["sum_decode_failures"].sum() == 0
    assert frame["accuracy_failures"].sum() == 0


def test_simulate_is_reproducible(tmp_path):
    config = _write_config(tmp_path, topology={"N": 2}, snr_db=[5.0], trials=40, eps=0.01)
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["simulate", "--config", config, "--out", str(first)]) == 0
    assert main(["simulate", "--config", config, "--out", str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()


def test_simulate_failures_drop_with_snr(tmp_path):
    config = _write_config(tmp_path, topology={"N": 3}, snr_db=[0.0, 30.0], trials=60)
    out = tmp_path / "sim.csv"
    assert main(["simulate", "--config", config, "--out", str(out)]) == 0
    frame = pd.read_csv(out)
    assert frame["snr_db"].tolist() == [0.0, 30.0]
    failures = frame["sum_decode_failures"].tolist()
    assert failures[1] < failures[0]
    assert frame["accuracy_failures"].iloc[1] <= frame["accuracy_failures"].iloc[0]


def test_compare(capsys):
    assert main(["compare", "--snr-db", "15"]) == 0
    header = capsys.readouterr().out.splitlines()[0]
    assert header.split(",")[:3] == ["snr_db", "arithmetic_mean_lattice", "arithmetic_mean_awgn_bound"]


def test_demo_lattice(capsys):
    assert main(["demo-lattice", "--p", "3", "--k", "1", "--n", "2"]) == 0
    out = capsys.readouterr().out
    assert "codebook_size=3" in out
    codebook = out.split("codebook:\n")[1].split("node 0")[0].strip().splitlines()
    assert len(codebook) == 3
    assert "success: True" in out


def test_demo_lattice_summarises_large_codebooks(capsys):
    assert main(["demo-lattice", "--p", "11", "--k", "2", "--n", "3"]) == 0
    assert "121 codewords (not listed)" in capsys.readouterr().out


def test_defaults_round_trip(capsys):
    assert main(["defaults"]) == 0
    printed = capsys.readouterr().out
    assert ExperimentConfig.model_validate_json(printed) == ExperimentConfig()


def test_config_errors_exit_with_2(tmp_path, capsys):
    assert main(["rates", "--config", str(tmp_path / "missing.json")]) == 2
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    assert main(["rates", "--config", str(broken)]) == 2
    assert main(["rates", "--config", _write_config(tmp_path, snr_db=[10.0, 0.0])]) == 2
    assert main(["rates", "--config", _write_config(tmp_path, colour="blue")]) == 2
    assert main(["b0", "--config", _write_config(tmp_path, function={"name": "median"})]) == 2
    assert main(["demo-lattice", "--p", "4"]) == 2
    assert "error [" in capsys.readouterr().err


def test_unwritable_output_is_a_config_error(tmp_path):
    assert main(["rates", "--out", str(tmp_path / "no" / "such" / "dir.csv"), "--snr-db", "0"]) == 2


def test_runtime_errors_exit_with_3():
    assert main(["demo-lattice", "--p", "2", "--k", "20", "--n", "21"]) == 3
