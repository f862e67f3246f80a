import json
import os
from unittest import mock

import pandas as pd
import pytest

from decaf.cli import main
from decaf.experiments import RunRecord
from decaf.theorems import TheoremReport


@pytest.fixture
def fake_train():
    record = RunRecord(row={"run_id": "biaseddm/jo/variance/beta_0/seed_0", "utility_mean": 1.0}, run_dir="somewhere")
    with mock.patch("decaf.cli.cmd_train", return_value=record) as patched:
        yield patched


def test_help():
    assert main(["--help"]) == 0
    assert main(["train", "--help"]) == 0


def test_train_needs_an_environment(capsys):
    assert main(["train"]) == 1
    assert "--env" in capsys.readouterr().err


def test_unknown_choices_are_usage_errors():
    assert main(["train", "--env", "chess"]) == 1
    assert main(["train", "--env", "job", "--beta", "2"]) == 1


def test_train_flags_win_over_overrides(fake_train, tmp_path, capsys):
    code = main(
        [
            "train",
            "--env",
            "job",
            "--mode",
            "so",
            "--beta",
            "0.3",
            "--set",
            "learner.beta=0.9",
            "--set",
            "learner.gamma=0.5",
            "--out",
            str(tmp_path),
            "--seed",
            "4",
        ]
    )

    assert code == 0
    config, out_dir = fake_train.call_args.args
    assert config["env"]["kind"] == "job"
    assert config["learner"]["mode"] == "so"
    assert config["learner"]["beta"] == 0.3
    assert config["learner"]["gamma"] == 0.5
    assert out_dir == str(tmp_path)
    assert fake_train.call_args.kwargs["seed"] == 4
    assert "somewhere" in capsys.readouterr().out


def test_output_directory_from_the_environment(fake_train, tmp_path, monkeypatch):
    monkeypatch.setenv("DECAF_OUT", str(tmp_path / "from_env"))

    assert main(["train", "--env", "biaseddm", "--out", str(tmp_path / "from_flag")]) == 0
    assert fake_train.call_args.args[1] == str(tmp_path / "from_env")


def test_config_file_names_the_environment(fake_train, tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"env": {"kind": "matthew"}, "learner": {"n_episodes": 3}}))

    assert main(["train", "--config", str(path), "--no-progress"]) == 0
    config = fake_train.call_args.args[0]
    assert config["env"]["kind"] == "matthew"
    assert config["learner"]["n_episodes"] == 3
    assert fake_train.call_args.kwargs["progress"] is False


def test_bad_overrides_are_runtime_errors(capsys):
    assert main(["train", "--env", "job", "--set", "learner.gama=0.5"]) == 2
    assert "learner.gama" in capsys.readouterr().err


def test_theorem_check(tmp_path, capsys):
    assert main(["theorem-check", "--instances", "20", "--out", str(tmp_path)]) == 0
    assert "no violations" in capsys.readouterr().out
    assert not os.path.exists(tmp_path / "theorem_violations.json")


def test_theorem_check_writes_violations(tmp_path):
    report = TheoremReport(instances=1, etas=(0.0,), violations=[{"property": "utilitarian at eta = 0"}])

    with mock.patch("decaf.cli.run_theorem_check", return_value=report):
        assert main(["theorem-check", "--out", str(tmp_path)]) == 2

    with open(tmp_path / "theorem_violations.json") as fo:
        assert json.load(fo) == report.violations


def test_select(tmp_path):
    rows = pd.DataFrame(
        {
            "env": ["biaseddm", "biaseddm"],
            "mode": ["jo", "jo"],
            "beta_train": [0.0, 0.2],
            "utility_mean": [100.0, 96.0],
            "variance_mean": [-1875.0, -4.4],
            "status": ["ok", "ok"],
        }
    )
    rows.to_csv(tmp_path / "sweep.csv", index=False)

    assert main(["select", str(tmp_path / "sweep.csv"), "--out", str(tmp_path)]) == 0
    assert pd.read_csv(tmp_path / "select.csv")["beta_train"].tolist() == [0.2]

    assert main(["select", str(tmp_path / "sweep.csv"), "--out", str(tmp_path), "--w-u", "1", "--w-f", "0"]) == 0
    assert pd.read_csv(tmp_path / "select.csv")["beta_train"].tolist() == [0.0]


def test_select_without_rows(tmp_path, capsys):
    path = tmp_path / "empty.csv"
    path.write_text("")

    assert main(["select", str(path), "--out", str(tmp_path)]) == 2
    assert capsys.readouterr().err.startswith("Error:")


def test_evaluate_missing_run(tmp_path):
    assert main(["evaluate", str(tmp_path), "--out", str(tmp_path)]) == 2
