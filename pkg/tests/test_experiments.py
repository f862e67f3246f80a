import json
import os
from unittest import mock

import numpy as np
import pandas as pd
import pytest

from decaf.config import apply_overrides, default_config
from decaf.exceptions import ConfigError, DimensionMismatchError, MissingNetworkError
from decaf.experiments import (
    EVAL_COLUMNS,
    HEATMAP_METRICS,
    checkpoint_path,
    cmd_evaluate,
    cmd_heatmap,
    cmd_pareto_approx,
    cmd_select,
    cmd_sweep,
    cmd_train,
    load_run,
    nearest_run,
    pareto_mask,
)
from decaf.learner import LearnerMode
from decaf.valuenet import read_checkpoint


def tiny_config(*overrides):
    settings = [
        'env.settings={"horizon": 5}',
        "learner.n_episodes=2",
        "learner.validate_every_k=1",
        "learner.n_eval=2",
        "learner.hidden_dims=[4]",
        "learner.batch_size=4",
        "learner.learn_every_T=2",
    ]
    return apply_overrides(default_config(), settings + list(overrides))


@pytest.fixture
def out_dir(tmp_path):
    return str(tmp_path / "out")


def test_train_writes_a_run_directory(out_dir):
    record = cmd_train(tiny_config("learner.mode=jo", "learner.beta=0"), out_dir, seed=1)

    assert record.run_dir == os.path.join(out_dir, "biaseddm", "jo", "variance", "beta_0", "seed_1")
    for name in ("config.json", "train_log.csv", "validation_log.csv", "eval.csv", "checkpoint_q.dcaf"):
        assert os.path.exists(os.path.join(record.run_dir, name))

    frame = pd.read_csv(os.path.join(record.run_dir, "eval.csv"))
    assert list(frame.columns) == EVAL_COLUMNS
    assert frame.loc[0, "status"] == "ok"
    assert len(pd.read_csv(os.path.join(record.run_dir, "train_log.csv"))) == 2
    assert record.row["utility_mean"] >= 0.0


def test_runs_load_back_and_reevaluate(out_dir):
    record = cmd_train(tiny_config("learner.mode=so", "learner.beta=0.5"), out_dir, seed=0)

    estimators, config = load_run(record.run_dir)
    row = cmd_evaluate(record.run_dir)

    assert estimators.mode is LearnerMode.SO
    assert config["learner"]["beta"] == 0.5
    assert row["utility_mean"] == record.row["utility_mean"]
    assert row["variance_mean"] == record.row["variance_mean"]
    assert cmd_evaluate(record.run_dir, beta_test=1.0)["beta_test"] == 1.0


def test_checkpoints_carry_the_environment_shape(out_dir):
    record = cmd_train(tiny_config("learner.mode=jo"), out_dir)

    _, metadata = read_checkpoint(checkpoint_path(record.run_dir, "q"))

    assert metadata["env_spec"] == {"kind": "biaseddm", "n_agents": 5, "horizon": 5, "feature_dim": 9, "K": 1}


def test_loading_a_run_checks_the_feature_size(out_dir):
    record = cmd_train(tiny_config("learner.mode=jo"), out_dir)
    path = os.path.join(record.run_dir, "config.json")
    with open(path) as fo:
        config = json.load(fo)
    config["env"]["settings"]["n_agents"] = 4
    with open(path, "w") as fo:
        json.dump(config, fo)

    with pytest.raises(DimensionMismatchError):
        load_run(record.run_dir)


def test_fo_runs_need_and_keep_the_frozen_model(out_dir):
    with pytest.raises(MissingNetworkError):
        cmd_train(tiny_config("learner.mode=fo"), out_dir)

    utilitarian = cmd_train(tiny_config("learner.mode=jo"), out_dir)
    frozen = checkpoint_path(utilitarian.run_dir, "q")
    record = cmd_train(tiny_config("learner.mode=fo", "learner.beta=0.5"), out_dir, frozen_u_path=frozen)

    assert os.path.exists(checkpoint_path(record.run_dir, "f"))
    assert os.path.exists(checkpoint_path(record.run_dir, "u"))
    estimators, _ = load_run(record.run_dir)
    assert estimators.frozen_u is not None


def test_sweep_rows_and_front(out_dir):
    config = tiny_config("sweep.betas=[0, 0.5, 1]", "sweep.seeds=[0, 1]", 'sweep.modes=["jo"]')

    frame, front = cmd_sweep(config, out_dir)

    assert len(frame) == 6
    assert (frame["status"] == "ok").all()
    assert os.path.exists(os.path.join(out_dir, "sweep.csv"))
    assert os.path.exists(os.path.join(out_dir, "pareto.csv"))
    assert len(front) == 3
    assert front.sort_values(["utility_mean", "fairness_mean"]).iloc[-1]["pareto"]
    assert front.sort_values(["fairness_mean", "utility_mean"]).iloc[-1]["pareto"]


def test_sweep_trains_a_utilitarian_model_for_fo(out_dir):
    config = tiny_config("sweep.betas=[0.5]", "sweep.seeds=[0]", 'sweep.modes=["so", "fo"]')

    frame, _ = cmd_sweep(config, out_dir)

    assert sorted(frame["mode"]) == ["fo", "so"]
    assert os.path.exists(os.path.join(out_dir, "biaseddm", "jo", "variance", "beta_0", "seed_0"))


def test_sweep_records_failed_runs(out_dir):
    config = tiny_config("sweep.betas=[0, 1]", "sweep.seeds=[0]", 'sweep.modes=["jo"]')

    with mock.patch("decaf.experiments.cmd_train", side_effect=ConfigError("boom")):
        frame, front = cmd_sweep(config, out_dir)

    assert list(frame["status"]) == ["failed: boom", "failed: boom"]
    assert front.empty


def test_sweep_records_unexpected_errors(out_dir):
    config = tiny_config("sweep.betas=[0]", "sweep.seeds=[0]", 'sweep.modes=["jo"]')

    with mock.patch("decaf.experiments.cmd_train", side_effect=ValueError("array went bad")):
        frame, _ = cmd_sweep(config, out_dir)

    assert list(frame["status"]) == ["failed: array went bad"]


def test_pareto_mask():
    utilities = [1.0, 0.0, 0.5, 0.4, 1.0]
    fairness = [0.0, 1.0, 0.5, 0.4, 0.0]

    assert pareto_mask(utilities, fairness).tolist() == [True, True, True, False, True]


@pytest.fixture
def generalizing_runs(tmp_path):
    out_dir = str(tmp_path / "runs")
    return [cmd_train(tiny_config("learner.mode=so", f"learner.beta={beta}"), out_dir).run_dir for beta in (0, 0.5, 1)]


def test_heatmap_grid(generalizing_runs, tmp_path):
    out_path = str(tmp_path / "heatmap.csv")

    frame = cmd_heatmap(generalizing_runs, [0, 0.25, 0.5, 0.75, 1], out_path=out_path, n_eval=1)

    cells = frame[["beta_train", "beta_test"]].drop_duplicates()
    assert len(cells) == 15
    assert set(frame["metric"]) == {"utility", "variance", "alphafair", "ggf", "maximin"}
    assert len(pd.read_csv(out_path)) == len(frame)


def test_heatmap_forwards_progress():
    run = ("run", mock.Mock(mode=LearnerMode.SO, beta_train=0.5), tiny_config())
    summary = {f"{metric}_{stat}": 0.0 for metric in HEATMAP_METRICS for stat in ("mean", "std")}

    with mock.patch("decaf.experiments._load_generalizing_runs", return_value=[run]):
        with mock.patch("decaf.experiments.evaluate_policy", return_value=summary) as evaluated:
            frame = cmd_heatmap(["run"], [0.0, 1.0], progress=True)

    assert len(frame) == 2 * len(HEATMAP_METRICS)
    assert all(call.kwargs["progress"] is True for call in evaluated.call_args_list)


def test_heatmap_rejects_jo_runs(out_dir):
    record = cmd_train(tiny_config("learner.mode=jo"), out_dir)

    with pytest.raises(ConfigError):
        cmd_heatmap([record.run_dir], [0.0])


def test_pareto_approx_dispatches_to_the_nearest_model(generalizing_runs):
    frame = cmd_pareto_approx(generalizing_runs, [0, 0.2, 0.3, 0.8, 1], n_eval=1)

    assert frame["beta_train"].tolist() == [0.0, 0.0, 0.5, 1.0, 1.0]
    assert frame["pareto"].any()
    with pytest.raises(ConfigError):
        cmd_pareto_approx(generalizing_runs[:1], [0.5])


def test_nearest_run_prefers_the_lower_beta_on_ties():
    runs = [(name, mock.Mock(beta_train=beta)) for name, beta in (("high", 0.5), ("low", 0.0))]

    assert nearest_run(runs, 0.25)[0] == "low"
    assert nearest_run(runs, 0.3)[0] == "high"


def eval_rows(*rows):
    columns = ["env", "mode", "beta_train", "seed", "utility_mean", "variance_mean", "status"]
    return pd.DataFrame([("biaseddm", "jo") + row + ("ok",) for row in rows], columns=columns)


def test_select_weighs_variance_heavily():
    frame = eval_rows((0.0, 0, 100.0, -1875.0), (0.2, 0, 96.0, -4.4))

    best = cmd_select(frame)

    assert best.loc[0, "beta_train"] == 0.2
    assert best.loc[0, "score"] == pytest.approx(9.6 - 3.96)


def test_select_single_row_and_ties(tmp_path):
    assert cmd_select(eval_rows((0.3, 0, 50.0, -1.0))).loc[0, "beta_train"] == 0.3

    path = tmp_path / "sweep.csv"
    eval_rows((0.7, 0, 10.0, -1.0), (0.1, 0, 10.0, -1.0), (0.4, 0, 1.0, -1.0)).to_csv(path, index=False)
    assert cmd_select(str(path)).loc[0, "beta_train"] == 0.1


def test_select_averages_seeds_and_skips_failures():
    frame = eval_rows((0.0, 0, 10.0, -1.0), (0.0, 1, 30.0, -1.0), (0.5, 0, 15.0, -1.0))
    frame.loc[len(frame)] = ["biaseddm", "jo", 0.5, 1, np.nan, np.nan, "failed: boom"]

    best = cmd_select(frame, w_u=1.0, w_f=0.0)

    assert best.loc[0, "beta_train"] == 0.0
    assert best.loc[0, "utility_mean"] == 20.0


def test_select_needs_rows(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")

    with pytest.raises(ConfigError):
        cmd_select(str(path))
