"""Experiment orchestration behind the `decaf` command line: training runs, beta sweeps, beta_train x
beta_test heatmaps, sparse-model Pareto approximations and cross-beta model selection.

Every run lives in its own directory, out/<env>/<mode>/<fairness>/beta_<v>/seed_<s>/, holding
    config.json           the fully resolved configuration
    train_log.csv         one row per training episode
    validation_log.csv    one row per validation episode
    eval.csv              the final evaluation row (EVAL_COLUMNS)
    checkpoint_<role>.dcaf  one checkpoint per network (q for JO; u and f for SO; f and the frozen u for FO)
"""
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd

from decaf.config import build_env, dump_config, env_kind, learner_config, resolve
from decaf.exceptions import ConfigError, DecafError, DimensionMismatchError, MissingNetworkError
from decaf.learner import Estimators, LearnerMode, evaluate_policy, run_training, selection_score
from decaf.valuenet import Role, read_checkpoint, write_checkpoint

logger = logging.getLogger(__name__)

EVAL_COLUMNS = [
    "run_id",
    "env",
    "mode",
    "fairness_kind",
    "beta_train",
    "beta_test",
    "seed",
    "utility_mean",
    "utility_std",
    "variance_mean",
    "variance_std",
    "alphafair_mean",
    "alphafair_std",
    "ggf_mean",
    "ggf_std",
    "maximin_mean",
    "maximin_std",
    "fairness_mean",
    "fairness_std",
    "selection_score",
    "status",
    "run_dir",
]
HEATMAP_METRICS = ("utility", "variance", "alphafair", "ggf", "maximin")


@dataclass(frozen=True)
class RunRecord:
    row: dict
    run_dir: str


def format_beta(beta):
    return format(float(beta), "g")


def run_name(env, mode, fairness, beta, seed):
    return f"{env}/{mode}/{fairness}/beta_{format_beta(beta)}/seed_{seed}"


def run_directory(out_dir, env, mode, fairness, beta, seed):
    return os.path.join(out_dir, run_name(env, mode, fairness, beta, seed))


def checkpoint_path(run_dir, role):
    return os.path.join(run_dir, f"checkpoint_{role}.dcaf")


def _eval_row(run_id, config, mode, beta_train, seed, summary, run_dir, status="ok"):
    row = dict.fromkeys(EVAL_COLUMNS, math.nan)
    row.update(
        {
            "run_id": run_id,
            "env": env_kind(config),
            "mode": LearnerMode.parse(mode).value,
            "fairness_kind": str(config["fairness"]["kind"]).lower(),
            "beta_train": float(beta_train),
            "seed": seed,
            "status": status,
            "run_dir": run_dir,
        }
    )
    if summary is not None:
        row["beta_test"] = summary["beta_test"]
        for key in EVAL_COLUMNS:
            if key in summary:
                row[key] = summary[key]
        row["selection_score"] = selection_score(summary["utility_mean"], -summary["variance_mean"])

    return row


def write_rows(rows, path, columns=None):
    frame = pd.DataFrame(rows, columns=columns)
    frame.to_csv(path, index=False)
    return frame


def cmd_train(config, out_dir, seed=0, progress=False, frozen_u_path=None):
    """Trains one model and writes its run directory.

    Arguments:
        :config: Dict - The experiment configuration (learner.mode and learner.beta pick the model).
        :out_dir: String - Root output directory.
        :seed: Integer - Run seed.
        :frozen_u_path: String/None - FO's frozen utility checkpoint (overrides the configured one).
    """
    config = resolve(config)
    env = build_env(config)
    learner = learner_config(config)
    fairness = learner.fairness.kind.value
    run_id = run_name(env.kind.value, learner.mode.value, fairness, learner.beta, seed)
    run_dir = run_directory(out_dir, env.kind.value, learner.mode.value, fairness, learner.beta, seed)

    frozen_u = None
    if learner.mode is LearnerMode.FO:
        path = frozen_u_path or learner.frozen_utility_checkpoint
        if not path:
            raise MissingNetworkError("FO runs need learner.frozen_utility_checkpoint.")
        frozen_u, _ = read_checkpoint(path)

    os.makedirs(run_dir, exist_ok=True)
    dump_config(config, os.path.join(run_dir, "config.json"))

    result = run_training(env, learner, seed=seed, frozen_u=frozen_u, progress=progress, run_id=run_id)

    output = config["output"]
    write_rows(result.train_log, os.path.join(run_dir, output["train_log"]))
    write_rows(result.validation_log, os.path.join(run_dir, output["validation_log"]))

    spec = env.spec
    metadata = {
        "env": spec.kind.value,
        "env_spec": spec.as_dict(),
        "mode": learner.mode.value,
        "fairness_kind": fairness,
        "beta": learner.beta,
        "seed": seed,
        "best_episode": result.best_episode,
        "config": config,
    }
    for role, net in result.estimators.trained_nets().items():
        write_checkpoint(checkpoint_path(run_dir, role), net, dict(metadata, role=role))
    if frozen_u is not None:
        write_checkpoint(checkpoint_path(run_dir, Role.U.value), frozen_u, dict(metadata, role=Role.U.value))

    row = _eval_row(run_id, config, learner.mode, learner.beta, seed, result.summary, run_dir)
    write_rows([row], os.path.join(run_dir, output["eval"]), columns=EVAL_COLUMNS)
    logger.info("%s: utility %.3f, variance %.4f", run_id, row["utility_mean"], row["variance_mean"])

    return RunRecord(row=row, run_dir=run_dir)


def load_run(run_dir):
    """Loads a run directory back into estimators.

    Returns:
        (Estimators, Dict) - The estimators (targets refreshed) and the run's configuration.
    """
    with open(os.path.join(run_dir, "config.json")) as fo:
        config = json.load(fo)

    mode = LearnerMode.parse(config["learner"]["mode"])
    nets = {}
    for role in Role:
        path = checkpoint_path(run_dir, role.value)
        if os.path.exists(path):
            nets[role.value], _ = read_checkpoint(path)

    estimators = Estimators(mode=mode, beta_train=float(config["learner"]["beta"]))
    if mode is LearnerMode.JO:
        estimators.q = nets.get("q")
    elif mode is LearnerMode.SO:
        estimators.u = nets.get("u")
        estimators.f = nets.get("f")
    else:
        estimators.frozen_u = nets.get("u")
        estimators.f = nets.get("f")

    feature_dim = build_env(config).spec.feature_dim
    for net in nets.values():
        if net.config.input_dim != feature_dim:
            raise DimensionMismatchError(feature_dim, net.config.input_dim)

    estimators.check()
    estimators.refresh_targets()
    return estimators, config


def cmd_evaluate(run_dir, beta_test=None, n_eval=None, seed=0, progress=False):
    """Evaluates a finished run at `beta_test` (SO/FO) or at its own beta (JO) and returns the eval row."""
    estimators, config = load_run(run_dir)
    learner = learner_config(config)
    summary = evaluate_policy(
        estimators,
        build_env(config),
        learner,
        beta_test=beta_test,
        n_eval=n_eval,
        seed=seed,
        progress=progress,
    )

    run_id = os.path.relpath(run_dir)
    return _eval_row(run_id, config, estimators.mode, estimators.beta_train, seed, summary, run_dir)


def pareto_mask(utilities, fairness):
    """Flags the points not dominated in (utility, fairness); duplicates of a front point stay on it."""
    utilities = np.asarray(utilities, dtype=np.float64)
    fairness = np.asarray(fairness, dtype=np.float64)
    mask = np.ones(len(utilities), dtype=bool)
    for i in range(len(utilities)):
        no_worse = (utilities >= utilities[i]) & (fairness >= fairness[i])
        better = (utilities > utilities[i]) | (fairness > fairness[i])
        mask[i] = not np.any(no_worse & better)

    return mask


def _sweep_job(job):
    """Runs one sweep run; failures come back as a row with the error in its status."""
    config = json.loads(job["config"])
    config["learner"]["mode"] = job["mode"]
    config["learner"]["beta"] = job["beta"]
    try:
        record = cmd_train(config, job["out_dir"], seed=job["seed"], frozen_u_path=job.get("frozen_u_path"))
    except Exception as e:
        run_id = run_name(env_kind(config), job["mode"], config["fairness"]["kind"], job["beta"], job["seed"])
        logger.warning("%s failed: %s", run_id, e, exc_info=not isinstance(e, DecafError))
        return _eval_row(run_id, config, job["mode"], job["beta"], job["seed"], None, "", status=f"failed: {e}")

    return record.row


def _run_jobs(jobs, workers):
    if workers <= 1:
        return [_sweep_job(job) for job in jobs]

    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_job, jobs))


def aggregate_front(frame, group="mode", x="beta_train"):
    """Averages successful rows over seeds per (group, x) and flags Pareto membership within each group."""
    ok = frame[frame["status"] == "ok"]
    means = ok.groupby([group, x], as_index=False)[["utility_mean", "fairness_mean", "variance_mean"]].mean()
    means["pareto"] = False
    for _, rows in means.groupby(group):
        means.loc[rows.index, "pareto"] = pareto_mask(rows["utility_mean"], rows["fairness_mean"])

    return means


def cmd_sweep(config, out_dir, workers=1, progress=False):
    """Trains modes x betas x seeds and aggregates every evaluation row.

    FO runs need a frozen utility model: unless learner.frozen_utility_checkpoint is set, a JO run at
    beta = 0 is trained first for every seed and used as that seed's frozen model.

    Returns:
        (DataFrame, DataFrame) - All evaluation rows, and the per-mode seed averages with a pareto flag.
    """
    config = resolve(config)
    sweep = config["sweep"]
    modes = [LearnerMode.parse(mode).value for mode in sweep["modes"]]
    encoded = json.dumps(config)

    def job(mode, beta, seed, frozen_u_path=None):
        return {
            "config": encoded,
            "out_dir": out_dir,
            "mode": mode,
            "beta": float(beta),
            "seed": seed,
            "frozen_u_path": frozen_u_path,
        }

    rows = []
    frozen = {}
    needs_frozen = "fo" in modes and not config["learner"]["frozen_utility_checkpoint"]
    if needs_frozen:
        utilitarian = _run_jobs([job("jo", 0.0, seed) for seed in sweep["seeds"]], workers)
        for seed, row in zip(sweep["seeds"], utilitarian):
            if row["status"] == "ok":
                frozen[seed] = checkpoint_path(row["run_dir"], Role.Q.value)
            if "jo" in modes and 0.0 in [float(beta) for beta in sweep["betas"]]:
                rows.append(row)

    jobs = []
    for mode in modes:
        for beta in sweep["betas"]:
            for seed in sweep["seeds"]:
                if needs_frozen and mode == "jo" and float(beta) == 0.0:
                    continue
                if mode == "fo" and needs_frozen and seed not in frozen:
                    logger.warning("Skipping FO seed %s: its utilitarian run failed", seed)
                    continue
                jobs.append(job(mode, beta, seed, frozen.get(seed)))

    logger.info("Sweeping %d runs over %d workers", len(jobs), workers)
    rows.extend(_run_jobs(jobs, workers))

    output = config["output"]
    os.makedirs(out_dir, exist_ok=True)
    frame = write_rows(rows, os.path.join(out_dir, output["sweep"]), columns=EVAL_COLUMNS)
    front = aggregate_front(frame)
    front.to_csv(os.path.join(out_dir, output["pareto"]), index=False)
    return frame, front


def _load_generalizing_runs(run_dirs):
    runs = []
    for run_dir in run_dirs:
        estimators, config = load_run(run_dir)
        if estimators.mode is LearnerMode.JO:
            raise ConfigError(f"{run_dir} is a JO run; only SO and FO models generalize across beta.")
        runs.append((run_dir, estimators, config))

    return runs


def cmd_heatmap(run_dirs, beta_tests, out_path=None, n_eval=None, seed=0, progress=False):
    """Evaluates every SO/FO run at every beta_test into a long-format table (one row per cell and metric)."""
    rows = []
    for run_dir, estimators, config in _load_generalizing_runs(run_dirs):
        env = build_env(config)
        learner = learner_config(config)
        for beta_test in beta_tests:
            summary = evaluate_policy(
                estimators,
                env,
                learner,
                beta_test=beta_test,
                n_eval=n_eval,
                seed=seed,
                progress=progress,
            )
            for metric in HEATMAP_METRICS:
                rows.append(
                    {
                        "env": env.kind.value,
                        "mode": estimators.mode.value,
                        "fairness_kind": learner.fairness.kind.value,
                        "beta_train": estimators.beta_train,
                        "beta_test": float(beta_test),
                        "metric": metric,
                        "mean": summary[f"{metric}_mean"],
                        "std": summary[f"{metric}_std"],
                        "run_dir": run_dir,
                    }
                )

    frame = pd.DataFrame(rows)
    if out_path:
        frame.to_csv(out_path, index=False)
    return frame


def nearest_run(runs, beta_test):
    """The run whose beta_train is closest to beta_test (the lower beta_train on ties)."""
    return min(runs, key=lambda run: (abs(run[1].beta_train - beta_test), run[1].beta_train))


def cmd_pareto_approx(run_dirs, beta_tests, out_path=None, n_eval=None, seed=0, progress=False):
    """Approximates a Pareto front from a few SO/FO models, each beta_test served by the nearest beta_train."""
    runs = _load_generalizing_runs(run_dirs)
    if len(runs) < 2:
        raise ConfigError("Approximating a front needs at least 2 SO/FO runs.")

    rows = []
    for beta_test in beta_tests:
        run_dir, estimators, config = nearest_run(runs, float(beta_test))
        learner = learner_config(config)
        summary = evaluate_policy(
            estimators,
            build_env(config),
            learner,
            beta_test=beta_test,
            n_eval=n_eval,
            seed=seed,
            progress=progress,
        )
        rows.append(
            {
                "beta_test": float(beta_test),
                "beta_train": estimators.beta_train,
                "mode": estimators.mode.value,
                "utility_mean": summary["utility_mean"],
                "fairness_mean": summary["fairness_mean"],
                "variance_mean": summary["variance_mean"],
                "run_dir": run_dir,
            }
        )

    frame = pd.DataFrame(rows)
    frame["pareto"] = pareto_mask(frame["utility_mean"], frame["fairness_mean"])
    if out_path:
        frame.to_csv(out_path, index=False)
    return frame


def cmd_select(frame, w_u=0.1, w_f=0.9):
    """Picks, per (env, mode), the beta_train maximizing w_u * U - w_f * var(Z) over seed-averaged rows.

    `variance_mean` holds the fairness value -var(Z), so it's negated back before scoring.  Ties go to the
    lower beta.

    Arguments:
        :frame: DataFrame/String - Evaluation rows, or the path of a CSV holding them.
    """
    if isinstance(frame, (str, os.PathLike)):
        try:
            frame = pd.read_csv(frame)
        except pd.errors.EmptyDataError:
            frame = pd.DataFrame()

    if frame.empty:
        raise ConfigError("No evaluation rows to select from.")
    if "status" in frame:
        frame = frame[frame["status"] == "ok"]
    for key in ("env", "mode"):
        if key not in frame:
            frame = frame.assign(**{key: ""})

    keys = ["env", "mode"]
    means = frame.groupby(keys + ["beta_train"], as_index=False)[["utility_mean", "variance_mean"]].mean()
    means["score"] = selection_score(means["utility_mean"], -means["variance_mean"], w_u=w_u, w_f=w_f)

    best = []
    for _, rows in means.groupby(keys):
        rows = rows.sort_values("beta_train", kind="stable")
        best.append(rows.loc[rows["score"].idxmax()])

    return pd.DataFrame(best).reset_index(drop=True)
