"""Experiment configuration: one JSON document with the blocks below, every key defaulted.

    env       kind, plus "settings" handed to the environment's constructor (grid sizes, horizons, ...).
    learner   every LearnerConfig key; n_episodes/validate_every_k default per environment.
    fairness  kind, alpha, ggf_weights, warm_w, gamma_p (warm start and past discount default per
              fairness kind and environment).
    sweep     betas, seeds, modes, beta_tests (the heatmap/pareto-approx beta_test grid).
    select    w_u, w_f (model selection score weights).
    output    directory and CSV file names.

Keys outside this table are rejected, so typos never silently fall back to defaults.
"""
import copy
import json

from decaf.envs import make_env
from decaf.exceptions import ConfigError
from decaf.fairness import FairnessSpec
from decaf.learner import LearnerConfig

DEFAULT_BETAS = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99, 0.999, 1.0]

DEFAULTS = {
    "env": {
        "kind": "biaseddm",
        "settings": {},
    },
    "learner": {
        "mode": "jo",
        "beta": 0.0,
        "gamma": 0.95,
        "lr": 3e-4,
        "buffer_capacity": 250_000,
        "batch_size": 32,
        "learn_every_T": 4,
        "target_sync_tau": 10,
        "validate_every_k": None,
        "n_episodes": None,
        "n_eval": 50,
        "epsilon_start": 1.0,
        "epsilon_end": 0.05,
        "hidden_dims": [20, 20],
        "frozen_utility_checkpoint": None,
    },
    "fairness": {
        "kind": "variance",
        "alpha": 1.0,
        "ggf_weights": None,
        "warm_w": None,
        "gamma_p": None,
    },
    "sweep": {
        "betas": DEFAULT_BETAS,
        "seeds": [0, 1, 2, 3, 4],
        "modes": ["jo", "so", "fo"],
        "beta_tests": [0.0, 0.25, 0.5, 0.75, 1.0],
    },
    "select": {
        "w_u": 0.1,
        "w_f": 0.9,
    },
    "output": {
        "directory": "out",
        "train_log": "train_log.csv",
        "validation_log": "validation_log.csv",
        "eval": "eval.csv",
        "sweep": "sweep.csv",
        "pareto": "pareto.csv",
        "heatmap": "heatmap.csv",
        "pareto_approx": "pareto_approx.csv",
        "select": "select.csv",
    },
}

# Free-form blocks, checked by whoever consumes them.
OPEN_BLOCKS = {("env", "settings")}

EPISODE_DEFAULTS = {
    "biaseddm": {"n_episodes": 200, "validate_every_k": 20},
}
FALLBACK_EPISODES = {"n_episodes": 1000, "validate_every_k": 50}


def default_config():
    return copy.deepcopy(DEFAULTS)


def merge(base, overrides, path=()):
    """Recursively merges `overrides` into `base` (in place), rejecting keys `base` doesn't know."""
    if not isinstance(overrides, dict):
        raise ConfigError(f"Expected an object at {'.'.join(path) or 'top level'}.")

    for key, value in overrides.items():
        key_path = path + (key,)
        if path in OPEN_BLOCKS:
            base[key] = value
            continue
        if key not in base:
            raise ConfigError(f"Unknown config key: {'.'.join(key_path)}")

        if isinstance(base[key], dict):
            merge(base[key], value, key_path)
        else:
            base[key] = value

    return base


def load_config(path=None):
    """Reads a JSON config file (or just the defaults when `path` is None)."""
    config = default_config()
    if path is None:
        return config

    try:
        with open(path) as fo:
            document = json.load(fo)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} isn't valid JSON: {e}") from e

    return merge(config, document)


def parse_override(text):
    """Splits a `dotted.key=value` override; the value is read as JSON, or kept as a plain string."""
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"Overrides look like key=value, got {text!r}.")

    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw

    return key.strip(), value


def apply_overrides(config, overrides):
    """Applies `--set` style overrides on top of a config."""
    for text in overrides:
        key, value = parse_override(text)
        nested = value
        for part in reversed(key.split(".")):
            nested = {part: nested}
        merge(config, nested)

    return config


def env_kind(config):
    return str(config["env"]["kind"]).lower()


def resolve(config):
    """Fills in the per-environment learner defaults left as None."""
    resolved = copy.deepcopy(config)
    defaults = EPISODE_DEFAULTS.get(env_kind(config), FALLBACK_EPISODES)
    for key, value in defaults.items():
        if resolved["learner"][key] is None:
            resolved["learner"][key] = value

    return resolved


def fairness_spec(config):
    block = config["fairness"]
    return FairnessSpec(kind=block["kind"], alpha=block["alpha"], ggf_weights=block["ggf_weights"])


def build_env(config):
    return make_env(env_kind(config), **config["env"]["settings"])


def learner_config(config, mode=None, beta=None):
    """Builds the `LearnerConfig` of a (resolved) config, optionally with another mode and beta."""
    config = resolve(config)
    settings = dict(config["learner"])
    if mode is not None:
        settings["mode"] = mode
    if beta is not None:
        settings["beta"] = beta

    try:
        return LearnerConfig(
            fairness=fairness_spec(config),
            warm_w=config["fairness"]["warm_w"],
            gamma_p=config["fairness"]["gamma_p"],
            **settings,
        )
    except TypeError as e:
        raise ConfigError(f"Bad learner settings: {e}") from e


def dump_config(config, path):
    with open(path, "w") as fo:
        json.dump(config, fo, indent=2, sort_keys=True)
        fo.write("\n")
