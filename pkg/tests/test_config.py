import json

import pytest

from decaf.config import (
    DEFAULTS,
    apply_overrides,
    build_env,
    default_config,
    dump_config,
    fairness_spec,
    learner_config,
    load_config,
    merge,
    parse_override,
    resolve,
)
from decaf.envs import EnvKind
from decaf.exceptions import ConfigError
from decaf.fairness import FairnessKind
from decaf.learner import LearnerMode


def test_defaults_are_copies():
    config = default_config()
    config["learner"]["gamma"] = 0.5

    assert DEFAULTS["learner"]["gamma"] == 0.95


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigError, match="learner.gama"):
        merge(default_config(), {"learner": {"gama": 0.9}})
    with pytest.raises(ConfigError):
        merge(default_config(), {"learner": 3})


def test_env_settings_are_free_form():
    config = merge(default_config(), {"env": {"kind": "job", "settings": {"grid_size": 5}}})

    assert build_env(config).grid_size == 5


def test_load_config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"env": {"kind": "joballoc"}, "learner": {"mode": "so", "beta": 0.2}}))

    config = load_config(path)

    assert config["env"]["kind"] == "joballoc"
    assert config["learner"]["beta"] == 0.2
    assert config["learner"]["gamma"] == 0.95


def test_broken_json_is_a_config_error(tmp_path):
    path = tmp_path / "config.json"
    path.write_text("{not json")

    with pytest.raises(ConfigError):
        load_config(path)


@pytest.mark.parametrize(
    "text, expected",
    (
        ("learner.beta=0.5", ("learner.beta", 0.5)),
        ("sweep.seeds=[0, 1]", ("sweep.seeds", [0, 1])),
        ("env.kind=plant", ("env.kind", "plant")),
        ("fairness.ggf_weights=null", ("fairness.ggf_weights", None)),
    ),
)
def test_parse_override(text, expected):
    assert parse_override(text) == expected


@pytest.mark.parametrize("text", ("learner.beta", "=3"))
def test_malformed_overrides(text):
    with pytest.raises(ConfigError):
        parse_override(text)


def test_apply_overrides():
    config = apply_overrides(default_config(), ["learner.beta=0.25", "fairness.kind=maximin"])

    assert config["learner"]["beta"] == 0.25
    assert fairness_spec(config).kind is FairnessKind.MAXIMIN
    with pytest.raises(ConfigError):
        apply_overrides(config, ["learner.nope=1"])


@pytest.mark.parametrize("kind, n_episodes, validate_every_k", (("biaseddm", 200, 20), ("matthew", 1000, 50)))
def test_per_environment_episode_defaults(kind, n_episodes, validate_every_k):
    config = resolve(merge(default_config(), {"env": {"kind": kind}}))

    assert config["learner"]["n_episodes"] == n_episodes
    assert config["learner"]["validate_every_k"] == validate_every_k


def test_explicit_episode_counts_win():
    config = resolve(merge(default_config(), {"learner": {"n_episodes": 7}}))

    assert config["learner"]["n_episodes"] == 7


def test_learner_config():
    config = merge(default_config(), {"learner": {"hidden_dims": [8]}, "fairness": {"warm_w": 1.5}})

    learner = learner_config(config, mode="fo", beta=0.5)

    assert learner.mode is LearnerMode.FO
    assert learner.beta == 0.5
    assert learner.hidden_dims == (8,)
    assert learner.warm_w == 1.5
    assert learner.n_episodes == 200


def test_bad_environment_kind():
    with pytest.raises(ConfigError):
        build_env(merge(default_config(), {"env": {"kind": "warehouse"}}))


def test_dump_config_round_trips(tmp_path):
    config = apply_overrides(default_config(), ["env.kind=plant"])
    path = tmp_path / "config.json"

    dump_config(config, path)

    assert load_config(path) == config
    assert build_env(load_config(path)).kind is EnvKind.PLANT
