"""Package-wide tests."""

import importlib

import pytest


@pytest.mark.parametrize(
    "item_name",
    (
        "AllocationProblem",
        "CandidateSet",
        "DecafError",
        "Estimators",
        "FairnessSpec",
        "LearnerConfig",
        "ValueNet",
        "make_env",
        "run_training",
        "solve",
    ),
)
def test_thing_should_be_importable(item_name):
    module = importlib.import_module("decaf")

    assert hasattr(module, item_name)


@pytest.mark.parametrize("module_name", ("decaf.cli", "decaf.experiments", "decaf.theorems", "decaf.config"))
def test_module_should_be_importable(module_name):
    importlib.import_module(module_name)
