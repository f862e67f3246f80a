from fractions import Fraction
from unittest import mock

import numpy as np
import pytest

from decaf.theorems import (
    ETA_INFINITY,
    check_instance,
    eta_upper_bound,
    make_instance,
    random_instance,
    run_theorem_check,
    selections,
    switch_count,
    switch_example,
)

SWITCH_ETAS = [0.0, 0.5, 1.0, 1.25, 1.3125, 1.375, 1.5, 2.0, 4.0]


def test_switch_example_switches_once():
    instance = switch_example()

    picks = selections(instance, SWITCH_ETAS)

    assert picks[:5] == [(0,)] * 5
    assert picks[5:] == [(1,)] * 4
    assert switch_count(instance, SWITCH_ETAS) == 1


def test_switch_example_bound():
    assert eta_upper_bound(switch_example()) == Fraction(4, 3)


def test_bound_is_none_when_fairness_never_changes():
    instance = make_instance(utility=[[1, 2]], fairness=[[1, 1]], consumption=[[[0.0], [1.0]]], capacities=[1.0])

    assert eta_upper_bound(instance) is None
    assert check_instance(instance) == []


def test_eta_zero_is_utilitarian():
    instance = make_instance(
        utility=[[0, 3, 5], [0, 4, 1]],
        fairness=[[0, 2, 0], [0, 0, 3]],
        consumption=[[[0.0], [1.0], [1.0]], [[0.0], [1.0], [0.0]]],
        capacities=[1.0],
    )

    assert selections(instance, [0.0]) == [(2, 2)]
    assert selections(instance, [ETA_INFINITY]) == [(1, 2)]


@pytest.mark.parametrize("seed", range(5))
def test_random_instances_hold(seed):
    rng = np.random.default_rng(seed)
    for _ in range(40):
        assert check_instance(random_instance(rng)) == []


def test_run_theorem_check():
    report = run_theorem_check(n_instances=500, seed=7)

    assert report.ok
    assert report.instances == 500
    assert ETA_INFINITY in report.etas


def test_violations_carry_a_dump():
    broken = mock.Mock()
    broken.return_value.allocation.chosen = (1,)

    with mock.patch("decaf.theorems.solve", broken):
        violations = check_instance(switch_example(), etas=[0.0])

    assert [v["property"] for v in violations] == ["utilitarian at eta = 0"]
    assert violations[0]["instance"]["utility"] == [[10, 6]]
    assert violations[0]["instance"]["capacities"] == [1.0]
