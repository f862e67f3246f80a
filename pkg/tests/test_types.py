import numpy as np
import pytest

from decaf.exceptions import EtaUndefinedError, InvalidCandidateSetError, InvalidTradeoffError
from decaf.types import (
    CandidateAction,
    CandidateSet,
    JointAllocation,
    ResourceCapacities,
    RewardBundle,
    TradeoffWeight,
    as_beta,
    eta_of,
    validate_candidate_set,
)


def null_action(K=1, feature_dim=2):
    return CandidateAction(0, np.zeros(feature_dim), np.zeros(K), is_null=True)


def test_minimal_set_is_valid():
    cs = CandidateSet([[null_action()], [null_action()]])

    assert validate_candidate_set(cs, ResourceCapacities([1.0]))


@pytest.mark.parametrize(
    "per_agent, reason",
    (
        ([[]], "empty candidate list"),
        ([[null_action(K=2)]], "dimension mismatch"),
        ([[CandidateAction(0, np.zeros(2), [1.0])]], "missing null action"),
        ([[null_action(), CandidateAction(1, np.zeros(2), [-1.0])]], "negative consumption"),
        ([[CandidateAction(0, np.zeros(2), [1.0], is_null=True)]], "null action consumes resources"),
        ([[null_action(), CandidateAction(3, np.zeros(2), [1.0])]], "action id mismatch"),
        ([[null_action(), CandidateAction(1, np.zeros(3), [1.0])]], "dimension mismatch"),
    ),
)
def test_broken_sets_are_rejected(per_agent, reason):
    with pytest.raises(InvalidCandidateSetError) as excinfo:
        validate_candidate_set(CandidateSet(per_agent), ResourceCapacities([1.0]))

    assert excinfo.value.reason == reason


def test_negative_capacity_is_rejected():
    with pytest.raises(InvalidCandidateSetError, match="negative capacity"):
        validate_candidate_set(CandidateSet([[null_action()]]), ResourceCapacities([-1.0]))


@pytest.mark.parametrize("beta, eta", ((0.0, 0.0), (0.5, 1.0), (0.8, 4.0)))
def test_eta_of(beta, eta):
    assert eta_of(beta) == pytest.approx(eta)
    assert TradeoffWeight(beta).eta == pytest.approx(eta)


def test_eta_is_undefined_at_one():
    with pytest.raises(EtaUndefinedError, match="eta undefined"):
        eta_of(1.0)


@pytest.mark.parametrize("beta", (-0.1, 1.5, float("nan")))
def test_beta_outside_unit_interval_is_rejected(beta):
    with pytest.raises(InvalidTradeoffError):
        as_beta(beta)


def test_value_objects_are_read_only():
    action = CandidateAction(0, [1.0, 2.0], [0.0], is_null=True)

    with pytest.raises(ValueError):
        action.features[0] = 5.0


def test_candidate_set_views():
    first = [null_action(), CandidateAction(1, [1.0, 1.0], [1.0])]
    second = [null_action()]
    cs = CandidateSet([first, second])

    assert cs.n == 2
    assert cs.sizes == (2, 1)
    assert cs.feature_dim == 2
    assert cs.feature_matrix.shape == (3, 2)
    assert cs.split([1, 2, 3]) == [[1, 2], [3]]
    assert cs.null_index(0) == 0
    np.testing.assert_array_equal(cs.chosen_features(JointAllocation((1, 0))), [[1.0, 1.0], [0.0, 0.0]])


def test_reward_bundle_lengths_must_agree():
    with pytest.raises(InvalidCandidateSetError, match="dimension mismatch"):
        RewardBundle(utility=[1.0, 2.0], fair=[0.0], payoff_delta=[1.0, 0.0])

    bundle = RewardBundle(utility=[1.0, 2.0], fair=[0.0, 0.0], payoff_delta=[1.0, 0.0])
    np.testing.assert_array_equal(bundle.with_fair([0.5, -0.5]).fair, [0.5, -0.5])
