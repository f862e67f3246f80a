import numpy as np
import pytest

from decaf.types import CandidateAction, CandidateSet, ResourceCapacities


@pytest.fixture(autouse=True)
def isolated_out(monkeypatch):
    monkeypatch.delenv("DECAF_OUT", raising=False)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_candidates(consumptions, feature_dim=2):
    """Builds a candidate set from per-agent consumption lists; candidate 0 is always the null action."""
    per_agent = []
    for agent, rows in enumerate(consumptions):
        actions = []
        for index, consumption in enumerate(rows):
            features = np.full(feature_dim, agent + index / 10)
            actions.append(CandidateAction(index, features, consumption, is_null=index == 0))
        per_agent.append(actions)

    return CandidateSet(per_agent)


@pytest.fixture
def contested():
    """Three agents, one unit of one resource, each agent can claim it."""
    candidates = make_candidates([[[0.0], [1.0]], [[0.0], [1.0]], [[0.0], [1.0]]])
    return candidates, ResourceCapacities([1.0])


def random_problem_parts(rng, max_agents=6, max_candidates=5, max_resources=3):
    n = int(rng.integers(1, max_agents + 1))
    K = int(rng.integers(1, max_resources + 1))
    consumptions = []
    for _ in range(n):
        m = int(rng.integers(1, max_candidates + 1))
        rows = rng.integers(0, 3, size=(m, K)).astype(float)
        rows[0] = 0.0
        consumptions.append(rows)

    candidates = make_candidates(consumptions)
    capacities = ResourceCapacities(rng.integers(0, 3, size=K).astype(float))
    values = [rng.uniform(-5.0, 5.0, size=len(rows)).round(3) for rows in consumptions]
    return values, candidates, capacities


@pytest.fixture
def build_candidates():
    return make_candidates


@pytest.fixture
def random_problem():
    return random_problem_parts
