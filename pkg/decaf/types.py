"""Shared domain types of the DECA loop.

Every other module speaks in these types: environments emit `CandidateSet`s and `ResourceCapacities`,
networks score candidates by their post-decision `features`, the allocator picks a `JointAllocation`, and
the learner stores `Experience`s built from all of them.

All of the types here are immutable value objects once constructed (numpy arrays are stored read-only),
so they can be freely shared between threads/processes.  Constructors only coerce shapes/dtypes; the
candidate invariants themselves are checked by `validate_candidate_set()`, so that callers can hold (and
test) a broken set without it blowing up at construction time.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from decaf.exceptions import EtaUndefinedError, InvalidCandidateSetError, InvalidTradeoffError


def _frozen_array(values):
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TradeoffWeight:
    """The utility/fairness trade-off weight beta of the combined objective (1 - beta) U + beta F."""

    beta: float

    def __post_init__(self):
        beta = float(self.beta)
        # NaN fails this check too.
        if not 0.0 <= beta <= 1.0:
            raise InvalidTradeoffError(self.beta)

        object.__setattr__(self, "beta", beta)

    @property
    def eta(self):
        return eta_of(self)


def as_beta(beta):
    """Normalizes a `TradeoffWeight` or a bare number into a validated float beta."""
    if isinstance(beta, TradeoffWeight):
        return beta.beta

    return TradeoffWeight(beta).beta


def eta_of(beta):
    """Returns the unnormalized trade-off weight eta = beta / (1 - beta).

    Maximizing U + eta F picks the same allocations as maximizing (1 - beta) U + beta F, since the two only
    differ by the positive factor 1 / (1 - beta).

    Arguments:
        :beta: TradeoffWeight/Float - Trade-off weight in [0, 1).
    """
    beta = as_beta(beta)
    if beta >= 1.0:
        raise EtaUndefinedError()

    return beta / (1.0 - beta)


@dataclass(frozen=True, eq=False)
class ResourceCapacities:
    """Per-step availability of each of the K resource types."""

    capacities: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "capacities", _frozen_array(self.capacities))

    @property
    def K(self):
        return len(self.capacities)


@dataclass(frozen=True, eq=False)
class CandidateAction:
    """One action an agent could take this step.

    `action_id` is the index of the action inside its agent's candidate list for the step it was produced
    at; `features` describe the agent's post-decision state if it took this action, and `consumption` is
    the action's resource usage c(a) over the K resource types.
    """

    action_id: int
    features: np.ndarray
    consumption: np.ndarray
    is_null: bool = False

    def __post_init__(self):
        object.__setattr__(self, "features", _frozen_array(self.features))
        object.__setattr__(self, "consumption", _frozen_array(self.consumption))


@dataclass(frozen=True, eq=False)
class CandidateSet:
    """Per-agent candidate lists for one step (agent i's list is `per_agent[i]`)."""

    per_agent: tuple

    def __post_init__(self):
        object.__setattr__(self, "per_agent", tuple(tuple(actions) for actions in self.per_agent))

    @property
    def n(self):
        return len(self.per_agent)

    @property
    def sizes(self):
        return tuple(len(actions) for actions in self.per_agent)

    @property
    def feature_dim(self):
        for actions in self.per_agent:
            if actions:
                return len(actions[0].features)

        return 0

    @cached_property
    def feature_matrix(self):
        """All candidate features stacked agent-major into one (total candidates x feature_dim) matrix."""
        rows = [action.features for actions in self.per_agent for action in actions]
        if not rows:
            return np.zeros((0, self.feature_dim))

        matrix = np.vstack(rows)
        matrix.setflags(write=False)
        return matrix

    def split(self, flat_values):
        """Splits a flat, agent-major vector (one entry per candidate) back into per-agent lists."""
        flat_values = list(flat_values)
        values = []
        start = 0
        for size in self.sizes:
            stop = start + size
            values.append(flat_values[start:stop])
            start = stop

        return values

    def null_index(self, agent):
        """Returns the index of the first null candidate of the given agent."""
        for action in self.per_agent[agent]:
            if action.is_null:
                return action.action_id

        raise InvalidCandidateSetError("missing null action", agent=agent)

    def chosen_features(self, allocation):
        """Stacks the features of the actions picked by the given allocation (one row per agent)."""
        return np.vstack([self.per_agent[i][a].features for i, a in enumerate(allocation.chosen)])


@dataclass(frozen=True)
class JointAllocation:
    """The action index chosen for every agent (exactly one per agent)."""

    chosen: tuple

    def __post_init__(self):
        object.__setattr__(self, "chosen", tuple(int(a) for a in self.chosen))

    @property
    def n(self):
        return len(self.chosen)


@dataclass(frozen=True, eq=False)
class RewardBundle:
    """The per-agent reward vectors of one joint step.

    `utility` is r_u, `fair` the decomposed fairness reward r_f and `payoff_delta` the increment fed to the
    payoff tracker Z.  Utility and payoff are usually the same signal, but needn't be (BiasedDM pays the
    decision-maker 0.2 * i while agents accumulate resource counts).
    """

    utility: np.ndarray
    fair: np.ndarray
    payoff_delta: np.ndarray

    def __post_init__(self):
        for name in ("utility", "fair", "payoff_delta"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name)))

        lengths = {len(self.utility), len(self.fair), len(self.payoff_delta)}
        if len(lengths) != 1:
            raise InvalidCandidateSetError("dimension mismatch")

    @property
    def n(self):
        return len(self.utility)

    def with_fair(self, fair):
        return RewardBundle(utility=self.utility, fair=fair, payoff_delta=self.payoff_delta)


@dataclass(frozen=True, eq=False)
class Experience:
    """One joint transition <o, A, r_u, r_f, o'>.

    Only features of the chosen actions are stored (never action ids), together with everything needed
    to re-solve the allocation at o' without touching the environment again.
    """

    chosen_features: np.ndarray
    rewards: RewardBundle
    successor_candidates: CandidateSet
    successor_capacities: ResourceCapacities
    done: bool = False

    def __post_init__(self):
        object.__setattr__(self, "chosen_features", _frozen_array(self.chosen_features))


def validate_candidate_set(cs, caps):
    """Checks a candidate set against its capacities.

    Returns True when everything is fine, otherwise raises an `InvalidCandidateSetError` carrying one of
    the fixed reasons listed on that exception.

    Arguments:
        :cs: CandidateSet - The per-agent candidate lists.
        :caps: ResourceCapacities - The step's resource availability (K entries).
    """
    capacities = caps.capacities
    if capacities.ndim != 1:
        raise InvalidCandidateSetError("dimension mismatch")
    if np.any(capacities < 0):
        raise InvalidCandidateSetError("negative capacity")

    K = len(capacities)
    feature_dim = None
    for agent, actions in enumerate(cs.per_agent):
        if not actions:
            raise InvalidCandidateSetError("empty candidate list", agent=agent)

        has_null = False
        for index, action in enumerate(actions):
            if action.action_id != index:
                raise InvalidCandidateSetError("action id mismatch", agent=agent)
            if action.features.ndim != 1:
                raise InvalidCandidateSetError("dimension mismatch", agent=agent)
            if feature_dim is None:
                feature_dim = len(action.features)
            if len(action.features) != feature_dim:
                raise InvalidCandidateSetError("dimension mismatch", agent=agent)
            if action.consumption.ndim != 1 or len(action.consumption) != K:
                raise InvalidCandidateSetError("dimension mismatch", agent=agent)
            if np.any(action.consumption < 0):
                raise InvalidCandidateSetError("negative consumption", agent=agent)
            if action.is_null:
                if np.any(action.consumption != 0):
                    raise InvalidCandidateSetError("null action consumes resources", agent=agent)
                has_null = True

        if not has_null:
            raise InvalidCandidateSetError("missing null action", agent=agent)

    return True
