from abc import ABCMeta, abstractmethod
from dataclasses import dataclass
from enum import Enum

import numpy as np

from decaf.exceptions import ConfigError, InfeasibleAllocationError
from decaf.fairness import PayoffMode
from decaf.types import CandidateAction, CandidateSet, ResourceCapacities, RewardBundle

FAIRNESS_FEATURE_DIM = 2


class EnvKind(Enum):
    MATTHEW = "matthew"
    JOB = "job"
    JOBALLOC = "joballoc"
    PLANT = "plant"
    BIASEDDM = "biaseddm"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value

        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigError(f"Unknown environment: {value!r}.") from None


@dataclass(frozen=True)
class EnvSpec:
    kind: EnvKind
    n_agents: int
    horizon: int
    feature_dim: int
    K: int

    def as_dict(self):
        return {
            "kind": self.kind.value,
            "n_agents": self.n_agents,
            "horizon": self.horizon,
            "feature_dim": self.feature_dim,
            "K": self.K,
        }


@dataclass(eq=False)
class EnvState:
    """Mutable world state of one episode.  Owned by exactly one running episode."""

    rng: np.random.Generator = None
    t: int = 0
    utility_total: float = 0.0


@dataclass(frozen=True, eq=False)
class ActionSpec:
    """What a candidate does, as the environment sees it (the allocator only sees its consumption)."""

    consumption: np.ndarray
    is_null: bool = False
    kind: str = "null"
    target: object = None


@dataclass(eq=False)
class StepOutcome:
    rewards: RewardBundle
    next_state: EnvState
    done: bool


def one_hot(index, size):
    vec = np.zeros(size)
    vec[index] = 1.0
    return vec


def resolve_grid_moves(positions, targets):
    """Resolves simultaneous grid moves so that no two agents end up on the same cell.

    A move is blocked (the agent stays put) when its target cell ends up holding somebody else: an agent
    that doesn't move, a blocked mover, or another mover heading for the same cell (then all of them are
    blocked).  Blocking cascades until nothing changes.  Swaps and rotations go through.

    Arguments:
        :positions: List[Tuple] - Current cell of every agent (all distinct).
        :targets: List[Tuple] - Wanted cell of every agent (its own cell when not moving).
    """
    final = list(targets)
    while True:
        blocked = [
            i
            for i, cell in enumerate(final)
            if cell != positions[i] and any(j != i and other == cell for j, other in enumerate(final))
        ]
        if not blocked:
            return final

        for i in blocked:
            final[i] = positions[i]


class BaseEnvironment(metaclass=ABCMeta):
    """ABC for a DECA environment.

    An environment owns no episode state itself: `reset()` hands out an `EnvState`, and every other method
    takes that state back in.  Each step goes:
        1. `candidates(state, tracker)` - per-agent candidate actions, each with the post-decision features
        of the agent taking it and its resource consumption, plus the step's resource capacities.
        2. the allocator picks one candidate per agent.
        3. `step(state, allocation)` - applies the joint action, returns utility and payoff increments.

    Candidate features are always the environment's local features followed by the two fairness features
    z_i - mean(Z) and mean(Z) read from the payoff tracker.

    A subclass must implement:
        `reset(seed)`
        `_actions(state)`
        `_local_features(state, agent, action, tracker)`
        `_apply(state, chosen, training)`
    and set the class attributes `kind`, `payoff_mode` and `local_feature_dim`, plus `n_agents`, `horizon`
    and `K` (usually from its constructor).
    """

    kind = None
    payoff_mode = PayoffMode.ADDITIVE
    local_feature_dim = 0

    @property
    def feature_dim(self):
        return self.local_feature_dim + FAIRNESS_FEATURE_DIM

    @property
    def spec(self):
        return EnvSpec(
            kind=self.kind,
            n_agents=self.n_agents,
            horizon=self.horizon,
            feature_dim=self.feature_dim,
            K=self.K,
        )

    def time_remaining(self, state):
        return (self.horizon - state.t) / self.horizon

    @abstractmethod
    def reset(self, seed):
        """Returns a fresh, seed-deterministic `EnvState` at step 0."""

    @abstractmethod
    def _actions(self, state):
        """Per-agent lists of `ActionSpec`s available at `state`.  Must not touch `state.rng`."""

    @abstractmethod
    def _local_features(self, state, agent, action, tracker):
        """The environment part of an agent's post-decision features if it took `action`."""

    @abstractmethod
    def _apply(self, state, chosen, training):
        """Applies one `ActionSpec` per agent to `state` in place.

        Returns:
            (ndarray, ndarray) - Per-agent utility rewards r_u and payoff increments.
        """

    def capacities(self, state):
        return np.ones(self.K)

    def candidates(self, state, tracker):
        """Builds the step's candidate set and capacities.

        Arguments:
            :state: EnvState - The current (non-terminal) state.
            :tracker: PayoffTracker - The episode's payoff tracker, read for the fairness features.
        """
        per_agent = []
        for agent, actions in enumerate(self._actions(state)):
            fair = tracker.fairness_features(agent)
            agent_candidates = []
            for action_id, action in enumerate(actions):
                features = np.concatenate([self._local_features(state, agent, action, tracker), fair])
                candidate = CandidateAction(action_id, features, action.consumption, is_null=action.is_null)
                agent_candidates.append(candidate)
            per_agent.append(agent_candidates)

        return CandidateSet(per_agent), ResourceCapacities(self.capacities(state))

    def step(self, state, allocation, training=False):
        """Applies a joint allocation and advances the episode by one step.

        The allocation must be feasible for the capacities `candidates()` returned at this same state,
        anything else raises `InfeasibleAllocationError` and leaves the state untouched.

        Arguments:
            :state: EnvState - The current state, updated in place.
            :allocation: JointAllocation - One candidate index per agent.
            :training: Boolean - True inside training episodes (enables shaping rewards, if any).
        """
        if state.t >= self.horizon:
            raise InfeasibleAllocationError("The episode is already over.")

        actions = self._actions(state)
        if len(allocation.chosen) != len(actions):
            raise InfeasibleAllocationError(f"Expected {len(actions)} actions, got {len(allocation.chosen)}.")

        usage = np.zeros(self.K)
        chosen = []
        for agent, index in enumerate(allocation.chosen):
            if not 0 <= index < len(actions[agent]):
                raise InfeasibleAllocationError(f"Agent {agent} has no action {index}.")

            chosen.append(actions[agent][index])
            usage = usage + actions[agent][index].consumption

        if np.any(usage > self.capacities(state)):
            raise InfeasibleAllocationError("The allocation exceeds the resource capacities.")

        utility, payoff_delta = self._apply(state, chosen, training)
        state.t += 1
        state.utility_total = state.utility_total + float(np.sum(utility))

        rewards = RewardBundle(utility=utility, fair=np.zeros(self.n_agents), payoff_delta=payoff_delta)
        return StepOutcome(rewards=rewards, next_state=state, done=state.t == self.horizon)
