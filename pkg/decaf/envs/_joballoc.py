from dataclasses import dataclass

import numpy as np

from decaf.envs.base import ActionSpec, BaseEnvironment, EnvKind, EnvState


@dataclass(eq=False)
class JobAllocState(EnvState):
    occupant: int = -1


class JobAllocEnvironment(BaseEnvironment):
    """A single job that pays 1 per step to whoever holds it.

    The job can only be claimed while it's free at the start of a step.  Its holder decides every step
    whether to stay (and earn) or leave; nobody else can act on it meanwhile, so any handoff goes through
    a step where the job is free.
    """

    kind = EnvKind.JOBALLOC
    local_feature_dim = 4

    def __init__(self, n_agents=4, horizon=100):
        self.n_agents = n_agents
        self.horizon = horizon
        self.K = 1

        self._null = ActionSpec(np.zeros(1), is_null=True)
        self._leave = ActionSpec(np.zeros(1), is_null=True, kind="leave")
        self._claim = ActionSpec(np.ones(1), kind="claim")
        self._stay = ActionSpec(np.ones(1), kind="stay")

    def reset(self, seed):
        return JobAllocState(rng=np.random.default_rng(seed))

    def _actions(self, state):
        if state.occupant < 0:
            return [[self._null, self._claim] for _ in range(self.n_agents)]

        actions = [[self._null] for _ in range(self.n_agents)]
        actions[state.occupant] = [self._leave, self._stay]
        return actions

    def _local_features(self, state, agent, action, tracker):
        return np.array(
            [
                float(state.occupant == agent),
                0.0 if action.is_null else 1.0,
                float(state.occupant < 0),
                self.time_remaining(state),
            ]
        )

    def _apply(self, state, chosen, training):
        utility = np.zeros(self.n_agents)
        state.occupant = -1
        for agent, action in enumerate(chosen):
            if not action.is_null:
                state.occupant = agent
                utility[agent] = 1.0

        return utility, utility.copy()
