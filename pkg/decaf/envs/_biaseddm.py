from dataclasses import dataclass

import numpy as np

from decaf.envs.base import ActionSpec, BaseEnvironment, EnvKind, EnvState, one_hot
from decaf.fairness import PayoffMode


@dataclass(eq=False)
class BiasedDMState(EnvState):
    last_recipient: int = -1


class BiasedDMEnvironment(BaseEnvironment):
    """A biased decision maker hands out one resource per step to one of n agents.

    The decision maker's utility for giving the resource to agent i (0-based) is `bias * (i + 1)`, so a
    utilitarian policy always feeds the last agent.  The agents themselves only count how many resources
    they got, as a resource rate (Rate payoffs).

    Features per candidate: one-hot agent id, the claim flag, and the agent's previewed rate after this
    step minus the current mean rate.
    """

    kind = EnvKind.BIASEDDM
    payoff_mode = PayoffMode.RATE

    def __init__(self, n_agents=5, horizon=100, bias=0.2):
        self.n_agents = n_agents
        self.horizon = horizon
        self.bias = bias
        self.K = 1
        self.local_feature_dim = n_agents + 2

        self._null = ActionSpec(np.zeros(1), is_null=True)
        self._claim = ActionSpec(np.ones(1), kind="claim")

    def reset(self, seed):
        return BiasedDMState(rng=np.random.default_rng(seed))

    def _actions(self, state):
        return [[self._null, self._claim] for _ in range(self.n_agents)]

    def _local_features(self, state, agent, action, tracker):
        claim = 0.0 if action.is_null else 1.0
        preview = tracker.preview(agent, claim) - tracker.mean
        return np.concatenate([one_hot(agent, self.n_agents), [claim, preview]])

    def _apply(self, state, chosen, training):
        utility = np.zeros(self.n_agents)
        payoff_delta = np.zeros(self.n_agents)
        state.last_recipient = -1
        for agent, action in enumerate(chosen):
            if not action.is_null:
                utility[agent] = self.bias * (agent + 1)
                payoff_delta[agent] = 1.0
                state.last_recipient = agent

        return utility, payoff_delta
