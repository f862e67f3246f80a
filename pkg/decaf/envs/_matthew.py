import math
from dataclasses import dataclass

import numpy as np

from decaf.envs.base import ActionSpec, BaseEnvironment, EnvKind, EnvState


@dataclass(eq=False)
class MatthewState(EnvState):
    positions: np.ndarray = None
    sizes: np.ndarray = None
    targets: np.ndarray = None
    steps_left: np.ndarray = None
    resources: np.ndarray = None


class MatthewEnvironment(BaseEnvironment):
    """Agents of growing size race for resources in the unit square (a rich-get-richer world).

    A handful of agents start out bigger.  An agent's speed is proportional to its size, and every resource
    it collects makes it bigger (up to a ceiling), so early winners keep winning unless the allocation
    pushes back.

    Each free agent can claim any resource nobody is traveling to yet, or wander randomly (the null
    action).  A claiming agent travels in a straight line and lands on the resource after ceil(d / v) steps;
    it can't pick a new target while traveling.  A collected resource respawns uniformly at random.
    """

    kind = EnvKind.MATTHEW
    local_feature_dim = 11

    def __init__(
        self,
        n_agents=10,
        horizon=200,
        n_resources=3,
        n_advantaged=4,
        base_size=0.01,
        advantaged_size=0.03,
        speed_factor=2.5,
        growth=0.005,
        max_size=0.10,
    ):
        self.n_agents = n_agents
        self.horizon = horizon
        self.K = n_resources
        self.n_advantaged = n_advantaged
        self.base_size = base_size
        self.advantaged_size = advantaged_size
        self.speed_factor = speed_factor
        self.growth = growth
        self.max_size = max_size

    def speeds(self, state):
        return self.speed_factor * state.sizes

    def travel_steps(self, distance, speed):
        return max(1, math.ceil(distance / speed))

    def reset(self, seed):
        rng = np.random.default_rng(seed)
        sizes = np.full(self.n_agents, self.base_size)
        sizes[rng.choice(self.n_agents, size=self.n_advantaged, replace=False)] = self.advantaged_size

        return MatthewState(
            rng=rng,
            positions=rng.random((self.n_agents, 2)),
            sizes=sizes,
            targets=np.full(self.n_agents, -1),
            steps_left=np.zeros(self.n_agents, dtype=int),
            resources=rng.random((self.K, 2)),
        )

    def reserved(self, state):
        reserved = np.zeros(self.K, dtype=bool)
        reserved[state.targets[state.targets >= 0]] = True
        return reserved

    def capacities(self, state):
        return np.where(self.reserved(state), 0.0, 1.0)

    def _actions(self, state):
        reserved = self.reserved(state)
        actions = []
        for agent in range(self.n_agents):
            if state.targets[agent] >= 0:
                actions.append([ActionSpec(np.zeros(self.K), is_null=True, kind="continue")])
                continue

            agent_actions = [ActionSpec(np.zeros(self.K), is_null=True, kind="wander")]
            for k in np.flatnonzero(~reserved):
                consumption = np.zeros(self.K)
                consumption[k] = 1.0
                agent_actions.append(ActionSpec(consumption, kind="claim", target=int(k)))
            actions.append(agent_actions)

        return actions

    def _local_features(self, state, agent, action, tracker):
        x, y = state.positions[agent]
        size = state.sizes[agent]
        speed = self.speed_factor * size
        offset = np.zeros(2)
        steps = 0
        if action.kind == "claim":
            offset = state.resources[action.target] - state.positions[agent]
            steps = self.travel_steps(float(np.hypot(*offset)), speed)
        elif action.kind == "continue":
            offset = state.resources[state.targets[agent]] - state.positions[agent]
            steps = state.steps_left[agent]

        return np.array(
            [
                x,
                y,
                size / self.max_size,
                speed,
                offset[0],
                offset[1],
                np.hypot(*offset),
                steps / self.horizon,
                float(action.kind == "claim"),
                float(action.kind == "continue"),
                self.time_remaining(state),
            ]
        )

    def _wander(self, state, agent):
        angle = state.rng.uniform(0.0, 2.0 * math.pi)
        step = self.speed_factor * state.sizes[agent] * np.array([math.cos(angle), math.sin(angle)])
        state.positions[agent] = np.clip(state.positions[agent] + step, 0.0, 1.0)

    def _travel(self, state, agent):
        """Moves a committed agent one step toward its resource.  Returns True when it got there."""
        target = state.resources[state.targets[agent]]
        if state.steps_left[agent] <= 1:
            state.positions[agent] = target
            return True

        offset = target - state.positions[agent]
        distance = float(np.hypot(*offset))
        speed = self.speed_factor * state.sizes[agent]
        state.positions[agent] = state.positions[agent] + offset * (speed / distance)
        state.steps_left[agent] -= 1
        return False

    def _apply(self, state, chosen, training):
        collected = np.zeros(self.n_agents)
        for agent, action in enumerate(chosen):
            if action.kind == "claim":
                offset = state.resources[action.target] - state.positions[agent]
                speed = self.speed_factor * state.sizes[agent]
                state.targets[agent] = action.target
                state.steps_left[agent] = self.travel_steps(float(np.hypot(*offset)), speed)

        for agent, action in enumerate(chosen):
            if action.kind == "wander":
                self._wander(state, agent)
            elif self._travel(state, agent):
                k = state.targets[agent]
                collected[agent] = 1.0
                state.sizes[agent] = min(self.max_size, state.sizes[agent] + self.growth)
                state.resources[k] = state.rng.random(2)
                state.targets[agent] = -1
                state.steps_left[agent] = 0

        return collected, collected.copy()
