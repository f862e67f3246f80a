from dataclasses import dataclass

import numpy as np

from decaf.envs.base import ActionSpec, BaseEnvironment, EnvKind, EnvState, resolve_grid_moves

MOVES = ((1, 0), (-1, 0), (0, 1), (0, -1))
CORNERS = ((0, 0), (0, 6), (6, 0), (6, 6))


@dataclass(eq=False)
class JobState(EnvState):
    positions: list = None


class JobEnvironment(BaseEnvironment):
    """Agents walk a square grid; whoever stands on the job cell at the end of a step earns 1.

    Every agent can stay (the null action) or move one cell in a cardinal direction.  Moves that would
    leave the grid aren't offered (they'd be no-ops anyway).  A move consumes its target cell, one resource
    per cell with capacity 1, so no two movers share a target; a move into a cell whose occupant doesn't
    leave is blocked during the step.

    In training episodes each agent also pays a distance penalty, `shaping` times its Manhattan distance to
    the job over the grid width, on r_u only (never on its payoff).
    """

    kind = EnvKind.JOB

    def __init__(self, grid_size=7, horizon=100, job=(3, 3), starts=CORNERS, shaping=0.01):
        self.grid_size = grid_size
        self.horizon = horizon
        self.job = tuple(job)
        self.starts = tuple(tuple(cell) for cell in starts)
        self.shaping = shaping
        self.n_agents = len(self.starts)
        self.local_feature_dim = 7 + 2 * (self.n_agents - 1)
        self.K = grid_size * grid_size

    def cell_index(self, cell):
        return cell[0] * self.grid_size + cell[1]

    def distance_to_job(self, cell):
        return abs(cell[0] - self.job[0]) + abs(cell[1] - self.job[1])

    def reset(self, seed):
        return JobState(rng=np.random.default_rng(seed), positions=list(self.starts))

    def _actions(self, state):
        actions = []
        for x, y in state.positions:
            agent_actions = [ActionSpec(np.zeros(self.K), is_null=True, kind="stay", target=(x, y))]
            for dx, dy in MOVES:
                cell = (x + dx, y + dy)
                if 0 <= cell[0] < self.grid_size and 0 <= cell[1] < self.grid_size:
                    consumption = np.zeros(self.K)
                    consumption[self.cell_index(cell)] = 1.0
                    agent_actions.append(ActionSpec(consumption, kind="move", target=cell))
            actions.append(agent_actions)

        return actions

    def _local_features(self, state, agent, action, tracker):
        scale = self.grid_size - 1
        x, y = action.target
        others = []
        for other, (ox, oy) in enumerate(state.positions):
            if other != agent:
                others.extend([(ox - x) / scale, (oy - y) / scale])

        features = [
            x / scale,
            y / scale,
            (self.job[0] - x) / scale,
            (self.job[1] - y) / scale,
            self.distance_to_job((x, y)) / (2 * scale),
            float((x, y) == self.job),
        ]
        features.extend(others)
        features.append(self.time_remaining(state))
        return np.array(features)

    def _apply(self, state, chosen, training):
        state.positions = resolve_grid_moves(state.positions, [action.target for action in chosen])

        payoff_delta = np.array([float(cell == self.job) for cell in state.positions])
        utility = payoff_delta.copy()
        if training:
            distances = np.array([self.distance_to_job(cell) for cell in state.positions])
            utility = utility - self.shaping * distances / self.grid_size

        return utility, payoff_delta
