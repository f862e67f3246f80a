from dataclasses import dataclass

import numpy as np

from decaf.envs.base import ActionSpec, BaseEnvironment, EnvKind, EnvState, one_hot, resolve_grid_moves

REQUIREMENTS = ((2, 1, 0), (1, 0, 1), (1, 0, 0), (1, 3, 0), (0, 1, 2))
TYPE_COUNTS = (3, 3, 2)


@dataclass(eq=False)
class PlantState(EnvState):
    positions: list = None
    resource_cells: list = None
    inventory: np.ndarray = None
    targets: np.ndarray = None


class PlantEnvironment(BaseEnvironment):
    """A manufacturing plant: agents gather typed resources on a grid to build units.

    Every agent has a requirement, a count per resource type; once its inventory covers the requirement it
    builds one unit (reward 1) and the requirement is taken out of the inventory.  Agents only get to claim
    resources of a type they still need, then walk to them deterministically (x first, then y) and can't
    switch targets on the way.  A collected resource reappears, same type, on a random free cell.
    """

    kind = EnvKind.PLANT

    def __init__(self, grid_size=8, horizon=200, requirements=REQUIREMENTS, type_counts=TYPE_COUNTS):
        self.grid_size = grid_size
        self.horizon = horizon
        self.requirements = np.array(requirements, dtype=float)
        self.n_agents, self.n_types = self.requirements.shape
        self.resource_types = np.repeat(np.arange(len(type_counts)), type_counts)
        self.K = len(self.resource_types)
        self.local_feature_dim = 2 + 3 * self.n_types + 3 + 2

    def _free_cells(self, occupied, rng, count):
        free = [(x, y) for x in range(self.grid_size) for y in range(self.grid_size) if (x, y) not in occupied]
        picks = rng.choice(len(free), size=count, replace=False)
        return [free[i] for i in picks]

    def reset(self, seed):
        rng = np.random.default_rng(seed)
        cells = self._free_cells(set(), rng, self.n_agents + self.K)
        stop = self.n_agents

        return PlantState(
            rng=rng,
            positions=cells[:stop],
            resource_cells=cells[stop:],
            inventory=np.zeros((self.n_agents, self.n_types)),
            targets=np.full(self.n_agents, -1),
        )

    def deficit(self, state, agent):
        return np.maximum(self.requirements[agent] - state.inventory[agent], 0.0)

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

            needed = self.deficit(state, agent) > 0
            agent_actions = [ActionSpec(np.zeros(self.K), is_null=True, kind="stay")]
            for k in range(self.K):
                if not reserved[k] and needed[self.resource_types[k]]:
                    agent_actions.append(ActionSpec(one_hot(k, self.K), kind="claim", target=k))
            actions.append(agent_actions)

        return actions

    def _manhattan(self, a, b):
        return abs(a[0] - b[0]) + abs(a[1] - b[1])

    def _local_features(self, state, agent, action, tracker):
        scale = self.grid_size - 1
        position = state.positions[agent]
        target = action.target if action.kind == "claim" else state.targets[agent]

        claimed = np.zeros(self.n_types)
        offset = np.zeros(3)
        if target >= 0:
            cell = state.resource_cells[target]
            claimed[self.resource_types[target]] = 1.0
            dx = cell[0] - position[0]
            dy = cell[1] - position[1]
            offset = np.array([dx / scale, dy / scale, (abs(dx) + abs(dy)) / (2 * scale)])

        reserved = self.reserved(state)
        nearest = np.ones(self.n_types)
        for k, cell in enumerate(state.resource_cells):
            if not reserved[k]:
                kind = self.resource_types[k]
                nearest[kind] = min(nearest[kind], self._manhattan(position, cell) / (2 * scale))

        requirement_scale = np.maximum(self.requirements[agent], 1.0)
        return np.concatenate(
            [
                [position[0] / scale, position[1] / scale],
                self.deficit(state, agent) / requirement_scale,
                claimed,
                offset,
                [float(target >= 0), self.time_remaining(state)],
                nearest,
            ]
        )

    def _next_cell(self, position, goal):
        x, y = position
        if x != goal[0]:
            return (x + int(np.sign(goal[0] - x)), y)
        if y != goal[1]:
            return (x, y + int(np.sign(goal[1] - y)))

        return position

    def _apply(self, state, chosen, training):
        for agent, action in enumerate(chosen):
            if action.kind == "claim":
                state.targets[agent] = action.target

        wanted = []
        for agent, position in enumerate(state.positions):
            target = state.targets[agent]
            goal = state.resource_cells[target] if target >= 0 else position
            wanted.append(self._next_cell(position, goal))
        state.positions = resolve_grid_moves(state.positions, wanted)

        built = np.zeros(self.n_agents)
        for agent, position in enumerate(state.positions):
            target = state.targets[agent]
            if target < 0 or position != state.resource_cells[target]:
                continue

            state.inventory[agent, self.resource_types[target]] += 1.0
            state.targets[agent] = -1
            occupied = set(state.positions) | set(state.resource_cells)
            state.resource_cells[target] = self._free_cells(occupied, state.rng, 1)[0]

            if np.all(state.inventory[agent] >= self.requirements[agent]):
                state.inventory[agent] -= self.requirements[agent]
                built[agent] = 1.0

        return built, built.copy()
