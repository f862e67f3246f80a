"""Centralized allocation: the integer program that picks exactly one action per agent.

    max   sum_i sum_a x_i(a) Q(o_i, a)
    s.t.  sum_a x_i(a) = 1              for every agent i
          sum_i c(A_i)_k <= R_k         for every resource type k

`solve()` is an exact depth-first branch-and-bound, `solve_exhaustive()` enumerates every joint action and
is there as a test oracle.  Both break ties the same way: among all optimal allocations, the lexicographi-
cally smallest one (agent-major, candidate-index-minor) is returned.  Objectives are always summed in agent
order starting from 0.0, so both solvers report bit-identical objectives for the same allocation.
"""
import math
from dataclasses import dataclass

import numpy as np

from decaf.exceptions import InstanceTooLargeError, InvalidProblemError
from decaf.types import CandidateSet, JointAllocation, ResourceCapacities, validate_candidate_set

EXHAUSTIVE_LIMIT = 10_000_000


@dataclass(frozen=True, eq=False)
class AllocationProblem:
    """Value-annotated candidate sets plus capacities.

    `values[i][a]` is the coefficient Q(o_i, a) of agent i's candidate a.
    """

    values: tuple
    candidates: CandidateSet
    capacities: ResourceCapacities

    def __post_init__(self):
        values = tuple(tuple(float(v) for v in row) for row in self.values)
        object.__setattr__(self, "values", values)

    @property
    def n(self):
        return len(self.values)

    def validate(self):
        """Checks the candidate invariants and that `values` lines up with the candidates exactly."""
        validate_candidate_set(self.candidates, self.capacities)

        if tuple(len(row) for row in self.values) != self.candidates.sizes:
            raise InvalidProblemError("values shape doesn't match the candidate set")
        if not all(math.isfinite(v) for row in self.values for v in row):
            raise InvalidProblemError("values must be finite")


@dataclass(frozen=True)
class AllocationResult:
    allocation: JointAllocation
    objective: float


def _sparse_loads(candidates):
    """Keeps only the non-zero consumption entries of every candidate, as (k, amount) pairs."""
    loads = []
    for actions in candidates.per_agent:
        agent_loads = []
        for action in actions:
            nonzero = np.flatnonzero(action.consumption)
            agent_loads.append(tuple((int(k), float(action.consumption[k])) for k in nonzero))
        loads.append(agent_loads)

    return loads


class _CapacityLedger:
    """Tracks the running resource usage of a partial allocation."""

    def __init__(self, capacities):
        self.capacities = [float(c) for c in capacities.capacities]
        self.usage = [0.0] * len(self.capacities)

    def fits(self, load):
        for k, amount in load:
            if self.usage[k] + amount > self.capacities[k]:
                return False

        return True

    def take(self, load):
        """Books the load and returns what's needed to hand it back with `release()`."""
        saved = [(k, self.usage[k]) for k, _ in load]
        for k, amount in load:
            self.usage[k] += amount

        return saved

    def release(self, saved):
        for k, usage in saved:
            self.usage[k] = usage


class _BranchAndBound:
    """Depth-first branch-and-bound over agents in index order.

    Each agent's candidates are tried in descending value.  The bound is the partial objective plus every
    remaining agent's best value (capacities ignored), folded in the same order as the objective itself, so
    it never undershoots an objective that is actually reachable.  Nodes are pruned when the bound is below
    the incumbent, or equal to it while the partial allocation is already lexicographically past it.
    """

    def __init__(self, problem):
        self.values = problem.values
        self.n = problem.n
        self.loads = _sparse_loads(problem.candidates)
        self.ledger = _CapacityLedger(problem.capacities)
        self.orders = [sorted(range(len(row)), key=lambda a, row=row: (-row[a], a)) for row in self.values]
        self.row_max = [max(row) for row in self.values]

        self.chosen = []
        self.best_objective = None
        self.best_chosen = None

    def run(self):
        self._branch(0, 0.0)
        return AllocationResult(allocation=JointAllocation(self.best_chosen), objective=self.best_objective)

    def _bound(self, depth, partial):
        bound = partial
        for agent in range(depth, self.n):
            bound = bound + self.row_max[agent]

        return bound

    def _pruned(self, depth, partial):
        if self.best_objective is None:
            return False

        bound = self._bound(depth, partial)
        if bound < self.best_objective:
            return True
        if bound == self.best_objective:
            prefix = self.best_chosen[:depth]
            return tuple(self.chosen) > prefix

        return False

    def _branch(self, depth, partial):
        if self._pruned(depth, partial):
            return

        if depth == self.n:
            # Anything reaching here beats the incumbent or ties it with a smaller allocation.
            self.best_objective = partial
            self.best_chosen = tuple(self.chosen)
            return

        row = self.values[depth]
        for action in self.orders[depth]:
            load = self.loads[depth][action]
            if not self.ledger.fits(load):
                continue

            saved = self.ledger.take(load)
            self.chosen.append(action)
            self._branch(depth + 1, partial + row[action])
            self.chosen.pop()
            self.ledger.release(saved)


def solve(problem, validate=True):
    """Solves the allocation integer program exactly.

    The null-action invariant guarantees a feasible point, so this never fails on a valid problem.

    Arguments:
        :problem: AllocationProblem - Values, candidates and capacities.
        :validate: Boolean - Set False to skip validation for problems built from already validated sets.
    """
    if validate:
        problem.validate()

    return _BranchAndBound(problem).run()


def joint_action_count(problem):
    return math.prod(problem.candidates.sizes)


def enumerate_feasible(problem):
    """Yields every feasible joint action as (chosen, objective) pairs, in lexicographic order.

    Partial joint actions that already overrun a capacity are cut early, which doesn't change the set of
    joint actions produced (consumption is never negative).
    """
    loads = _sparse_loads(problem.candidates)
    ledger = _CapacityLedger(problem.capacities)
    chosen = []

    def walk(depth, partial):
        if depth == problem.n:
            yield tuple(chosen), partial
            return

        row = problem.values[depth]
        for action in range(len(row)):
            load = loads[depth][action]
            if not ledger.fits(load):
                continue

            saved = ledger.take(load)
            chosen.append(action)
            yield from walk(depth + 1, partial + row[action])
            chosen.pop()
            ledger.release(saved)

    yield from walk(0, 0.0)


def solve_exhaustive(problem, limit=EXHAUSTIVE_LIMIT):
    """Test oracle for `solve()`: enumerates every joint action and keeps the best feasible one.

    Arguments:
        :problem: AllocationProblem - Values, candidates and capacities.
        :limit: Integer - Maximum number of joint actions the oracle agrees to look at.
    """
    problem.validate()
    size = joint_action_count(problem)
    if size > limit:
        raise InstanceTooLargeError(size, limit)

    best_objective = None
    best_chosen = None
    for chosen, objective in enumerate_feasible(problem):
        # Strict improvement only, so the first (lexicographically smallest) optimum is kept.
        if best_objective is None or objective > best_objective:
            best_objective = objective
            best_chosen = chosen

    return AllocationResult(allocation=JointAllocation(best_chosen), objective=best_objective)


def verify_feasible(problem, allocation):
    """Returns True iff the allocation picks one existing action per agent and respects every capacity.

    Malformed allocations (wrong length, out-of-range ids) are simply reported as infeasible.
    """
    chosen = allocation.chosen
    sizes = problem.candidates.sizes
    if len(chosen) != len(sizes):
        return False

    capacities = problem.capacities.capacities
    usage = np.zeros(len(capacities))
    for agent, action in enumerate(chosen):
        if not 0 <= action < sizes[agent]:
            return False

        consumption = problem.candidates.per_agent[agent][action].consumption
        if len(consumption) != len(capacities):
            return False
        usage = usage + consumption

    return bool(np.all(usage <= capacities))


def allocation_objective(problem, allocation):
    """Sums the values of the chosen actions in agent order (the same fold both solvers use)."""
    total = 0.0
    for row, action in zip(problem.values, allocation.chosen):
        total = total + row[action]

    return total


def random_values(candidates, rng):
    """Draws i.i.d. uniform [0, 1) values for every candidate (used for exploration)."""
    return candidates.split(rng.random(sum(candidates.sizes)))
