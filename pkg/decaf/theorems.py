"""Property harness for the trade-off guarantees of allocating on U + eta * F with perfect estimates.

For a one-step instance (true per-action utility U and fairness F tables) and the exact allocator:
    - the total F of the selected allocation never decreases as eta grows,
    - its total U never increases as eta grows,
    - at eta = 0 the selected allocation has the maximal total U,
    - once eta exceeds (U_max - U_fair) / (F_max - F_next), it has the maximal total F (and, among those,
      the maximal U).

U and F are small integers and every eta is dyadic, so U + eta * F and its sums are exact in floating
point and every comparison below is exact.
"""
import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from decaf.allocator import AllocationProblem, enumerate_feasible, solve
from decaf.types import CandidateAction, CandidateSet, ResourceCapacities

logger = logging.getLogger(__name__)

# Stands in for eta -> infinity.
ETA_INFINITY = 1_048_576.0
DEFAULT_ETAS = (
    0.0,
    0.0625,
    0.125,
    0.25,
    0.375,
    0.5,
    0.75,
    1.0,
    1.25,
    1.5,
    2.0,
    3.0,
    4.0,
    6.0,
    8.0,
    16.0,
    32.0,
    64.0,
    256.0,
)


@dataclass(frozen=True, eq=False)
class TradeoffInstance:
    """One synthetic allocation step with true per-action U and F tables (integers)."""

    utility: tuple
    fairness: tuple
    candidates: CandidateSet
    capacities: ResourceCapacities

    def problem(self, eta):
        values = [[u + eta * f for u, f in zip(us, fs)] for us, fs in zip(self.utility, self.fairness)]
        return AllocationProblem(values, self.candidates, self.capacities)

    def totals(self, chosen):
        u = sum(self.utility[i][a] for i, a in enumerate(chosen))
        f = sum(self.fairness[i][a] for i, a in enumerate(chosen))
        return u, f

    def dump(self):
        return {
            "utility": [list(row) for row in self.utility],
            "fairness": [list(row) for row in self.fairness],
            "consumption": [[a.consumption.tolist() for a in actions] for actions in self.candidates.per_agent],
            "capacities": self.capacities.capacities.tolist(),
        }


def make_instance(utility, fairness, consumption, capacities):
    """Builds an instance from plain tables; candidate 0 of every agent must be the zero-consumption null."""
    per_agent = []
    for agent_consumption in consumption:
        actions = []
        for index, cons in enumerate(agent_consumption):
            actions.append(CandidateAction(index, np.zeros(1), cons, is_null=index == 0))
        per_agent.append(actions)

    return TradeoffInstance(
        utility=tuple(tuple(int(v) for v in row) for row in utility),
        fairness=tuple(tuple(int(v) for v in row) for row in fairness),
        candidates=CandidateSet(per_agent),
        capacities=ResourceCapacities(capacities),
    )


def switch_example():
    """One agent choosing between A (U=10, F=0) and B (U=6, F=3): A wins until eta = 4/3, B after."""
    return make_instance(
        utility=[[10, 6]],
        fairness=[[0, 3]],
        consumption=[[[0.0], [1.0]]],
        capacities=[1.0],
    )


def random_instance(rng, max_agents=5, max_candidates=4, max_resources=2, value_range=5):
    n = int(rng.integers(1, max_agents + 1))
    K = int(rng.integers(1, max_resources + 1))

    utility = []
    fairness = []
    consumption = []
    for _ in range(n):
        m = int(rng.integers(1, max_candidates + 1))
        utility.append(rng.integers(-value_range, value_range + 1, size=m))
        fairness.append(rng.integers(-value_range, value_range + 1, size=m))
        cons = rng.integers(0, 2, size=(m, K)).astype(float)
        cons[0] = 0.0
        consumption.append(cons)

    capacities = rng.integers(0, n + 1, size=K).astype(float)
    return make_instance(utility, fairness, consumption, capacities)


def eta_upper_bound(instance):
    """Smallest eta beyond which the fairest allocation is guaranteed to win, as an exact Fraction.

    Returns None when every feasible allocation has the same total F (any eta will do).
    """
    totals = [instance.totals(chosen) for chosen, _ in enumerate_feasible(instance.problem(0.0))]
    u_max = max(u for u, _ in totals)
    f_max = max(f for _, f in totals)
    u_fair = max(u for u, f in totals if f == f_max)
    lower = [f for _, f in totals if f < f_max]
    if not lower:
        return None

    return Fraction(max(0, u_max - u_fair), f_max - max(lower))


@dataclass
class TheoremReport:
    instances: int = 0
    etas: tuple = ()
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations


def check_instance(instance, etas=DEFAULT_ETAS):
    """Solves the instance along the eta grid (plus eta -> infinity) and lists every violated property."""
    etas = sorted(set(etas) | {ETA_INFINITY})
    totals = [instance.totals(chosen) for chosen, _ in enumerate_feasible(instance.problem(0.0))]
    u_max = max(u for u, _ in totals)
    f_max = max(f for _, f in totals)
    u_fair = max(u for u, f in totals if f == f_max)
    bound = eta_upper_bound(instance)

    violations = []
    previous = None
    for eta in etas:
        chosen = solve(instance.problem(eta)).allocation.chosen
        u, f = instance.totals(chosen)

        if previous is not None:
            if f < previous[1]:
                violations.append({"property": "fairness non-decreasing in eta", "eta": eta})
            if u > previous[0]:
                violations.append({"property": "utility non-increasing in eta", "eta": eta})
        if eta == 0.0 and u != u_max:
            violations.append({"property": "utilitarian at eta = 0", "eta": eta})
        if bound is None or Fraction(eta) > bound:
            if f != f_max or u != u_fair:
                violations.append({"property": "fairest beyond the eta bound", "eta": eta})

        previous = (u, f)

    for violation in violations:
        violation["instance"] = instance.dump()
    return violations


def selections(instance, etas):
    """The allocation picked at every eta, in order."""
    return [solve(instance.problem(eta)).allocation.chosen for eta in etas]


def switch_count(instance, etas):
    picks = selections(instance, sorted(etas))
    return sum(1 for before, after in zip(picks, picks[1:]) if before != after)


def run_theorem_check(n_instances=500, seed=0, etas=DEFAULT_ETAS):
    """Checks every property on `n_instances` random instances.

    Returns:
        TheoremReport - With one entry (and a full instance dump) per violation.
    """
    rng = np.random.default_rng(seed)
    report = TheoremReport(instances=n_instances, etas=tuple(sorted(set(etas) | {ETA_INFINITY})))
    for index in range(n_instances):
        for violation in check_instance(random_instance(rng), etas):
            violation["index"] = index
            report.violations.append(violation)
            logger.warning("Instance %d violates %s: %s", index, violation["property"], json.dumps(violation))

    return report
