"""Fairness functions F(Z), per-step fairness deltas, per-agent reward decompositions and the payoff tracker.

The payoff vector Z holds each agent's accumulated (Additive mode) or rate-based (Rate mode) wealth, and
every fairness function maps it to a single real:
    - Variance: -var(Z), population variance (divide by n).
    - AlphaFair: sum z_i^(1 - alpha) / (1 - alpha), or sum log z_i at alpha = 1.
    - GGF: sum w_i * z_i over Z sorted ascending, for positive, strictly decreasing weights w.
    - Maximin: min(Z).

A joint allocation moves Z to Z'; the resulting change F(Z') - F(Z) is handed back to the agents as a per-
agent fairness reward r_f whose entries sum to that change.
"""
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from decaf.exceptions import FairnessDomainError, InvalidFairnessSpecError

ALPHA_FAIR_FLOOR = 1e-3


class FairnessKind(Enum):
    VARIANCE = "variance"
    ALPHA_FAIR = "alphafair"
    GGF = "ggf"
    MAXIMIN = "maximin"

    @classmethod
    def parse(cls, value):
        """Accepts a `FairnessKind` or any of its spellings ("alpha_fair", "Alpha-Fair", "GGF", ...)."""
        if isinstance(value, cls):
            return value

        key = str(value).lower().replace("_", "").replace("-", "")
        for kind in cls:
            if kind.value == key:
                return kind

        raise InvalidFairnessSpecError(f"Unknown fairness kind: {value!r}.")


class PayoffMode(Enum):
    ADDITIVE = "additive"
    RATE = "rate"


def canonical_ggf_weights(n):
    """Decreasing negative powers of two: [1, 1/2, 1/4, ..., 2^-(n-1)]."""
    return np.power(2.0, -np.arange(n, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class FairnessSpec:
    """Which fairness function to use, with its parameters.

    Arguments:
        :kind: FairnessKind/String - The fairness function.
        :alpha: Float - AlphaFair's alpha, alpha = 1 takes the logarithmic branch.
        :ggf_weights: Sequence/None - GGF weights (positive, strictly decreasing).  None means the canonical
        powers of two, sized to whatever payoff vector comes along.
    """

    kind: FairnessKind = FairnessKind.VARIANCE
    alpha: float = 1.0
    ggf_weights: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "kind", FairnessKind.parse(self.kind))
        object.__setattr__(self, "alpha", float(self.alpha))

        if self.ggf_weights is not None:
            weights = np.array(self.ggf_weights, dtype=np.float64)
            if weights.ndim != 1 or np.any(weights <= 0) or np.any(np.diff(weights) >= 0):
                raise InvalidFairnessSpecError("GGF weights must be positive and strictly decreasing.")

            weights.setflags(write=False)
            object.__setattr__(self, "ggf_weights", weights)

    def weights(self, n):
        if self.ggf_weights is None:
            return canonical_ggf_weights(n)
        if len(self.ggf_weights) != n:
            raise InvalidFairnessSpecError(f"Expected {n} GGF weights, got {len(self.ggf_weights)}.")

        return self.ggf_weights


def _as_payoffs(z):
    return np.asarray(z, dtype=np.float64)


def _check_pair(z, z_next):
    z = _as_payoffs(z)
    z_next = _as_payoffs(z_next)
    if z.shape != z_next.shape:
        raise InvalidFairnessSpecError(f"Payoff vectors differ in length: {len(z)} vs {len(z_next)}.")

    return z, z_next


def fairness_value(spec, z):
    """Evaluates the fairness function of `spec` on the payoff vector `z`."""
    z = _as_payoffs(z)
    kind = spec.kind

    if kind is FairnessKind.VARIANCE:
        return -float(np.var(z))
    if kind is FairnessKind.ALPHA_FAIR:
        if np.any(z <= 0):
            raise FairnessDomainError("AlphaFair is only defined for strictly positive payoffs.")
        if spec.alpha == 1.0:
            return float(np.sum(np.log(z)))

        exponent = 1.0 - spec.alpha
        return float(np.sum(np.power(z, exponent)) / exponent)
    if kind is FairnessKind.GGF:
        return float(np.dot(spec.weights(len(z)), np.sort(z)))

    return float(np.min(z))


def fairness_delta(spec, z, z_next):
    """The one-step fairness change F(Z') - F(Z) caused by an allocation."""
    z, z_next = _check_pair(z, z_next)
    return fairness_value(spec, z_next) - fairness_value(spec, z)


def _maximin_decomposition(z, z_next):
    n = len(z)
    gain = float(np.min(z_next) - np.min(z))
    change = z_next - z

    shares = np.full(n, gain / n)
    shares += np.where(z == np.min(z), change, 0.0)
    shares += np.where(z_next == np.min(z_next), change, 0.0)

    denominator = float(np.sum(shares))
    if denominator == 0.0:
        return np.zeros(n)

    return shares / denominator * gain


def decompose_reward(spec, z, z_next):
    """Splits the one-step fairness change into a per-agent fairness reward vector r_f.

    Variance gets its exact per-agent split, (1/n) (z_i - mean(Z))^2 - (1/n) (z'_i - mean(Z'))^2.  AlphaFair
    and GGF hand every agent an equal share of the change.  Maximin gives everyone the same base share of
    the change in the minimum, adds each agent's own change if it sat at the minimum before and/or after,
    and renormalizes so the shares add up to the change in the minimum (all zeros when the shares themse-
    lves add up to zero).
    """
    z, z_next = _check_pair(z, z_next)
    n = len(z)
    kind = spec.kind

    if kind is FairnessKind.VARIANCE:
        before = np.square(z - np.mean(z))
        after = np.square(z_next - np.mean(z_next))
        return (before - after) / n
    if kind is FairnessKind.MAXIMIN:
        return _maximin_decomposition(z, z_next)

    return np.full(n, fairness_delta(spec, z, z_next) / n)


class PayoffTracker:
    """The accumulated payoff vector Z of one episode, with past discounting.

    Additive mode:
        z_i <- gamma_p * z_i + delta_i
    Rate mode (z_i is a resource rate res_i / t_i, both parts discounted):
        res_i <- gamma_p * res_i + delta_i
        t_i   <- gamma_p * t_i + 1
        z_i   <- res_i / t_i

    A tracker belongs to exactly one running episode; use `copy()` to hand a snapshot to anyone else.
    """

    def __init__(self, mode, z, res, t, gamma_p=1.0, warm_w=0.0):
        if not 0.0 < gamma_p <= 1.0:
            raise InvalidFairnessSpecError(f"Past discount must lie in (0, 1], got {gamma_p!r}.")

        self.mode = PayoffMode(mode)
        self.z = np.array(z, dtype=np.float64)
        self.res = np.array(res, dtype=np.float64)
        self.t = np.array(t, dtype=np.float64)
        self.gamma_p = float(gamma_p)
        self.warm_w = float(warm_w)

    @property
    def n(self):
        return len(self.z)

    @property
    def mean(self):
        return float(np.mean(self.z)) if self.n else 0.0

    def copy(self):
        return PayoffTracker(self.mode, self.z, self.res, self.t, gamma_p=self.gamma_p, warm_w=self.warm_w)

    def update(self, payoff_delta):
        """Folds one step's payoff increments into Z (mutates and returns the tracker)."""
        delta = np.asarray(payoff_delta, dtype=np.float64)
        if delta.shape != self.z.shape:
            raise InvalidFairnessSpecError(f"Expected {self.n} payoff increments, got {len(delta)}.")

        if self.mode is PayoffMode.ADDITIVE:
            self.z = self.gamma_p * self.z + delta
            self.res = self.z.copy()
        else:
            self.res = self.gamma_p * self.res + delta
            self.t = self.gamma_p * self.t + 1.0
            self.z = _rates(self.res, self.t)

        return self

    def preview(self, agent, delta):
        """Returns agent's z_i as if only its own increment `delta` were applied this step."""
        if self.mode is PayoffMode.ADDITIVE:
            return self.gamma_p * self.z[agent] + delta

        res = self.gamma_p * self.res[agent] + delta
        t = self.gamma_p * self.t[agent] + 1.0
        return res / t

    def fairness_features(self, agent):
        """The communicated fairness features of an agent: its relative advantage z_i - mean(Z), and mean(Z)."""
        mean = self.mean
        return np.array([self.z[agent] - mean, mean])


def _rates(res, t):
    safe_t = np.where(t > 0, t, 1.0)
    return np.where(t > 0, res / safe_t, 0.0)


def init_tracker(mode, n, warm_w=0.0, gamma_p=1.0, rng=None):
    """Creates the payoff tracker of a fresh episode, warm-started around `warm_w`.

    Each agent's initial pseudo-payoff is drawn uniformly from [w - w/8, w + w/8] (a window of width w/4
    centered on w).  In Rate mode the draws become numerators, and every denominator is set to the total of
    all draws, so the initial rates add up to one and sit near 1/n.

    Arguments:
        :mode: PayoffMode/String - "additive" or "rate".
        :n: Integer - Number of agents.
        :warm_w: Float - Warm start center (0 disables warm starts).
        :gamma_p: Float - Past discount in (0, 1].
        :rng: numpy Generator/None - Source of the warm start draws.
    """
    if warm_w < 0:
        raise InvalidFairnessSpecError(f"Warm start must be >= 0, got {warm_w!r}.")

    rng = rng if rng is not None else np.random.default_rng()
    spread = warm_w / 8.0
    drawn = rng.uniform(warm_w - spread, warm_w + spread, size=n)

    mode = PayoffMode(mode)
    if mode is PayoffMode.ADDITIVE:
        return PayoffTracker(mode, drawn, drawn, np.zeros(n), gamma_p=gamma_p, warm_w=warm_w)

    t = np.full(n, float(np.sum(drawn)))
    return PayoffTracker(mode, _rates(drawn, t), drawn, t, gamma_p=gamma_p, warm_w=warm_w)


def training_payoffs(spec, z):
    """Payoffs as the learner feeds them to the fairness function.

    AlphaFair has no warm start, so untouched agents sit at z_i = 0 where it's undefined; the learner
    floors payoffs at `ALPHA_FAIR_FLOOR` for its rewards and validation objective.  Every other kind gets
    `z` back unchanged.
    """
    z = _as_payoffs(z)
    if spec.kind is FairnessKind.ALPHA_FAIR:
        return np.maximum(z, ALPHA_FAIR_FLOOR)

    return z


def tracker_update(tracker, payoff_delta):
    return tracker.update(payoff_delta)


def evaluate_metrics(z):
    """Reports every fairness metric of a final payoff vector under the canonical specs.

    AlphaFair uses alpha = 1 and comes back as NaN when some payoff isn't strictly positive; GGF uses the
    canonical powers-of-two weights; variance is reported as the fairness value -var(Z) (so 0 is best).
    """
    z = _as_payoffs(z)
    try:
        alpha_fair = fairness_value(FairnessSpec(FairnessKind.ALPHA_FAIR), z)
    except FairnessDomainError:
        alpha_fair = math.nan

    return {
        "alpha_fair": alpha_fair,
        "ggf": fairness_value(FairnessSpec(FairnessKind.GGF), z),
        "maximin": fairness_value(FairnessSpec(FairnessKind.MAXIMIN), z),
        # Adding 0.0 turns -0.0 into 0.0.
        "variance": fairness_value(FairnessSpec(FairnessKind.VARIANCE), z) + 0.0,
    }


# Warm start w and past discount gamma_p per (fairness kind, environment).
_VARIANCE_LIKE = {
    "matthew": (5.0, 0.995),
    "plant": (1.0, 0.995),
    "job": (3.0, 0.995),
    "joballoc": (3.0, 0.995),
    "biaseddm": (2.0, 0.999),
}


def default_warm_start(kind, env_kind):
    """Returns the default (warm_w, gamma_p) pair for a fairness kind on an environment."""
    kind = FairnessKind.parse(kind)
    if kind is FairnessKind.ALPHA_FAIR:
        return 0.0, 1.0
    if kind is FairnessKind.GGF:
        return 0.1, 1.0

    return _VARIANCE_LIKE[str(env_kind).lower()]
