"""Double Q-learning over the DECA loop, in three flavors:
    - JO: one estimator Q learns the blended reward (1 - beta) r_u + beta r_f, so beta is fixed at training time.
    - SO: separate estimators U (on r_u) and F (on r_f), blended as (1 - beta) U + beta F when scoring.
    - FO: a frozen, pre-trained utility estimator U* plus a learned F, blended the same way.

Every step, each agent's candidates are scored, the allocator picks the joint action (or, with probability
epsilon, picks it on random values), and the transition goes into a replay buffer.  Updates sample from the
buffer, pick every successor joint action with the online nets (through the allocator again) and evaluate it
with the target nets.
"""
import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from tqdm import tqdm

from decaf.allocator import AllocationProblem, random_values, solve
from decaf.exceptions import BetaMismatchError, ConfigError, MissingNetworkError
from decaf.fairness import (
    FairnessSpec,
    decompose_reward,
    default_warm_start,
    evaluate_metrics,
    fairness_value,
    init_tracker,
    training_payoffs,
)
from decaf.types import Experience, as_beta
from decaf.valuenet import DEFAULT_HIDDEN_DIMS, DEFAULT_LR, NetConfig, Role, ValueNet, make_target, sync_target

logger = logging.getLogger(__name__)

SEED_LIMIT = 2_147_483_647
TRAIN_PHASE = 0
VALIDATION_PHASE = 1
EVALUATION_PHASE = 2


class LearnerMode(Enum):
    JO = "jo"
    SO = "so"
    FO = "fo"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value

        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigError(f"Unknown learner mode: {value!r}.") from None


@dataclass(frozen=True)
class LearnerConfig:
    """Everything a training run needs besides the environment.

    `warm_w`/`gamma_p` left as None take the per-(fairness, environment) defaults.  The exploration rate
    decays linearly from `epsilon_start` to `epsilon_end` over the first half of the episodes.
    """

    mode: LearnerMode = LearnerMode.JO
    beta: float = 0.0
    gamma: float = 0.95
    lr: float = DEFAULT_LR
    buffer_capacity: int = 250_000
    batch_size: int = 32
    learn_every_T: int = 4
    target_sync_tau: int = 10
    validate_every_k: int = 50
    n_episodes: int = 1000
    n_eval: int = 50
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    hidden_dims: tuple = DEFAULT_HIDDEN_DIMS
    fairness: FairnessSpec = field(default_factory=FairnessSpec)
    warm_w: float = None
    gamma_p: float = None
    frozen_utility_checkpoint: str = None

    def __post_init__(self):
        object.__setattr__(self, "mode", LearnerMode.parse(self.mode))
        object.__setattr__(self, "beta", as_beta(self.beta))
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))

        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in [0, 1], got {self.gamma!r}.")
        for name in ("buffer_capacity", "batch_size", "learn_every_T", "target_sync_tau", "validate_every_k"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1, got {getattr(self, name)!r}.")
        if self.n_episodes < 0 or self.n_eval < 0:
            raise ConfigError("Episode counts can't be negative.")

    def epsilon(self, episode):
        """Exploration rate of a training episode (0-based)."""
        horizon = self.n_episodes / 2.0
        if horizon <= 0:
            return self.epsilon_end

        progress = min(1.0, episode / horizon)
        return self.epsilon_start + (self.epsilon_end - self.epsilon_start) * progress

    def warm_start(self, env):
        """The (warm_w, gamma_p) pair used on `env`, defaults filled in."""
        default_w, default_gamma_p = default_warm_start(self.fairness.kind, env.kind.value)
        warm_w = default_w if self.warm_w is None else self.warm_w
        gamma_p = default_gamma_p if self.gamma_p is None else self.gamma_p
        return warm_w, gamma_p


class ReplayBuffer:
    """Fixed-capacity ring of experiences; the oldest one is evicted first."""

    def __init__(self, capacity):
        self.capacity = capacity
        self._items = []
        self._cursor = 0

    def __len__(self):
        return len(self._items)

    def push(self, experience):
        if len(self._items) < self.capacity:
            self._items.append(experience)
            return

        self._items[self._cursor] = experience
        self._cursor = (self._cursor + 1) % self.capacity

    def items(self):
        """Stored experiences, oldest first."""
        cursor = self._cursor
        return self._items[cursor:] + self._items[:cursor]

    def sample(self, batch_size, rng):
        """Draws `batch_size` experiences uniformly, with replacement."""
        picks = rng.integers(len(self._items), size=batch_size)
        return [self._items[i] for i in picks]


@dataclass(eq=False)
class Estimators:
    """The value networks of one learner.

    JO uses `q`; SO uses `u` and `f`; FO uses `f` and the frozen `frozen_u`.  Every trained net has a
    target twin.  `beta_train` is the trade-off weight JO was trained at.
    """

    mode: LearnerMode
    beta_train: float = 0.0
    q: ValueNet = None
    q_target: ValueNet = None
    u: ValueNet = None
    u_target: ValueNet = None
    f: ValueNet = None
    f_target: ValueNet = None
    frozen_u: ValueNet = None

    @classmethod
    def create(cls, mode, input_dim, seed=None, hidden_dims=DEFAULT_HIDDEN_DIMS, lr=DEFAULT_LR, beta=0, frozen_u=None):
        """Fresh, seed-initialized networks for a learning mode.

        Arguments:
            :mode: LearnerMode/String - JO, SO or FO.
            :input_dim: Integer - Candidate feature length.
            :seed: Integer/None - Initialization seed.
            :frozen_u: ValueNet/None - The pre-trained utility estimator (FO only, required there).
        """
        mode = LearnerMode.parse(mode)
        config = NetConfig(input_dim, hidden_dims)
        seeds = np.random.default_rng(seed).integers(SEED_LIMIT, size=2)

        estimators = cls(mode=mode, beta_train=as_beta(beta), frozen_u=frozen_u)
        if mode is LearnerMode.JO:
            estimators.q = ValueNet(config, role=Role.Q, seed=int(seeds[0]), lr=lr)
        if mode is LearnerMode.SO:
            estimators.u = ValueNet(config, role=Role.U, seed=int(seeds[0]), lr=lr)
        if mode is not LearnerMode.JO:
            estimators.f = ValueNet(config, role=Role.F, seed=int(seeds[1]), lr=lr)

        estimators.refresh_targets()
        estimators.check()
        return estimators

    def check(self):
        needed = {
            LearnerMode.JO: ("q",),
            LearnerMode.SO: ("u", "f"),
            LearnerMode.FO: ("f", "frozen_u"),
        }[self.mode]
        for name in needed:
            if getattr(self, name) is None:
                raise MissingNetworkError(f"{self.mode.value.upper()} needs the {name} network.")

    def refresh_targets(self):
        """(Re)creates target twins for every trained net."""
        for name in ("q", "u", "f"):
            net = getattr(self, name)
            setattr(self, f"{name}_target", None if net is None else make_target(net))

    def sync_targets(self):
        for name in ("q", "u", "f"):
            if getattr(self, name) is not None:
                sync_target(getattr(self, name), getattr(self, f"{name}_target"))

    def trained_nets(self):
        """The nets being learned, by role name."""
        return {name: getattr(self, name) for name in ("q", "u", "f") if getattr(self, name) is not None}

    def snapshot(self):
        return {name: [p.copy() for p in net.parameters()] for name, net in self.trained_nets().items()}

    def restore(self, snapshot):
        for name, params in snapshot.items():
            getattr(self, name).set_parameters(params)
        self.sync_targets()


def _blend(first, second, beta):
    return (1.0 - beta) * first + beta * second


def online_scores(estimators, X, beta):
    """Scores the rows of a feature matrix with the online nets of the learner's mode."""
    mode = estimators.mode
    if mode is LearnerMode.JO:
        if beta != estimators.beta_train:
            raise BetaMismatchError(estimators.beta_train, beta)
        return estimators.q.forward_batch(X)
    if mode is LearnerMode.SO:
        return _blend(estimators.u.forward_batch(X), estimators.f.forward_batch(X), beta)

    return _blend(estimators.frozen_u.forward_batch(X), estimators.f.forward_batch(X), beta)


def score_candidates(estimators, cs, beta):
    """Per-agent value lists for a candidate set.

    JO: Q(x).  SO: (1 - beta) U(x) + beta F(x).  FO: (1 - beta) U*(x) + beta F(x).
    """
    estimators.check()
    return cs.split(online_scores(estimators, cs.feature_matrix, as_beta(beta)))


def select_joint_action(estimators, cs, caps, beta, epsilon, rng, validate=True):
    """Epsilon-greedy joint action: with probability epsilon the allocator runs on uniform random values."""
    if rng.random() < epsilon:
        values = random_values(cs, rng)
    else:
        values = score_candidates(estimators, cs, beta)

    return solve(AllocationProblem(values, cs, caps), validate=validate).allocation


def successor_choices(estimators, batch, beta):
    """Picks the successor joint action A* of every non-terminal experience with the online nets.

    All successor candidates of the batch go through each net in one stacked forward pass.

    Returns:
        (ndarray, List[ndarray]) - The stacked successor features, and for every non-terminal experience
        (in batch order) the row of each agent's chosen successor action in that matrix.
    """
    live = [e for e in batch if not e.done]
    if not live:
        return None, []

    stacked = np.vstack([e.successor_candidates.feature_matrix for e in live])
    scores = online_scores(estimators, stacked, beta)

    rows = []
    start = 0
    for e in live:
        cs = e.successor_candidates
        stop = start + sum(cs.sizes)
        problem = AllocationProblem(cs.split(scores[start:stop]), cs, e.successor_capacities)
        chosen = np.array(solve(problem, validate=False).allocation.chosen)
        offsets = np.cumsum((0,) + cs.sizes[:-1])
        rows.append(start + offsets + chosen)
        start = stop

    return stacked, rows


def td_targets(batch, rewards, target_net, stacked, rows, gamma):
    """Per-agent TD targets r + gamma * target(o', A*), with no bootstrap term on terminal experiences.

    Arguments:
        :batch: List[Experience] - The sampled experiences.
        :rewards: List[ndarray] - The per-agent reward vector each experience trains this net on.
        :target_net: ValueNet - Evaluates the successor actions.
        :stacked: ndarray/None - Stacked successor features, from `successor_choices()`.
        :rows: List[ndarray] - Chosen successor rows, from `successor_choices()`.
    """
    bootstrap = np.zeros(0)
    if rows:
        bootstrap = target_net.forward_batch(stacked[np.concatenate(rows)])

    targets = []
    cursor = 0
    for e, reward in zip(batch, rewards):
        if e.done:
            targets.append(np.array(reward, dtype=np.float64))
            continue

        stop = cursor + len(reward)
        targets.append(reward + gamma * bootstrap[cursor:stop])
        cursor = stop

    return np.concatenate(targets)


def _chosen_features(batch):
    return np.vstack([e.chosen_features for e in batch])


def update_jo(estimators, buffer, config, rng):
    """One TD update of Q on the blended reward.  Returns the loss, or None on an empty buffer."""
    if not len(buffer):
        return None

    batch = buffer.sample(config.batch_size, rng)
    beta = estimators.beta_train
    stacked, rows = successor_choices(estimators, batch, beta)
    rewards = [_blend(e.rewards.utility, e.rewards.fair, beta) for e in batch]

    y = td_targets(batch, rewards, estimators.q_target, stacked, rows, config.gamma)
    return estimators.q.train_step(_chosen_features(batch), y)


def update_so(estimators, buffer, config, rng):
    """Independent TD updates of U (on r_u) and F (on r_f) toward one shared successor action.

    Returns:
        (Float, Float) - The U and F losses, or None on an empty buffer.
    """
    if not len(buffer):
        return None

    batch = buffer.sample(config.batch_size, rng)
    stacked, rows = successor_choices(estimators, batch, config.beta)
    X = _chosen_features(batch)

    y_u = td_targets(batch, [e.rewards.utility for e in batch], estimators.u_target, stacked, rows, config.gamma)
    y_f = td_targets(batch, [e.rewards.fair for e in batch], estimators.f_target, stacked, rows, config.gamma)
    return estimators.u.train_step(X, y_u), estimators.f.train_step(X, y_f)


def update_fo(estimators, buffer, config, rng):
    """Like `update_so()`, but only F learns; successor actions are scored with the frozen U*."""
    if estimators.frozen_u is None:
        raise MissingNetworkError("FO needs the frozen utility network.")
    if not len(buffer):
        return None

    batch = buffer.sample(config.batch_size, rng)
    stacked, rows = successor_choices(estimators, batch, config.beta)

    y_f = td_targets(batch, [e.rewards.fair for e in batch], estimators.f_target, stacked, rows, config.gamma)
    return estimators.f.train_step(_chosen_features(batch), y_f)


def update(estimators, buffer, config, rng):
    """Runs the update rule of the learner's mode and returns a single (mean) loss, or None."""
    if estimators.mode is LearnerMode.JO:
        return update_jo(estimators, buffer, config, rng)
    if estimators.mode is LearnerMode.FO:
        return update_fo(estimators, buffer, config, rng)

    losses = update_so(estimators, buffer, config, rng)
    return None if losses is None else sum(losses) / 2.0


@dataclass(eq=False)
class EpisodeStats:
    utility: float
    fairness: float
    z: np.ndarray
    losses: list
    steps: int

    @property
    def mean_loss(self):
        return float(np.mean(self.losses)) if self.losses else math.nan


def run_episode(estimators, env, config, epsilon, rng, seed=None, buffer=None, training=False, learn=False, beta=None):
    """Rolls one full episode through the DECA loop.

    Arguments:
        :estimators: Estimators - Scores the candidates.
        :env: BaseEnvironment - The environment, reset here with `seed`.
        :config: LearnerConfig - Fairness spec, warm start and update cadence.
        :epsilon: Float - Exploration rate.
        :rng: numpy Generator - Exploration, warm starts and replay sampling.
        :buffer: ReplayBuffer/None - Receives one experience per step when given.
        :training: Boolean - Passed on to `env.step()` (shaping rewards).
        :learn: Boolean - Run the mode's update every `learn_every_T` steps (needs `buffer`).
        :beta: Float/None - Scoring trade-off weight, defaults to the configured one.
    """
    beta = config.beta if beta is None else as_beta(beta)
    warm_w, gamma_p = config.warm_start(env)
    spec = config.fairness

    state = env.reset(seed)
    tracker = init_tracker(env.payoff_mode, env.n_agents, warm_w=warm_w, gamma_p=gamma_p, rng=rng)
    cs, caps = env.candidates(state, tracker)

    losses = []
    for step in range(env.horizon):
        allocation = select_joint_action(estimators, cs, caps, beta, epsilon, rng, validate=False)
        chosen_features = cs.chosen_features(allocation)

        z_before = training_payoffs(spec, tracker.z)
        outcome = env.step(state, allocation, training=training)
        tracker.update(outcome.rewards.payoff_delta)
        fair = decompose_reward(spec, z_before, training_payoffs(spec, tracker.z))
        rewards = outcome.rewards.with_fair(fair)

        next_cs, next_caps = (None, None) if outcome.done else env.candidates(state, tracker)
        if buffer is not None:
            buffer.push(Experience(chosen_features, rewards, next_cs, next_caps, done=outcome.done))
        if learn and buffer is not None and (step + 1) % config.learn_every_T == 0:
            loss = update(estimators, buffer, config, rng)
            if loss is not None:
                losses.append(loss)

        cs, caps = next_cs, next_caps

    return EpisodeStats(
        utility=state.utility_total,
        fairness=fairness_value(spec, training_payoffs(spec, tracker.z)),
        z=tracker.z.copy(),
        losses=losses,
        steps=state.t,
    )


def validation_objective(stats, beta):
    """(1 - beta) U_T + beta F(Z_T) of a greedy episode."""
    return _blend(stats.utility, stats.fairness, beta)


def selection_score(utility, variance, w_u=0.1, w_f=0.9):
    """Cross-beta model selection score w_u * U - w_f * var(Z), with var(Z) >= 0."""
    return w_u * utility - w_f * variance


def _episode_rng(seed, phase, episode):
    return np.random.default_rng([seed, phase, episode])


def evaluate_policy(estimators, env, config, beta_test=None, n_eval=None, seed=0, progress=False):
    """Greedy evaluation episodes, summarized as mean and standard deviation of every metric.

    SO and FO models can be evaluated at any beta_test; JO only at the beta it was trained at.

    Returns:
        Dict - utility_mean/std, variance_mean/std, alphafair_mean/std, ggf_mean/std, maximin_mean/std and
        fairness_mean (the trained fairness function), plus beta_test and n_eval.
    """
    beta_test = config.beta if beta_test is None else as_beta(beta_test)
    n_eval = config.n_eval if n_eval is None else n_eval
    if estimators.mode is LearnerMode.JO and beta_test != estimators.beta_train:
        raise BetaMismatchError(estimators.beta_train, beta_test)

    columns = {"utility": [], "variance": [], "alphafair": [], "ggf": [], "maximin": [], "fairness": []}
    for episode in tqdm(range(n_eval), desc="evaluating", disable=not progress, leave=False):
        rng = _episode_rng(seed, EVALUATION_PHASE, episode)
        stats = run_episode(estimators, env, config, 0.0, rng, seed=[seed, EVALUATION_PHASE, episode], beta=beta_test)
        metrics = evaluate_metrics(stats.z)
        columns["utility"].append(stats.utility)
        columns["variance"].append(metrics["variance"])
        columns["alphafair"].append(metrics["alpha_fair"])
        columns["ggf"].append(metrics["ggf"])
        columns["maximin"].append(metrics["maximin"])
        columns["fairness"].append(stats.fairness)

    summary = {"beta_test": beta_test, "n_eval": n_eval}
    for name, values in columns.items():
        values = np.array(values, dtype=np.float64)
        summary[f"{name}_mean"] = float(np.mean(values)) if len(values) else math.nan
        summary[f"{name}_std"] = float(np.std(values)) if len(values) else math.nan

    return summary


def decision_breakdown(estimators, cs, allocation, beta):
    """How much of each agent's chosen value came from utility and how much from fairness (SO/FO only).

    Returns:
        List[Dict] - Per agent: action, utility part (1 - beta) U(x), fairness part beta F(x), and value.
    """
    estimators.check()
    if estimators.mode is LearnerMode.JO:
        raise MissingNetworkError("JO has no separate utility and fairness networks to break down.")

    beta = as_beta(beta)
    X = cs.chosen_features(allocation)
    utility_net = estimators.u if estimators.mode is LearnerMode.SO else estimators.frozen_u
    utility = (1.0 - beta) * utility_net.forward_batch(X)
    fairness = beta * estimators.f.forward_batch(X)

    return [
        {
            "agent": agent,
            "action": action,
            "utility": float(utility[agent]),
            "fairness": float(fairness[agent]),
            "value": float(utility[agent] + fairness[agent]),
        }
        for agent, action in enumerate(allocation.chosen)
    ]


@dataclass(eq=False)
class TrainRunResult:
    """What a training run leaves behind; `estimators` hold the best-validation parameters."""

    estimators: Estimators
    best_objective: float
    best_episode: int
    train_log: list
    validation_log: list
    summary: dict


def run_training(env, config, seed=0, frozen_u=None, progress=False, run_id=""):
    """Trains a learner on an environment, keeping the parameters with the best validation objective.

    Every `validate_every_k` episodes (and after the last one) a greedy validation episode, always on the
    same seed, scores the current nets by (1 - beta) U_T + beta F(Z_T).  Target nets sync every
    `target_sync_tau` episodes.  At the end the best parameters are restored and evaluated over `n_eval`
    greedy episodes.

    Arguments:
        :env: BaseEnvironment - The environment to train on.
        :config: LearnerConfig - Learning settings.
        :seed: Integer - Seeds the nets, exploration and every episode.
        :frozen_u: ValueNet/None - The pre-trained utility net (FO only).
        :progress: Boolean - Show a progress bar.
        :run_id: String - Run identifier carried into the log rows.
    """
    if config.mode is LearnerMode.FO and frozen_u is None:
        raise MissingNetworkError("FO training needs a frozen utility network.")

    estimators = Estimators.create(
        config.mode,
        env.feature_dim,
        seed=seed,
        hidden_dims=config.hidden_dims,
        lr=config.lr,
        beta=config.beta,
        frozen_u=frozen_u,
    )
    rng = np.random.default_rng([seed, TRAIN_PHASE])
    buffer = ReplayBuffer(config.buffer_capacity)

    train_log = []
    validation_log = []
    best_objective = -math.inf
    best_episode = -1
    best_snapshot = None
    last = config.n_episodes - 1
    for episode in tqdm(range(config.n_episodes), desc=run_id or "training", disable=not progress):
        started = time.perf_counter()
        epsilon = config.epsilon(episode)
        stats = run_episode(
            estimators,
            env,
            config,
            epsilon,
            rng,
            seed=[seed, TRAIN_PHASE, episode],
            buffer=buffer,
            training=True,
            learn=True,
        )

        if (episode + 1) % config.target_sync_tau == 0:
            estimators.sync_targets()
            logger.debug("%s: synced target nets after episode %d", run_id, episode)

        train_log.append(
            {
                "run_id": run_id,
                "episode": episode,
                "epsilon": epsilon,
                "mean_loss": stats.mean_loss,
                "episode_utility": stats.utility,
                "episode_fairness": stats.fairness,
                "wall_ms": (time.perf_counter() - started) * 1000.0,
            }
        )

        if (episode + 1) % config.validate_every_k and episode != last:
            continue

        validation_rng = _episode_rng(seed, VALIDATION_PHASE, 0)
        check = run_episode(estimators, env, config, 0.0, validation_rng, seed=[seed, VALIDATION_PHASE])
        objective = validation_objective(check, config.beta)
        variance = -evaluate_metrics(check.z)["variance"]
        validation_log.append(
            {
                "run_id": run_id,
                "episode": episode,
                "objective": objective,
                "utility": check.utility,
                "fairness": check.fairness,
                "selection_score": selection_score(check.utility, variance),
            }
        )
        logger.info("%s: episode %d validation objective %.4f", run_id, episode, objective)

        if objective > best_objective:
            best_objective = objective
            best_episode = episode
            best_snapshot = estimators.snapshot()

    if best_snapshot is not None:
        estimators.restore(best_snapshot)

    summary = evaluate_policy(estimators, env, config, seed=seed, progress=progress)
    return TrainRunResult(
        estimators=estimators,
        best_objective=best_objective,
        best_episode=best_episode,
        train_log=train_log,
        validation_log=validation_log,
        summary=summary,
    )
