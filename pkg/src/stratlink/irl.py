"""Reward inference from demonstrations and evaluation of the inferred rewards.

Rewards are full state x action tables learned by maximum-entropy IRL with
known dynamics.  Two likelihood models are available: ``stationary`` plans
one soft policy (the same planner that generated the demonstrations) and
``time-indexed`` uses one soft policy per step of a finite, undiscounted
horizon, for which the visitation difference is the exact log-likelihood
gradient up to the factor beta.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .envs.arterial import ArterialSpec, build_arterial_mdp, closure_constraint
from .envs.gridworld import load_layout, parse_gridworld
from .envs.shortcuts import ShortcutsSpec, build_shortcuts, shortcut_family
from .linkscore import ConstrainedPlans, LinkScoreMatrix, explanation_matrix
from .mdp import Environment, Trajectory
from .planners import SOFT, PlannerConfig, most_likely_trajectory, plan, time_indexed_policies
from .recommend import prep_constraint

STATIONARY = "stationary"
TIME_INDEXED = "time-indexed"


@dataclass(frozen=True, eq=False)
class DemoSet:
    """``count`` demonstrations of equal length stored as (count, horizon) arrays."""

    states: np.ndarray
    actions: np.ndarray
    beta: float
    gamma: float

    def __post_init__(self) -> None:
        s = np.array(self.states, dtype=np.int64)
        a = np.array(self.actions, dtype=np.int64)
        if s.ndim != 2 or s.shape != a.shape or s.shape[1] < 1:
            raise ValueError("states and actions must share a (count, horizon) shape with horizon >= 1")
        s.flags.writeable = False
        a.flags.writeable = False
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "actions", a)

    @classmethod
    def from_trajectories(cls, trajectories: Sequence[Trajectory], beta: float, gamma: float) -> "DemoSet":
        if not trajectories:
            raise ValueError("no trajectories given")
        if len({len(t) for t in trajectories}) != 1:
            raise ValueError("demonstrations must all have the same length")
        return cls(np.array([t.states for t in trajectories]), np.array([t.actions for t in trajectories]), beta, gamma)

    @property
    def count(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        return self.states.shape[1]

    def __len__(self) -> int:
        return self.count

    @property
    def trajectories(self) -> list[Trajectory]:
        return [Trajectory(tuple(map(int, s)), tuple(map(int, a))) for s, a in zip(self.states, self.actions)]

    def visitation(self, n_states: int, n_actions: int) -> np.ndarray:
        """Mean state-action visit counts per demonstration; sums to the horizon."""
        counts = np.zeros((n_states, n_actions))
        np.add.at(counts, (self.states.ravel(), self.actions.ravel()), 1.0)
        return counts / self.count

    def same_as(self, other: "DemoSet") -> bool:
        return np.array_equal(self.states, other.states) and np.array_equal(self.actions, other.actions)


def _draw_rows(cum: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Index of the first column whose cumulative probability exceeds ``u`` per row."""
    idx = (u[:, None] < cum).argmax(axis=1)
    return np.minimum(idx, cum.shape[1] - 1)


def _step_many(env: Environment, states: np.ndarray, actions: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    indptr, indices, probs = env.csr
    rows = states * env.action_count + actions
    if env.is_deterministic():
        return indices[rows]
    cum = np.cumsum(probs)
    lo, hi = indptr[rows], indptr[rows + 1]
    before = np.where(lo > 0, cum[lo - 1], 0.0)
    target = before + rng.random(len(rows)) * (cum[hi - 1] - before)
    picked = np.searchsorted(cum, target, side="right")
    return indices[np.clip(picked, lo, hi - 1)]


def sample_demonstrations(
    env: Environment,
    reward: np.ndarray,
    config: PlannerConfig,
    count: int,
    horizon: int,
    seed: int,
    policy: np.ndarray | None = None,
) -> DemoSet:
    """Roll out the soft-optimal stationary policy ``count`` times for ``horizon`` steps."""
    if count < 1 or horizon < 1:
        raise ValueError(f"need count >= 1 and horizon >= 1, got {count} and {horizon}")
    if policy is None:
        policy = plan(env, reward, config)
    rng = np.random.default_rng(seed)
    cum_policy = np.cumsum(policy, axis=1)
    states = np.empty((count, horizon), dtype=np.int64)
    actions = np.empty((count, horizon), dtype=np.int64)
    s = _draw_rows(np.cumsum(env.initial_dist)[None, :].repeat(count, axis=0), rng.random(count))
    for t in range(horizon):
        a = _draw_rows(cum_policy[s], rng.random(count))
        states[:, t] = s
        actions[:, t] = a
        s = _step_many(env, s, a, rng)
    return DemoSet(states, actions, config.beta, config.gamma)


@dataclass(frozen=True)
class IrlConfig:
    iterations: int = 10_000
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    gradient: str = STATIONARY

    def __post_init__(self) -> None:
        if self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")
        if not 0.0 < self.learning_rate < 1.0:
            raise ValueError(f"learning rate must lie in (0, 1), got {self.learning_rate}")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0 and self.eps > 0):
            raise ValueError("Adam moments must lie in (0, 1) and eps must be positive")
        if self.planner.mode != SOFT:
            raise ValueError("the inner planner must be soft value iteration")
        if self.gradient not in (STATIONARY, TIME_INDEXED):
            raise ValueError(f"gradient must be {STATIONARY!r} or {TIME_INDEXED!r}, got {self.gradient!r}")


class Adam:
    """Adam ascent on a single parameter array."""

    def __init__(self, shape: tuple[int, ...], lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return params + self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _policies(env: Environment, reward: np.ndarray, planner: PlannerConfig, horizon: int, mode: str) -> np.ndarray:
    if mode == TIME_INDEXED:
        return time_indexed_policies(env, reward, planner, horizon)
    return plan(env, reward, planner)[None]


def expected_visitation(env: Environment, policies: np.ndarray, horizon: int) -> np.ndarray:
    """Expected state-action visit counts over ``horizon`` steps from sigma."""
    indptr, indices, probs = env.csr
    return kernels.forward_visitation(
        indptr, indices, probs, np.ascontiguousarray(policies, dtype=np.float64), env.initial_dist, int(horizon)
    )


def _step_counts(demos: DemoSet, n_states: int, n_actions: int, per_step: bool) -> np.ndarray:
    """Visit counts per demonstration, (1, S, A) pooled or (T, S, A) per step."""
    if not per_step:
        return demos.visitation(n_states, n_actions)[None]
    counts = np.zeros((demos.horizon, n_states, n_actions))
    steps = np.broadcast_to(np.arange(demos.horizon), demos.states.shape)
    np.add.at(counts, (steps.ravel(), demos.states.ravel(), demos.actions.ravel()), 1.0)
    return counts / demos.count


def _loglik(policies: np.ndarray, counts: np.ndarray) -> float:
    seen = counts > 0
    pol = np.broadcast_to(policies, counts.shape)
    with np.errstate(divide="ignore"):
        return float(np.sum(counts[seen] * np.log(pol[seen])))


def demo_log_likelihood(env: Environment, reward: np.ndarray, demos: DemoSet, config: IrlConfig) -> float:
    """Mean over demonstrations of sum_t log pi(a_t | s_t) under ``reward``."""
    counts = _step_counts(demos, env.state_count, env.action_count, config.gradient == TIME_INDEXED)
    return _loglik(_policies(env, reward, config.planner, demos.horizon, config.gradient), counts)


def maxent_gradient(env: Environment, reward: np.ndarray, demos: DemoSet, config: IrlConfig) -> np.ndarray:
    """Empirical minus expected state-action visitation under the current soft policy."""
    policies = _policies(env, reward, config.planner, demos.horizon, config.gradient)
    mu = expected_visitation(env, policies, demos.horizon)
    return demos.visitation(env.state_count, env.action_count) - mu


def downsample(curve: np.ndarray, points: int = 100) -> list[tuple[int, float]]:
    """At most ``points`` evenly spaced (step, value) pairs, endpoints included."""
    n = len(curve)
    if n == 0:
        return []
    idx = np.unique(np.linspace(0, n - 1, min(points, n)).round().astype(int))
    return [(int(i), float(curve[i])) for i in idx]


@dataclass(frozen=True)
class IrlResult:
    reward: np.ndarray
    loss_curve: np.ndarray


def maxent_irl(env: Environment, demos: DemoSet, config: IrlConfig) -> IrlResult:
    """Adam ascent on the demonstration log-likelihood from an all-zero reward.

    ``loss_curve[k]`` is the negative mean log-likelihood before step k.
    """
    n_s, n_a = env.state_count, env.action_count
    counts = _step_counts(demos, n_s, n_a, config.gradient == TIME_INDEXED)
    empirical = counts.sum(axis=0)
    reward = np.zeros((n_s, n_a))
    opt = Adam(reward.shape, config.learning_rate, config.beta1, config.beta2, config.eps)
    losses = np.empty(config.iterations)
    for k in range(config.iterations):
        policies = _policies(env, reward, config.planner, demos.horizon, config.gradient)
        losses[k] = -_loglik(policies, counts)
        grad = empirical - expected_visitation(env, policies, demos.horizon)
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"non-finite IRL gradient at step {k}")
        reward = opt.step(reward, grad)
    reward.flags.writeable = False
    return IrlResult(reward, losses)


class UndefinedDistanceError(ValueError):
    """A canonicalized reward is constant, so its correlation distance is undefined."""


@dataclass(frozen=True)
class EpicConfig:
    """Discount and evaluation distributions; ``None`` means uniform."""

    gamma: float = 0.99
    state_dist: tuple[float, ...] | None = None
    action_dist: tuple[float, ...] | None = None

    def distributions(self, n_states: int, n_actions: int) -> tuple[np.ndarray, np.ndarray]:
        ds = np.full(n_states, 1.0 / n_states) if self.state_dist is None else np.asarray(self.state_dist, float)
        da = np.full(n_actions, 1.0 / n_actions) if self.action_dist is None else np.asarray(self.action_dist, float)
        for name, d, n in (("state", ds, n_states), ("action", da, n_actions)):
            if d.shape != (n,) or np.any(d < 0) or abs(d.sum() - 1.0) > 1e-9:
                raise ValueError(f"{name} distribution must be a probability vector of length {n}")
        return ds, da

    def describe(self) -> dict:
        return {
            "gamma": self.gamma,
            "states": "uniform" if self.state_dist is None else list(self.state_dist),
            "actions": "uniform" if self.action_dist is None else list(self.action_dist),
        }


def _as_transition_reward(r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    if r.ndim == 2:
        r = np.repeat(r[:, :, None], r.shape[0], axis=2)
    if r.ndim != 3 or r.shape[0] != r.shape[2]:
        raise ValueError(f"reward must be S x A or S x A x S, got shape {r.shape}")
    if not np.all(np.isfinite(r)):
        raise ValueError("EPIC needs finite rewards on the evaluation support")
    return r


def canonical_reward(reward: np.ndarray, config: EpicConfig = EpicConfig()) -> np.ndarray:
    """Shaping-invariant canonical form as an S x A x S table."""
    r = _as_transition_reward(reward)
    ds, da = config.distributions(r.shape[0], r.shape[1])
    mean_from = np.einsum("xat,a,t->x", r, da, ds)
    overall = float(ds @ mean_from)
    g = config.gamma
    return r + g * mean_from[None, None, :] - mean_from[:, None, None] - g * overall


def epic_distance(r1: np.ndarray, r2: np.ndarray, env: Environment | None = None, config: EpicConfig = EpicConfig()) -> float:
    """Pearson distance sqrt((1 - rho) / 2) between canonicalized rewards."""
    c1, c2 = canonical_reward(r1, config), canonical_reward(r2, config)
    if c1.shape != c2.shape:
        raise ValueError(f"reward shapes {c1.shape} and {c2.shape} differ")
    if env is not None and c1.shape[:2] != (env.state_count, env.action_count):
        raise ValueError("reward shape does not match environment")
    ds, da = config.distributions(c1.shape[0], c1.shape[1])
    w = np.einsum("x,a,t->xat", ds, da, ds)
    d1 = c1 - np.sum(w * c1)
    d2 = c2 - np.sum(w * c2)
    v1, v2 = np.sum(w * d1 * d1), np.sum(w * d2 * d2)
    scale = max(np.sum(w * c1 * c1), np.sum(w * c2 * c2), 1.0)
    if v1 <= 1e-24 * scale or v2 <= 1e-24 * scale:
        raise UndefinedDistanceError("canonical reward has zero variance")
    rho = float(np.sum(w * d1 * d2) / math.sqrt(v1 * v2))
    return math.sqrt(max(0.0, (1.0 - min(rho, 1.0)) / 2.0))


def inferred_score_error(true_scores, inferred_scores) -> float:
    """Mean squared difference over entries defined (non-NaN) in both."""
    t = np.asarray(true_scores.scores if isinstance(true_scores, LinkScoreMatrix) else true_scores, dtype=float)
    i = np.asarray(inferred_scores.scores if isinstance(inferred_scores, LinkScoreMatrix) else inferred_scores, dtype=float)
    if t.shape != i.shape:
        raise ValueError(f"score shapes {t.shape} and {i.shape} differ")
    defined = ~(np.isnan(t) | np.isnan(i))
    if not defined.any():
        raise ValueError("no score is defined in both inputs")
    return float(np.mean((t[defined] - i[defined]) ** 2))


ScoreFn = Callable[[np.ndarray, PlannerConfig], np.ndarray]


@dataclass(frozen=True)
class IrlTask:
    """One environment with its true reward and the link scores to recover."""

    env: Environment
    reward: np.ndarray
    scores: ScoreFn


@dataclass(frozen=True)
class IrlProblem:
    name: str
    tasks: tuple[IrlTask, ...]
    horizon: int
    gamma: float
    learning_rate: float

    def planner(self, beta: float) -> PlannerConfig:
        return PlannerConfig(gamma=self.gamma, beta=beta, iterations=self.horizon, mode=SOFT)


def gridworld_problem(layout: str = "simple") -> IrlProblem:
    """Explanation matrix along the true most likely trajectory; horizon W x H."""
    world = parse_gridworld(load_layout(layout) if "\n" not in layout else layout)
    horizon = world.layout.width * world.layout.height

    def scores(reward: np.ndarray, cfg: PlannerConfig) -> np.ndarray:
        traj = most_likely_trajectory(world.env, world.reward, cfg)
        return explanation_matrix(world.env, reward, cfg, world.classes, trajectory=traj).scores

    return IrlProblem(f"gridworld-{layout}" if "\n" not in layout else "gridworld", (IrlTask(world.env, world.reward, scores),), horizon, 0.99, 1e-4)


def _prep_pair_scores(spec: ShortcutsSpec) -> ScoreFn:
    def scores(reward: np.ndarray, cfg: PlannerConfig) -> np.ndarray:
        env, _ = build_shortcuts(spec)
        plans = ConstrainedPlans(env, reward, cfg)
        s0 = spec.state(1)
        out = np.empty((spec.n_preps, spec.n_preps))
        for i in range(1, spec.n_preps + 1):
            for j in range(1, spec.n_preps + 1):
                out[i - 1, j - 1] = plans.score((s0, spec.prep_action(i)), prep_constraint(spec, [j]))
        return out

    return scores


def shortcuts_problem(count: int = 10, n_nodes: int = 5, n_shortcuts: int = 3, n_preps: int = 3, cost: float = 0.1, seed: int = 0) -> IrlProblem:
    """Preparation-pair link scores at the start state; horizon N x J."""
    tasks = []
    for spec in shortcut_family(count, n_nodes, n_shortcuts, n_preps, cost, seed):
        env, reward = build_shortcuts(spec)
        tasks.append(IrlTask(env, reward, _prep_pair_scores(spec)))
    return IrlProblem("shortcuts", tuple(tasks), n_nodes * n_preps, 0.99, 1e-4)


def arterial_problem(junctions: int = 5, quantization: int = 10) -> IrlProblem:
    """Scores of the true most likely route against a closure at the last junction; horizon J + 1."""
    spec = ArterialSpec(junctions=junctions, quantization=quantization)
    env, reward = build_arterial_mdp(spec)
    closure = closure_constraint(spec, junctions)

    def scores(r: np.ndarray, cfg: PlannerConfig) -> np.ndarray:
        traj = most_likely_trajectory(env, reward, cfg)
        plans = ConstrainedPlans(env, r, cfg)
        return np.array([plans.score(d, closure) for d in traj.decisions])

    return IrlProblem("arterial", (IrlTask(env, reward, scores),), junctions + 1, 1.0, 5e-3)


def run_irl_experiment(
    problem: IrlProblem,
    beta: float,
    seed: int,
    demos: int = 1000,
    iterations: int = 10_000,
    learning_rate: float | None = None,
    epic: EpicConfig | None = None,
) -> dict:
    """Infer rewards for every task of ``problem`` at one temperature; JSON-ready record.

    EPIC distance and score MSE are averaged over tasks.  If some task's
    EPIC distance is undefined the record says so instead of a number.
    """
    cfg = problem.planner(beta)
    epic = epic or EpicConfig(gamma=problem.gamma)
    irl_cfg = IrlConfig(iterations, learning_rate or problem.learning_rate, planner=cfg)
    distances, errors, curves = [], [], []
    undefined = False
    for k, task in enumerate(problem.tasks):
        demo_set = sample_demonstrations(task.env, task.reward, cfg, demos, problem.horizon, seed * 1_000_003 + k)
        result = maxent_irl(task.env, demo_set, irl_cfg)
        try:
            distances.append(epic_distance(task.reward, result.reward, task.env, epic))
        except UndefinedDistanceError:
            undefined = True
        errors.append(inferred_score_error(task.scores(task.reward, cfg), task.scores(result.reward, cfg)))
        curves.append(result.loss_curve)
    return {
        "problem": problem.name,
        "seed": seed,
        "beta": beta,
        "temperature": 1.0 / beta,
        "demos": demos,
        "iterations": iterations,
        "learning_rate": irl_cfg.learning_rate,
        "epic": None if undefined else float(np.mean(distances)),
        "epic_status": "undefined" if undefined else "ok",
        "epic_config": epic.describe(),
        "score_mse": float(np.mean(errors)),
        "loss_curve": downsample(np.mean(curves, axis=0)) if iterations else [],
    }


def summarize_runs(runs: Sequence[dict], key: str) -> list[tuple[float, float, float]]:
    """(temperature, mean, std) per temperature for ``key``, skipping undefined values."""
    by_temp: dict[float, list[float]] = {}
    for run in runs:
        if run[key] is not None:
            by_temp.setdefault(run["temperature"], []).append(run[key])
    return [(t, float(np.mean(v)), float(np.std(v))) for t, v in sorted(by_temp.items())]
