"""Soft and hard value iteration, and constrained re-planning by reward masking."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import kernels
from .mdp import NEG_INF, Environment, InfeasibleConstraintError, Trajectory, greedy_action

SOFT = "soft"
HARD = "hard"


@dataclass(frozen=True)
class PlannerConfig:
    """Value-iteration settings.

    gamma may equal 1 for undiscounted finite-horizon planning, where
    ``iterations`` is the number of steps to go.
    """

    gamma: float = 0.99
    beta: float = 100.0
    iterations: int = 250
    mode: str = SOFT

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.mode not in (SOFT, HARD):
            raise ValueError(f"mode must be 'soft' or 'hard', got {self.mode!r}")


@dataclass(frozen=True)
class ConstraintSet:
    """Forbidden (state, action) pairs.

    When ``n_actions`` is given, construction fails if some state would lose
    every action.
    """

    forbidden: frozenset[tuple[int, int]] = frozenset()
    n_actions: int | None = None

    def __post_init__(self) -> None:
        pairs = frozenset((int(s), int(a)) for s, a in self.forbidden)
        object.__setattr__(self, "forbidden", pairs)
        if self.n_actions is not None:
            self.check(self.n_actions)

    def check(self, n_actions: int) -> None:
        per_state: dict[int, set[int]] = {}
        for s, a in self.forbidden:
            if not 0 <= a < n_actions:
                raise ValueError(f"action {a} out of range at state {s}")
            per_state.setdefault(s, set()).add(a)
        for s, acts in per_state.items():
            if len(acts) >= n_actions:
                raise InfeasibleConstraintError(f"every action forbidden at state {s}")

    def __or__(self, other: "ConstraintSet") -> "ConstraintSet":
        n_a = self.n_actions if self.n_actions is not None else other.n_actions
        return ConstraintSet(self.forbidden | other.forbidden, n_a)

    def __len__(self) -> int:
        return len(self.forbidden)

    def __bool__(self) -> bool:
        return bool(self.forbidden)


@dataclass(frozen=True)
class DecisionClass:
    """One logical decision: an observable state part plus an action."""

    representative: tuple[object, int]
    members: frozenset[tuple[int, int]]

    def __post_init__(self) -> None:
        if not self.members:
            raise ValueError("decision class has no members")
        if len({a for _, a in self.members}) != 1:
            raise ValueError("decision class members must share the action")

    def constraint(self, n_actions: int | None = None) -> ConstraintSet:
        return ConstraintSet(self.members, n_actions)


def decision_class(class_map: np.ndarray | None, state: int, action: int) -> DecisionClass:
    """Decision class of (state, action) under a per-state observable-class map.

    ``class_map[s]`` is an integer id; states with equal ids are the same
    observable situation.  Without a map every decision is its own class.
    """
    if class_map is None:
        return DecisionClass((state, action), frozenset({(state, action)}))
    key = int(class_map[state])
    members = frozenset((int(s), action) for s in np.flatnonzero(class_map == key))
    return DecisionClass((key, action), members)


def apply_constraint(reward: np.ndarray, constraint: ConstraintSet) -> np.ndarray:
    """Copy of ``reward`` with every forbidden entry set to -inf."""
    out = np.array(reward, dtype=np.float64, copy=True)
    if constraint.forbidden:
        constraint.check(out.shape[1])
        s, a = zip(*constraint.forbidden)
        out[list(s), list(a)] = NEG_INF
    out.flags.writeable = False
    return out


def _check_rows(reward: np.ndarray) -> None:
    dead = np.all(np.isneginf(reward), axis=1)
    if dead.any():
        raise InfeasibleConstraintError(f"every action forbidden at state {int(np.flatnonzero(dead)[0])}")


def q_values(
    env: Environment,
    reward: np.ndarray,
    config: PlannerConfig,
    v0: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Run ``config.iterations`` Bellman sweeps from V = v0 (default 0); return (Q, V)."""
    reward = np.ascontiguousarray(reward, dtype=np.float64)
    if reward.shape != (env.state_count, env.action_count):
        raise ValueError(f"reward shape {reward.shape} does not match environment")
    _check_rows(reward)
    v0 = np.zeros(env.state_count) if v0 is None else np.ascontiguousarray(v0, dtype=np.float64)
    indptr, indices, probs = env.csr
    return kernels.value_sweeps(
        indptr, indices, probs, reward, float(config.beta), float(config.gamma),
        int(config.iterations), v0, config.mode == SOFT,
    )


def softmax_policy(q: np.ndarray, beta: float) -> np.ndarray:
    """pi(a|s) proportional to exp(beta Q); -inf entries get probability exactly 0."""
    m = q.max(axis=1, keepdims=True)
    if np.any(np.isneginf(m)):
        raise InfeasibleConstraintError(f"no finite action value at state {int(np.flatnonzero(np.isneginf(m))[0])}")
    with np.errstate(under="ignore"):
        w = np.exp(beta * (q - m))
    w[np.isneginf(q)] = 0.0
    return w / w.sum(axis=1, keepdims=True)


def greedy_policy(q: np.ndarray) -> np.ndarray:
    """One-hot policy on argmax Q with ties broken by lowest action index."""
    m = q.max(axis=1)
    if np.any(np.isneginf(m)):
        raise InfeasibleConstraintError(f"no finite action value at state {int(np.flatnonzero(np.isneginf(m))[0])}")
    pol = np.zeros_like(q)
    pol[np.arange(q.shape[0]), np.argmax(q, axis=1)] = 1.0
    return pol


def soft_value_iteration(env: Environment, reward: np.ndarray, config: PlannerConfig) -> np.ndarray:
    if config.mode != SOFT:
        raise ValueError("soft_value_iteration needs mode='soft'")
    q, _ = q_values(env, reward, config)
    return softmax_policy(q, config.beta)


def hard_value_iteration(env: Environment, reward: np.ndarray, config: PlannerConfig) -> np.ndarray:
    if config.mode != HARD:
        raise ValueError("hard_value_iteration needs mode='hard'")
    q, _ = q_values(env, reward, config)
    return greedy_policy(q)


def plan(env: Environment, reward: np.ndarray, config: PlannerConfig) -> np.ndarray:
    """Stationary policy from the configured planner."""
    if config.mode == SOFT:
        return soft_value_iteration(env, reward, config)
    return hard_value_iteration(env, reward, config)


def plan_constrained(
    env: Environment, reward: np.ndarray, config: PlannerConfig, constraint: ConstraintSet
) -> np.ndarray:
    return plan(env, apply_constraint(reward, constraint), config)


def time_indexed_policies(env: Environment, reward: np.ndarray, config: PlannerConfig, horizon: int) -> np.ndarray:
    """Nonstationary finite-horizon policies, shape (horizon, S, A).

    Entry t is the policy with ``horizon - t`` steps to go.
    """
    one = PlannerConfig(config.gamma, config.beta, 1, config.mode)
    v = np.zeros(env.state_count)
    out = np.empty((horizon, env.state_count, env.action_count))
    for t in range(horizon - 1, -1, -1):
        q, v = q_values(env, reward, one, v)
        out[t] = softmax_policy(q, config.beta) if config.mode == SOFT else greedy_policy(q)
    return out


def most_likely_trajectory(
    env: Environment,
    reward: np.ndarray,
    config: PlannerConfig,
    horizon: int | None = None,
    seed: int | None = None,
    policy: np.ndarray | None = None,
) -> Trajectory:
    """Follow the argmax action of the unconstrained plan from the most likely start.

    Stops on entering a terminal state or after ``horizon`` decisions
    (default ``config.iterations``); hitting the cap without reaching a
    terminal sets ``truncated``.
    """
    if policy is None:
        policy = plan(env, reward, config)
    cap = config.iterations if horizon is None else horizon
    rng = np.random.default_rng(seed) if not env.is_deterministic() else None
    s = int(np.argmax(env.initial_dist))
    states: list[int] = []
    actions: list[int] = []
    while len(states) < cap and s not in env.terminal:
        a = greedy_action(policy[s])
        states.append(s)
        actions.append(a)
        s = env.step(s, a, rng)
    return Trajectory(tuple(states), tuple(actions), final_state=s, truncated=s not in env.terminal)


def constraint_from_pairs(pairs: Iterable[tuple[int, int]], env: Environment) -> ConstraintSet:
    return ConstraintSet(frozenset(pairs), env.action_count)
