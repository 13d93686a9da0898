"""Strategic link scores and explanation matrices along a planned trajectory.

The link score of a set-up decision (s, a) with respect to a pay-off
constraint C is the drop in the planned likelihood of the set-up,
pi(a|s) - pi^C(a|s), where pi^C comes from the same planner re-run with the
pay-off decisions forbidden.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .mdp import Environment, Trajectory
from .planners import (
    ConstraintSet,
    PlannerConfig,
    apply_constraint,
    decision_class,
    most_likely_trajectory,
    plan,
)


@dataclass(frozen=True)
class LinkQuery:
    setup: tuple[int, int]
    payoff_constraint: ConstraintSet


@dataclass(frozen=True)
class Interval:
    """Interval of action values; the default is half-open (low, high]."""

    low: float
    high: float
    low_closed: bool = False
    high_closed: bool = True

    def __contains__(self, x: float) -> bool:
        above = x >= self.low if self.low_closed else x > self.low
        below = x <= self.high if self.high_closed else x < self.high
        return above and below


class ConstrainedPlans:
    """Cache of policies keyed by constraint, shared across matrix cells."""

    def __init__(self, env: Environment, reward: np.ndarray, config: PlannerConfig, base: ConstraintSet | None = None):
        self.env = env
        self.reward = np.asarray(reward, dtype=np.float64)
        self.config = config
        self.base = base or ConstraintSet()
        self._cache: dict[frozenset[tuple[int, int]], np.ndarray] = {}

    def policy(self, constraint: ConstraintSet | None = None) -> np.ndarray:
        key = self.base.forbidden | (constraint.forbidden if constraint else frozenset())
        pol = self._cache.get(key)
        if pol is None:
            masked = apply_constraint(self.reward, ConstraintSet(key, self.env.action_count))
            pol = plan(self.env, masked, self.config)
            pol.flags.writeable = False
            self._cache[key] = pol
        return pol

    def score(self, setup: tuple[int, int], constraint: ConstraintSet) -> float:
        s, a = setup
        return float(self.policy()[s, a] - self.policy(constraint)[s, a])


def link_score(env: Environment, reward: np.ndarray, config: PlannerConfig, query: LinkQuery) -> float:
    return ConstrainedPlans(env, reward, config).score(query.setup, query.payoff_constraint)


def region_constraint(
    states: Iterable[int],
    action_region: Callable[[float], bool] | Interval | Iterable[int],
    n_actions: int,
    action_values: Sequence[float] | None = None,
) -> ConstraintSet:
    """Forbid every action inside ``action_region`` at each of ``states``.

    The region is a predicate or :class:`Interval` over action values (action
    indices when ``action_values`` is omitted) or an explicit set of indices.
    """
    values = np.arange(n_actions, dtype=float) if action_values is None else np.asarray(action_values, dtype=float)
    if isinstance(action_region, Interval):
        inside = [a for a in range(n_actions) if values[a] in action_region]
    elif callable(action_region):
        inside = [a for a in range(n_actions) if action_region(values[a])]
    else:
        inside = sorted({int(a) for a in action_region})
    return ConstraintSet(frozenset((int(s), a) for s in states for a in inside), n_actions)


@dataclass(frozen=True)
class LinkScoreMatrix:
    """Upper-triangular score matrix; ``scores[t, u]`` is NaN for u < t."""

    trajectory: Trajectory
    scores: np.ndarray

    def defined_cells(self) -> list[tuple[int, int, float]]:
        n = len(self.trajectory)
        return [(t, u, float(self.scores[t, u])) for t in range(n) for u in range(t, n)]

    def to_text(self) -> str:
        """Lines "x y score": x is the set-up step (column), y the pay-off step (row)."""
        return "".join(f"{t} {u} {v:.10g}\n" for t, u, v in self.defined_cells())

    @classmethod
    def from_text(cls, text: str, trajectory: Trajectory) -> "LinkScoreMatrix":
        n = len(trajectory)
        scores = np.full((n, n), math.nan)
        for line in text.splitlines():
            if line.strip():
                x, y, v = line.split()
                scores[int(x), int(y)] = float(v)
        return cls(trajectory, scores)


def explanation_matrix(
    env: Environment,
    reward: np.ndarray,
    config: PlannerConfig,
    class_map: np.ndarray | None = None,
    horizon: int | None = None,
    trajectory: Trajectory | None = None,
) -> LinkScoreMatrix:
    """Link scores between every pair of decisions on the most likely trajectory.

    Pay-off constraints forbid the whole decision class of the pay-off
    decision when ``class_map`` is given.  Pass ``trajectory`` to score a
    fixed decision sequence instead of the planner's own.
    """
    plans = ConstrainedPlans(env, reward, config)
    if trajectory is None:
        trajectory = most_likely_trajectory(env, reward, config, horizon=horizon, policy=plans.policy())
    decisions = trajectory.decisions
    n = len(decisions)
    scores = np.full((n, n), math.nan)
    for u, (s_u, a_u) in enumerate(decisions):
        constraint = decision_class(class_map, s_u, a_u).constraint(env.action_count)
        constrained = plans.policy(constraint)
        base = plans.policy()
        for t in range(u + 1):
            s_t, a_t = decisions[t]
            scores[t, u] = base[s_t, a_t] - constrained[s_t, a_t]
    scores.flags.writeable = False
    return LinkScoreMatrix(trajectory, scores)
