"""Preparation recommendations and how to present them to an agent.

The agent model knows every shortcut but never prepares on its own: it
carries out the preparations it adopted, then plans with all preparations
forbidden.  Recommendations are presented as groups that must be adopted
whole; three groupings are compared (pick-and-choose, all-or-nothing and
the strategy-aware grouping built from link scores between
recommendations).
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .envs.shortcuts import ShortcutsSpec, build_shortcuts
from .linkscore import ConstrainedPlans
from .mdp import Environment
from .planners import ConstraintSet, PlannerConfig, apply_constraint, plan

PICK_AND_CHOOSE = "pick-and-choose"
ALL_OR_NOTHING = "all-or-nothing"
STRATEGY_AWARE = "strategic"
METHODS = (PICK_AND_CHOOSE, ALL_OR_NOTHING, STRATEGY_AWARE)


@dataclass(frozen=True)
class RecommendationSet:
    """Recommended preparations (1-based ids) with their planned take-up probabilities."""

    preps: tuple[int, ...]
    probabilities: dict[int, float] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if len(set(self.preps)) != len(self.preps):
            raise ValueError("recommendations must be distinct")

    def decisions(self, spec: ShortcutsSpec) -> list[tuple[int, int]]:
        s0 = spec.state(1)
        return [(s0, spec.prep_action(j)) for j in self.preps]

    def __len__(self) -> int:
        return len(self.preps)


@dataclass(frozen=True)
class Grouping:
    groups: tuple[frozenset[int], ...]
    method: str
    threshold: float | None = None
    seed_groups: tuple[frozenset[int], ...] = ()
    scores: dict[tuple[int, int], float] = field(default_factory=dict, compare=False)

    def members(self) -> frozenset[int]:
        return frozenset().union(*self.groups) if self.groups else frozenset()

    def adoptable_sets(self) -> list[frozenset[int]]:
        """Every union of whole groups, the empty set included."""
        out = []
        for r in range(len(self.groups) + 1):
            for combo in itertools.combinations(self.groups, r):
                out.append(frozenset().union(*combo) if combo else frozenset())
        return out


def prep_constraint(spec: ShortcutsSpec, preps: Iterable[int]) -> ConstraintSet:
    """Forbid the given preparations at their node under every flag setting."""
    pairs = set()
    for j in preps:
        node = spec.prep_nodes[j - 1]
        for flags in range(spec.n_flags):
            pairs.add((spec.state(node, flags), spec.prep_action(j)))
    return ConstraintSet(frozenset(pairs), spec.action_count)


def prep_uptake(env: Environment, policy: np.ndarray, spec: ShortcutsSpec, horizon: int) -> dict[int, float]:
    """Probability that each preparation has been made within ``horizon`` steps."""
    d = env.initial_dist.copy()
    for _ in range(horizon):
        d = env.transitions.T @ (d[:, None] * policy).ravel()
    flags = np.arange(spec.state_count) % spec.n_flags
    return {j: float(d[(flags >> (j - 1) & 1) == 1].sum()) for j in range(1, spec.n_preps + 1)}


def compute_recommendations(
    env: Environment, reward: np.ndarray, config: PlannerConfig, spec: ShortcutsSpec
) -> RecommendationSet:
    """Preparations the soft-optimal planner makes with probability above 1/2."""
    policy = plan(env, reward, config)
    uptake = prep_uptake(env, policy, spec, config.iterations)
    preps = tuple(j for j, p in uptake.items() if p > 0.5)
    return RecommendationSet(preps, uptake)


def pick_and_choose(recs: RecommendationSet) -> Grouping:
    return Grouping(tuple(frozenset({j}) for j in recs.preps), PICK_AND_CHOOSE)


def all_or_nothing(recs: RecommendationSet) -> Grouping:
    return Grouping((frozenset(recs.preps),) if recs.preps else (), ALL_OR_NOTHING)


def _components(seed_groups: Sequence[frozenset[int]]) -> tuple[frozenset[int], ...]:
    merged: list[set[int]] = []
    for group in seed_groups:
        hits = [m for m in merged if m & group]
        new = set(group).union(*hits)
        merged = [m for m in merged if not m & group] + [new]
    return tuple(sorted((frozenset(m) for m in merged), key=min))


def default_threshold(spec: ShortcutsSpec) -> float:
    """Half of 1/J, the largest score possible when J preparations are equally likely."""
    return 0.5 / spec.n_preps


def strategy_aware_groups(
    env: Environment,
    reward: np.ndarray,
    config: PlannerConfig,
    recs: RecommendationSet,
    spec: ShortcutsSpec,
    threshold: float | None = None,
) -> Grouping:
    """Group each recommendation with the recommendations it is a set-up for.

    Scores are taken at the start state with non-recommended preparations
    forbidden, since the agent never makes those.  Overlapping seed groups
    are merged into connected components.
    """
    thr = default_threshold(spec) if threshold is None else float(threshold)
    if not 0.0 < thr < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {thr}")
    others = [j for j in range(1, spec.n_preps + 1) if j not in recs.preps]
    plans = ConstrainedPlans(env, reward, config, base=prep_constraint(spec, others))
    s0 = spec.state(1)
    scores: dict[tuple[int, int], float] = {}
    seed_groups = []
    for i in recs.preps:
        group = {i}
        for j in recs.preps:
            score = plans.score((s0, spec.prep_action(i)), prep_constraint(spec, [j]))
            scores[(i, j)] = score
            if score > thr:
                group.add(j)
        seed_groups.append(frozenset(group))
    return Grouping(_components(seed_groups), STRATEGY_AWARE, thr, tuple(seed_groups), scores)


class AgentModel:
    """Agent that executes adopted preparations, then plans without preparing."""

    def __init__(self, spec: ShortcutsSpec, config: PlannerConfig, env: Environment | None = None, reward=None):
        if env is None or reward is None:
            env, reward = build_shortcuts(spec)
        self.spec, self.env, self.reward, self.config = spec, env, np.asarray(reward), config
        masked = apply_constraint(self.reward, prep_constraint(spec, range(1, spec.n_preps + 1)))
        self.policy = plan(env, masked, config)

    def run(self, adopted: Iterable[int]) -> list[tuple[int, int]]:
        spec, env = self.spec, self.env
        s = spec.state(1)
        decisions = []
        for j in sorted(set(adopted)):
            a = spec.prep_action(j)
            decisions.append((s, a))
            s = env.step(s, a)
        cap = 2 * spec.n_nodes + spec.n_preps
        while s not in env.terminal and len(decisions) < cap:
            a = int(np.argmax(self.policy[s]))
            decisions.append((s, a))
            s = env.step(s, a)
        return decisions

    def performance(self, adopted: Iterable[int]) -> float:
        """Undiscounted return of the greedy run."""
        return float(sum(self.reward[s, a] for s, a in self.run(adopted)))


def evaluate_adoption(
    env: Environment, spec: ShortcutsSpec, adopted: Iterable[int], config: PlannerConfig, reward=None
) -> float:
    if reward is None:
        _, reward = build_shortcuts(spec)
    return AgentModel(spec, config, env, reward).performance(adopted)


@dataclass(frozen=True)
class MethodOutcome:
    grouping: Grouping
    outcomes: tuple[tuple[frozenset[int], float], ...]

    def by_k(self) -> dict[int, list[float]]:
        out: dict[int, list[float]] = {}
        for adopted, perf in self.outcomes:
            out.setdefault(len(adopted), []).append(perf)
        return dict(sorted(out.items()))

    def average(self) -> dict[int, float]:
        return {k: float(np.mean(v)) for k, v in self.by_k().items()}

    def worst(self) -> dict[int, float]:
        return {k: float(np.min(v)) for k, v in self.by_k().items()}


@dataclass(frozen=True)
class EnvironmentReport:
    spec: ShortcutsSpec
    recommendations: RecommendationSet
    baseline: float
    methods: dict[str, MethodOutcome]

    @property
    def max_k(self) -> int:
        return len(self.recommendations)

    def to_json(self) -> dict:
        return {
            "spec": self.spec.to_json(),
            "recommendations": list(self.recommendations.preps),
            "uptake": {str(j): p for j, p in self.recommendations.probabilities.items()},
            "baseline": self.baseline,
            "methods": {
                name: {
                    "groups": [sorted(g) for g in m.grouping.groups],
                    "average": {str(k): v for k, v in m.average().items()},
                    "worst": {str(k): v for k, v in m.worst().items()},
                }
                for name, m in self.methods.items()
            },
        }


def evaluate_environment(spec: ShortcutsSpec, config: PlannerConfig | None = None, threshold: float | None = None) -> EnvironmentReport:
    config = config or spec.planner_config()
    env, reward = build_shortcuts(spec)
    recs = compute_recommendations(env, reward, config, spec)
    agent = AgentModel(spec, config, env, reward)
    cache: dict[frozenset[int], float] = {}

    def perf(adopted: frozenset[int]) -> float:
        if adopted not in cache:
            cache[adopted] = agent.performance(adopted)
        return cache[adopted]

    groupings = {
        PICK_AND_CHOOSE: pick_and_choose(recs),
        ALL_OR_NOTHING: all_or_nothing(recs),
        STRATEGY_AWARE: strategy_aware_groups(env, reward, config, recs, spec, threshold),
    }
    methods = {
        name: MethodOutcome(g, tuple((a, perf(a)) for a in g.adoptable_sets())) for name, g in groupings.items()
    }
    return EnvironmentReport(spec, recs, perf(frozenset()), methods)


@dataclass(frozen=True)
class RecommendationReport:
    environments: tuple[EnvironmentReport, ...]

    def curve(self, method: str, stat: str, fill: bool = False) -> dict[int, float]:
        """Per-k mean over environments of the per-environment average or worst value.

        With ``fill`` an environment contributes its baseline at any k it
        cannot realise below its maximum.
        """
        buckets: dict[int, list[float]] = {}
        for rep in self.environments:
            values = getattr(rep.methods[method], stat)()
            ks = range(rep.max_k + 1) if fill else values.keys()
            for k in ks:
                buckets.setdefault(k, []).append(values.get(k, rep.baseline))
        return {k: float(np.mean(v)) for k, v in sorted(buckets.items())}

    def baseline(self) -> float:
        return float(np.mean([rep.baseline for rep in self.environments]))

    def write(self, out_dir: str | Path) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []

        def emit(name: str, series: dict[int, float]) -> None:
            path = out / name
            path.write_text("".join(f"{k} {v:.10g}\n" for k, v in series.items()), encoding="utf-8")
            written.append(path)

        for method in METHODS:
            emit(f"polimp-{method}.dat", self.curve(method, "average"))
            emit(f"polimp-{method}-min.dat", self.curve(method, "worst"))
        emit(f"polimp-{ALL_OR_NOTHING}-filled.dat", self.curve(ALL_OR_NOTHING, "average", fill=True))
        emit(f"polimp-{ALL_OR_NOTHING}-min-filled.dat", self.curve(ALL_OR_NOTHING, "worst", fill=True))
        top = max((rep.max_k for rep in self.environments), default=0)
        emit("polimp-baseline.dat", {k: self.baseline() for k in range(top + 1)})
        summary = out / "polimp-summary.json"
        summary.write_text(json.dumps({
            "baseline": self.baseline(),
            "environments": [rep.to_json() for rep in self.environments],
        }, indent=1, sort_keys=True), encoding="utf-8")
        written.append(summary)
        return written


def recommendation_report(
    specs: Sequence[ShortcutsSpec], config: PlannerConfig | None = None, threshold: float | None = None
) -> RecommendationReport:
    return RecommendationReport(tuple(evaluate_environment(spec, config, threshold) for spec in specs))
