"""Arterial road with highway on-ramps, as a flow-augmented MDP.

At junction J_i the state carries the flow f still on the arterial; the
action a is the fraction that stays.  f * a continues to J_{i+1} and the
rest takes the on-ramp to the highway.  Flows live on an evenly spaced grid
from 0 to the entry flow and f * a is snapped to the nearest grid point.
Actions are ordered from a = 1 down to a = 0, so that lowest-index tie
breaking prefers the arterial.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Any

import numpy as np

from ..linkscore import Interval, region_constraint
from ..mdp import Environment, as_reward
from ..planners import ConstraintSet, PlannerConfig, apply_constraint


@dataclass(frozen=True)
class TravelTime:
    """Segment time length / speed * (1 + alpha * (flow / capacity) ** power)."""

    length: float
    speed: float
    alpha: float = 0.0
    capacity: float = 2.0
    power: float = 4.0

    def __call__(self, flow):
        free = self.length / self.speed
        if self.alpha == 0.0:
            return free + 0.0 * np.asarray(flow, dtype=float)
        return free * (1.0 + self.alpha * (np.asarray(flow, dtype=float) / self.capacity) ** self.power)


@dataclass(frozen=True)
class ArterialSpec:
    junctions: int = 10
    entry_flow: float = 2.0
    quantization: int = 100
    segment_length: float = 1000.0
    highway_speed: float = 20.0
    alpha: float = 0.0
    capacity: float = 2.0
    power: float = 4.0

    def __post_init__(self) -> None:
        problems = []
        if self.junctions < 1:
            problems.append(f"need at least one junction, got {self.junctions}")
        if not self.entry_flow > 0:
            problems.append(f"entry flow must be positive, got {self.entry_flow}")
        if self.quantization < 2:
            problems.append(f"quantization needs at least 2 points to hold 0 and the entry flow, got {self.quantization}")
        if not (self.segment_length > 0 and self.highway_speed > 0 and self.capacity > 0):
            problems.append("segment length, speed and capacity must be positive")
        if self.alpha < 0 or self.power < 0:
            problems.append("congestion parameters must be non-negative")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def arterial_speed(self) -> float:
        """Geometric mean of the break-even speed 20 J/(J+1) and the highway speed."""
        j = self.junctions
        return self.highway_speed * math.sqrt(j / (j + 1))

    @property
    def arterial_time(self) -> TravelTime:
        return TravelTime(self.segment_length, self.arterial_speed, self.alpha, self.capacity, self.power)

    @property
    def highway_time(self) -> TravelTime:
        return TravelTime(self.segment_length, self.highway_speed, self.alpha, self.capacity, self.power)

    @property
    def actions(self) -> np.ndarray:
        """Arterial-stay fractions, from 1 down to 0."""
        return np.linspace(1.0, 0.0, self.quantization)

    @property
    def flows(self) -> np.ndarray:
        return np.linspace(0.0, self.entry_flow, self.quantization)

    def snap(self, flow: float) -> int:
        """Index of the flow grid point nearest to ``flow``."""
        return int(self.snap_many(flow))

    def snap_many(self, flow) -> np.ndarray:
        step = self.entry_flow / (self.quantization - 1)
        return np.clip(np.rint(np.asarray(flow, dtype=float) / step), 0, self.quantization - 1).astype(np.int64)

    def state(self, junction: int, flow_index: int) -> int:
        """State of 1-based ``junction``; junction J + 1 is the absorbing exit."""
        if junction == self.junctions + 1:
            return self.junctions * self.quantization
        return (junction - 1) * self.quantization + flow_index

    @property
    def exit_state(self) -> int:
        return self.junctions * self.quantization

    def decode(self, state: int) -> tuple[int, float]:
        if state == self.exit_state:
            return self.junctions + 1, 0.0
        j, k = divmod(state, self.quantization)
        return j + 1, float(self.flows[k])

    def planner_config(self) -> PlannerConfig:
        """Undiscounted exact planning over the J decisions."""
        return PlannerConfig(gamma=1.0, beta=100.0, iterations=self.junctions + 1, mode="hard")

    def reward(self, flow: float, a: float) -> float:
        """Negated flow-weighted travel time of the segments after one junction.

        The staying flow is the snapped f * a, so rounding never moves
        vehicles onto the highway without paying for the on-ramp.
        """
        return float(self.reward_table(flow, a))

    def reward_table(self, flow, a) -> np.ndarray:
        """Vectorized :meth:`reward` over broadcast flow and action arrays."""
        flow = np.asarray(flow, dtype=float)
        art, hw = self.arterial_time, self.highway_time
        stay = self.flows[self.snap_many(flow * np.asarray(a, dtype=float))]
        ramp, highway = flow - stay, self.entry_flow - stay
        return -(stay * art(stay) + ramp * hw(ramp) + highway * hw(highway))

    def to_json(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: dict[str, Any] | str) -> "ArterialSpec":
        if isinstance(doc, str):
            doc = json.loads(doc)
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown arterial spec fields: {sorted(unknown)}")
        return cls(**doc)


def closure_constraint(spec: ArterialSpec, junction: int, threshold: float = 0.0) -> ConstraintSet:
    """Forbid every stay fraction above ``threshold`` at ``junction`` for all flows."""
    if not 1 <= junction <= spec.junctions:
        raise ValueError(f"junction {junction} outside 1..{spec.junctions}")
    states = [spec.state(junction, k) for k in range(spec.quantization)]
    return region_constraint(states, Interval(threshold, 1.0), spec.quantization, spec.actions)


def build_arterial_mdp(spec: ArterialSpec, closure: ConstraintSet | None = None) -> tuple[Environment, np.ndarray]:
    q, n_j = spec.quantization, spec.junctions
    n_s = n_j * q + 1
    actions, flows = spec.actions, spec.flows
    nxt = np.full((n_s, q), spec.exit_state, dtype=np.int64)
    reward = np.zeros((n_s, q))
    per_junction = spec.reward_table(flows[:, None], actions[None, :])
    landing = spec.snap_many(flows[:, None] * actions[None, :])
    for j in range(1, n_j + 1):
        rows = slice(spec.state(j, 0), spec.state(j, 0) + q)
        reward[rows] = per_junction
        if j < n_j:
            nxt[rows] = spec.state(j + 1, 0) + landing
    sigma = np.zeros(n_s)
    sigma[spec.state(1, q - 1)] = 1.0
    labels = tuple(f"J{j}|f={f:.4g}" if j <= n_j else "exit" for j, f in map(spec.decode, range(n_s)))
    env = Environment.from_successors(
        sigma, nxt, state_labels=labels, action_labels=tuple(f"{a:.4g}" for a in actions),
        terminal=frozenset({spec.exit_state}),
    )
    r = as_reward(reward, env)
    if closure:
        r = apply_constraint(r, closure)
    return env, r
