"""Procedurally generated chain environments with prepared shortcuts.

Nodes are numbered 1..N and the agent starts at node 1.  ``move`` advances
one node, ``jump<i>`` follows shortcut i once all of its preparations have
been made, and ``prep<j>`` sets preparation flag j at its node.  Invalid
actions cost -1 and leave the state unchanged.  Node N is absorbing.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np

from ..mdp import Environment, as_reward
from ..planners import PlannerConfig


@dataclass(frozen=True)
class Shortcut:
    start: int
    end: int
    requires: frozenset[int]

    def __post_init__(self) -> None:
        object.__setattr__(self, "requires", frozenset(int(j) for j in self.requires))

    @property
    def span(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class ShortcutsSpec:
    n_nodes: int
    n_preps: int
    cost: float
    shortcuts: tuple[Shortcut, ...] = ()
    prep_nodes: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        object.__setattr__(self, "shortcuts", tuple(self.shortcuts))
        if not self.prep_nodes:
            object.__setattr__(self, "prep_nodes", (1,) * self.n_preps)
        object.__setattr__(self, "prep_nodes", tuple(int(n) for n in self.prep_nodes))
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if self.n_nodes < 2:
            out.append(f"need at least 2 nodes, got {self.n_nodes}")
        if self.n_preps < 1:
            out.append(f"need at least 1 preparation, got {self.n_preps}")
        if not 0.0 < self.cost < 0.5:
            out.append(f"preparation cost must lie in (0, 1/2), got {self.cost}")
        if len(self.prep_nodes) != self.n_preps or any(n != 1 for n in self.prep_nodes):
            out.append("every preparation must sit at node 1")
        for i, sc in enumerate(self.shortcuts, 1):
            if not 1 <= sc.start < sc.end <= self.n_nodes:
                out.append(f"shortcut {i} has bad endpoints {sc.start}->{sc.end}")
            if not sc.requires or not sc.requires <= set(range(1, self.n_preps + 1)):
                out.append(f"shortcut {i} has bad preparation set {sorted(sc.requires)}")
        return out

    @property
    def n_shortcuts(self) -> int:
        return len(self.shortcuts)

    @property
    def n_flags(self) -> int:
        return 1 << self.n_preps

    @property
    def state_count(self) -> int:
        return self.n_nodes * self.n_flags

    @property
    def action_count(self) -> int:
        return 1 + self.n_shortcuts + self.n_preps

    def state(self, node: int, flags: int = 0) -> int:
        return (node - 1) * self.n_flags + flags

    def decode(self, state: int) -> tuple[int, int]:
        """(node, flag bits) of a state index; bit j-1 belongs to prep j."""
        node, flags = divmod(state, self.n_flags)
        return node + 1, flags

    def jump_action(self, i: int) -> int:
        return i

    def prep_action(self, j: int) -> int:
        return self.n_shortcuts + j

    def action_kind(self, action: int) -> tuple[str, int]:
        """("move", 0), ("jump", i) or ("prep", j) with 1-based i, j."""
        if action == 0:
            return "move", 0
        if action <= self.n_shortcuts:
            return "jump", action
        return "prep", action - self.n_shortcuts

    def action_labels(self) -> tuple[str, ...]:
        return ("move",) + tuple(f"jump{i}" for i in range(1, self.n_shortcuts + 1)) + tuple(
            f"prep{j}" for j in range(1, self.n_preps + 1)
        )

    def horizon(self) -> int:
        """Demonstration length N x J."""
        return self.n_nodes * self.n_preps

    def planner_config(self, beta: float = 100.0, gamma: float = 0.99) -> PlannerConfig:
        """Planner with twice as many sweeps as nodes plus preparations."""
        return PlannerConfig(gamma=gamma, beta=beta, iterations=2 * (self.n_nodes + self.n_preps))

    def to_json(self) -> dict[str, Any]:
        return {
            "N": self.n_nodes,
            "I": self.n_shortcuts,
            "J": self.n_preps,
            "C": self.cost,
            "shortcuts": [{"from": s.start, "to": s.end, "requires": sorted(s.requires)} for s in self.shortcuts],
            "prep_nodes": list(self.prep_nodes),
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any] | str) -> "ShortcutsSpec":
        if isinstance(doc, str):
            doc = json.loads(doc)
        shortcuts = tuple(Shortcut(int(s["from"]), int(s["to"]), frozenset(s["requires"])) for s in doc["shortcuts"])
        if "I" in doc and int(doc["I"]) != len(shortcuts):
            raise ValueError(f"I={doc['I']} but {len(shortcuts)} shortcuts listed")
        return cls(int(doc["N"]), int(doc["J"]), float(doc["C"]), shortcuts, tuple(doc.get("prep_nodes", ())))


def draw_shortcuts_spec(n_nodes: int, n_shortcuts: int, n_preps: int, cost: float, seed: int) -> ShortcutsSpec:
    """Random spec: uniform endpoint pairs and uniform-size random preparation sets."""
    if n_nodes < 2 or n_shortcuts < 1 or n_preps < 1 or not 0.0 < cost < 0.5:
        raise ValueError(f"invalid parameters N={n_nodes} I={n_shortcuts} J={n_preps} C={cost}")
    rng = np.random.default_rng(seed)
    shortcuts = []
    for _ in range(n_shortcuts):
        first = int(rng.integers(1, n_nodes + 1))
        second = int(rng.choice([n for n in range(1, n_nodes + 1) if n != first]))
        size = int(rng.integers(1, n_preps + 1))
        required: set[int] = set()
        for _ in range(size):
            required.add(int(rng.choice([j for j in range(1, n_preps + 1) if j not in required])))
        shortcuts.append(Shortcut(min(first, second), max(first, second), frozenset(required)))
    return ShortcutsSpec(n_nodes, n_preps, cost, tuple(shortcuts))


def generate_shortcuts(
    n_nodes: int, n_shortcuts: int, n_preps: int, cost: float, seed: int
) -> tuple[Environment, np.ndarray, ShortcutsSpec]:
    spec = draw_shortcuts_spec(n_nodes, n_shortcuts, n_preps, cost, seed)
    env, reward = build_shortcuts(spec)
    return env, reward, spec


def example_shortcuts(cost: float = 0.1) -> ShortcutsSpec:
    """Five nodes, four preparations; the two short jumps beat the long one."""
    return ShortcutsSpec(
        5, 4, cost,
        (
            Shortcut(2, 5, frozenset({3})),
            Shortcut(1, 3, frozenset({4})),
            Shortcut(3, 5, frozenset({1, 2})),
        ),
    )


def _jump_valid(sc: Shortcut, node: int, flags: int) -> bool:
    return node == sc.start and all(flags >> (j - 1) & 1 for j in sc.requires)


def shortcuts_reward(spec: ShortcutsSpec, state: int, action: int) -> float:
    """Reward of one decision; every action at node N is worth 0."""
    node, flags = spec.decode(state)
    n = spec.n_nodes
    if node == n:
        return 0.0
    kind, idx = spec.action_kind(action)
    if kind == "move":
        return -1.0 + n if node + 1 == n else -1.0
    if kind == "jump":
        sc = spec.shortcuts[idx - 1]
        if not _jump_valid(sc, node, flags):
            return -1.0
        value = -float(sc.span) + len(sc.requires) * 2.0 * spec.cost
        return value + n if sc.end == n else value
    return -spec.cost if node == spec.prep_nodes[idx - 1] else -1.0


def shortcuts_next(spec: ShortcutsSpec, state: int, action: int) -> int:
    node, flags = spec.decode(state)
    if node == spec.n_nodes:
        return state
    kind, idx = spec.action_kind(action)
    if kind == "move":
        return spec.state(node + 1, flags)
    if kind == "jump":
        sc = spec.shortcuts[idx - 1]
        return spec.state(sc.end, flags) if _jump_valid(sc, node, flags) else state
    if node == spec.prep_nodes[idx - 1]:
        return spec.state(node, flags | 1 << (idx - 1))
    return state


def build_shortcuts(spec: ShortcutsSpec) -> tuple[Environment, np.ndarray]:
    n_s, n_a = spec.state_count, spec.action_count
    nxt = np.array([[shortcuts_next(spec, s, a) for a in range(n_a)] for s in range(n_s)], dtype=np.int64)
    reward = np.array([[shortcuts_reward(spec, s, a) for a in range(n_a)] for s in range(n_s)])
    width = spec.n_preps
    labels = tuple(f"n{node}|{flags:0{width}b}" for node, flags in map(spec.decode, range(n_s)))
    sigma = np.zeros(n_s)
    sigma[spec.state(1)] = 1.0
    terminal = frozenset(spec.state(spec.n_nodes, f) for f in range(spec.n_flags))
    env = Environment.from_successors(sigma, nxt, state_labels=labels, action_labels=spec.action_labels(), terminal=terminal)
    return env, as_reward(reward, env)


def node_classes(spec: ShortcutsSpec) -> np.ndarray:
    """Decision-class map that ignores preparation flags."""
    classes = np.repeat(np.arange(spec.n_nodes), spec.n_flags)
    classes.flags.writeable = False
    return classes


def shortcut_family(count: int, n_nodes: int, n_shortcuts: int, n_preps: int, cost: float, seed: int) -> list[ShortcutsSpec]:
    """``count`` specs seeded ``seed``, ``seed + 1``, ..."""
    return [draw_shortcuts_spec(n_nodes, n_shortcuts, n_preps, cost, seed + k) for k in range(count)]


def prep_flags(spec: ShortcutsSpec, preps: Iterable[int]) -> int:
    bits = 0
    for j in preps:
        bits |= 1 << (int(j) - 1)
    return bits
