"""Finite MDPs: environments, reward tables, policies, trajectories and returns.

States and actions are dense integer indices.  Transitions are stored as a
sparse matrix with one row per (state, action) pair so that large but sparse
models (the flow-augmented traffic MDP) stay cheap.  Forbidden decisions are
expressed in reward tables with ``-inf``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
import scipy.sparse as sp

NEG_INF = float("-inf")
PROB_TOL = 1e-9


class InfeasibleConstraintError(ValueError):
    """A constraint or reward mask leaves some state without any allowed action."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Environment:
    """E = (S, A, sigma, tau) with optional labels and absorbing terminal states.

    ``transitions`` is a CSR matrix of shape (S*A, S); row ``s*A + a`` holds
    tau(. | s, a).
    """

    initial_dist: np.ndarray
    transitions: sp.csr_matrix
    state_labels: tuple[str, ...] | None = None
    action_labels: tuple[str, ...] | None = None
    terminal: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        sigma = np.asarray(self.initial_dist, dtype=np.float64).copy()
        trans = sp.csr_matrix(self.transitions, dtype=np.float64, copy=True)
        trans.sum_duplicates()
        trans.sort_indices()
        n_s = sigma.shape[0]
        if trans.shape[1] != n_s or trans.shape[0] % max(n_s, 1) != 0:
            raise ValueError(f"transition matrix shape {trans.shape} does not fit {n_s} states")
        object.__setattr__(self, "initial_dist", _frozen(sigma))
        object.__setattr__(self, "transitions", trans)
        object.__setattr__(self, "terminal", frozenset(int(s) for s in self.terminal))
        indptr = _frozen(trans.indptr.astype(np.int64))
        indices = _frozen(trans.indices.astype(np.int64))
        probs = _frozen(trans.data.astype(np.float64))
        object.__setattr__(self, "_csr", (indptr, indices, probs))

    @classmethod
    def from_dense(cls, initial_dist: Sequence[float], tau: np.ndarray, **kwargs: Any) -> "Environment":
        tau = np.asarray(tau, dtype=np.float64)
        n_s, n_a, _ = tau.shape
        return cls(np.asarray(initial_dist, dtype=np.float64), sp.csr_matrix(tau.reshape(n_s * n_a, n_s)), **kwargs)

    @classmethod
    def from_successors(cls, initial_dist: Sequence[float], next_state: np.ndarray, **kwargs: Any) -> "Environment":
        """Deterministic environment from an (S, A) table of successor indices."""
        next_state = np.asarray(next_state, dtype=np.int64)
        n_s, n_a = next_state.shape
        rows = np.arange(n_s * n_a)
        trans = sp.csr_matrix((np.ones(n_s * n_a), (rows, next_state.ravel())), shape=(n_s * n_a, n_s))
        return cls(np.asarray(initial_dist, dtype=np.float64), trans, **kwargs)

    @property
    def state_count(self) -> int:
        return int(self.initial_dist.shape[0])

    @property
    def action_count(self) -> int:
        return int(self.transitions.shape[0] // self.state_count)

    @property
    def csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(indptr, indices, probs) arrays of the transition matrix as int64/float64."""
        return self._csr  # type: ignore[attr-defined]

    @property
    def tau(self) -> np.ndarray:
        """Dense (S, A, S) transition tensor.  Only sensible for small models."""
        return self.transitions.toarray().reshape(self.state_count, self.action_count, self.state_count)

    def successors(self, state: int, action: int) -> tuple[np.ndarray, np.ndarray]:
        indptr, indices, probs = self.csr
        row = state * self.action_count + action
        lo, hi = indptr[row], indptr[row + 1]
        keep = probs[lo:hi] > 0
        return indices[lo:hi][keep], probs[lo:hi][keep]

    def is_deterministic(self) -> bool:
        _, _, probs = self.csr
        counts = np.diff(self.transitions.indptr)
        return bool(np.all(counts == 1) and np.all(probs == 1.0))

    def next_state_table(self) -> np.ndarray:
        """(S, A) successor table; raises if transitions are stochastic."""
        if not self.is_deterministic():
            raise ValueError("environment has stochastic transitions")
        return self.csr[1].reshape(self.state_count, self.action_count)

    def step(self, state: int, action: int, rng: np.random.Generator | None = None) -> int:
        nxt, probs = self.successors(state, action)
        if len(nxt) == 1:
            return int(nxt[0])
        if rng is None:
            raise ValueError("stochastic transition needs a random generator")
        return int(rng.choice(nxt, p=probs / probs.sum()))

    def reachable(self, starts: Sequence[int] | None = None) -> np.ndarray:
        """Boolean mask of states reachable from ``starts`` (default: support of sigma)."""
        if starts is None:
            starts = np.flatnonzero(self.initial_dist > 0)
        seen = np.zeros(self.state_count, dtype=bool)
        stack = list(int(s) for s in starts)
        seen[stack] = True
        while stack:
            s = stack.pop()
            for a in range(self.action_count):
                for nxt in self.successors(s, a)[0]:
                    if not seen[nxt]:
                        seen[nxt] = True
                        stack.append(int(nxt))
        return seen

    def state_label(self, s: int) -> str:
        return self.state_labels[s] if self.state_labels else str(s)

    def action_label(self, a: int) -> str:
        return self.action_labels[a] if self.action_labels else str(a)


def validate_environment(env: Environment) -> list[str]:
    """Return a list of violated invariants; empty when the environment is valid."""
    problems = []
    sigma = env.initial_dist
    if np.any(sigma < 0) or abs(sigma.sum() - 1.0) > PROB_TOL:
        problems.append(f"initial_dist sums to {sigma.sum():.12g}, expected 1")
    if np.any(env.transitions.data < 0):
        problems.append("transition table has negative probabilities")
    sums = np.asarray(env.transitions.sum(axis=1)).ravel()
    n_a = env.action_count
    for row in np.flatnonzero(np.abs(sums - 1.0) > PROB_TOL):
        s, a = divmod(int(row), n_a)
        problems.append(f"transition row (state {s}, action {a}) sums to {sums[row]:.12g}")
    if env.state_labels is not None and len(env.state_labels) != env.state_count:
        problems.append("state_labels length does not match state_count")
    if env.action_labels is not None and len(env.action_labels) != n_a:
        problems.append("action_labels length does not match action_count")
    return problems


def as_reward(values: Any, env: Environment | None = None) -> np.ndarray:
    """Validate and freeze a state x action reward table (finite or -inf)."""
    r = np.array(values, dtype=np.float64)
    if r.ndim != 2:
        raise ValueError(f"reward table must be 2-d, got shape {r.shape}")
    if np.isnan(r).any() or np.isposinf(r).any():
        raise ValueError("reward entries must be finite or -inf")
    if env is not None and r.shape != (env.state_count, env.action_count):
        raise ValueError(f"reward shape {r.shape} does not match environment")
    return _frozen(r)


def check_policy(policy: np.ndarray, env: Environment | None = None) -> None:
    p = np.asarray(policy)
    if env is not None and p.shape != (env.state_count, env.action_count):
        raise ValueError(f"policy shape {p.shape} does not match environment")
    if np.any(p < 0) or np.any(p > 1) or np.any(np.abs(p.sum(axis=-1) - 1.0) > PROB_TOL):
        raise ValueError("policy rows must be probability vectors")


def greedy_action(probs: np.ndarray, tol: float = 1e-12) -> int:
    """Most likely action; near-ties go to the lowest index."""
    probs = np.asarray(probs)
    return int(np.flatnonzero(probs >= probs.max() - tol)[0])


@dataclass(frozen=True)
class Trajectory:
    """Ordered (state, action) decisions.  ``truncated`` marks a horizon cap hit."""

    states: tuple[int, ...]
    actions: tuple[int, ...]
    final_state: int | None = None
    truncated: bool = False

    def __post_init__(self) -> None:
        if len(self.states) != len(self.actions):
            raise ValueError("states and actions differ in length")

    @property
    def decisions(self) -> list[tuple[int, int]]:
        return list(zip(self.states, self.actions))

    @property
    def horizon(self) -> int:
        return len(self.states)

    def __len__(self) -> int:
        return len(self.states)


def rollout(env: Environment, policy: np.ndarray, horizon: int, seed: int | None = None) -> Trajectory:
    """Sample ``horizon`` decisions with s_1 ~ sigma, a_t ~ pi(s_t), s_{t+1} ~ tau."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    check_policy(policy, env)
    rng = np.random.default_rng(seed)
    s = int(rng.choice(env.state_count, p=env.initial_dist))
    states, actions = [], []
    for _ in range(horizon):
        a = int(rng.choice(env.action_count, p=policy[s]))
        states.append(s)
        actions.append(a)
        s = env.step(s, a, rng)
    return Trajectory(tuple(states), tuple(actions), final_state=s)


def expected_return(env: Environment, policy: np.ndarray, reward: np.ndarray, gamma: float, horizon: int) -> float:
    """E[sum_{t<horizon} gamma^t r(s_t, a_t)] by exact propagation of state distributions."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    check_policy(policy, env)
    reward = np.asarray(reward, dtype=np.float64)
    d = env.initial_dist.copy()
    total, disc = 0.0, 1.0
    for _ in range(horizon):
        mass = d[:, None] * policy
        live = mass > 0
        if np.any(np.isneginf(reward[live])):
            return NEG_INF
        total += disc * float(np.sum(mass[live] * reward[live]))
        disc *= gamma
        d = env.transitions.T @ mass.ravel()
    return total


def _encode_reward(r: np.ndarray) -> list[list[float | str]]:
    return [["-inf" if np.isneginf(x) else float(x) for x in row] for row in r]


def _decode_reward(rows: list[list[float | str]]) -> np.ndarray:
    return np.array([[NEG_INF if x == "-inf" else float(x) for x in row] for row in rows], dtype=np.float64)


def environment_to_json(env: Environment, reward: np.ndarray | None = None) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "states": env.state_count,
        "actions": env.action_count,
        "sigma": env.initial_dist.tolist(),
        "tau": env.tau.tolist(),
        "labels": {
            "states": list(env.state_labels) if env.state_labels else None,
            "actions": list(env.action_labels) if env.action_labels else None,
        },
        "terminal": sorted(env.terminal),
    }
    if reward is not None:
        doc["reward"] = _encode_reward(np.asarray(reward))
    return doc


def environment_from_json(doc: dict[str, Any] | str) -> tuple[Environment, np.ndarray | None]:
    if isinstance(doc, str):
        doc = json.loads(doc)
    labels = doc.get("labels") or {}
    env = Environment.from_dense(
        doc["sigma"],
        np.asarray(doc["tau"], dtype=np.float64),
        state_labels=tuple(labels["states"]) if labels.get("states") else None,
        action_labels=tuple(labels["actions"]) if labels.get("actions") else None,
        terminal=frozenset(doc.get("terminal", ())),
    )
    if env.state_count != doc["states"] or env.action_count != doc["actions"]:
        raise ValueError("declared state/action counts do not match tau")
    reward = as_reward(_decode_reward(doc["reward"]), env) if "reward" in doc else None
    return env, reward
