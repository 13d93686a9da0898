"""Routing behaviour on the arterial/highway network, probed by closing a link.

Two sources of routing policies are supported: exact optimal routing on the
flow-augmented MDP, and a simplified driver simulator whose cumulative
junction counts are turned into policies by fitting flow rates before and
after an intervention.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .envs.arterial import ArterialSpec, build_arterial_mdp, closure_constraint
from .planners import greedy_policy, q_values


BPR_ALPHA = 0.15


class DegenerateCountsError(ValueError):
    """A junction carried no traffic in a fitting window, so its policy is undefined."""


@dataclass(frozen=True)
class FlowPolicy:
    """Arterial-stay frequency per junction J1..JJ."""

    stay: tuple[float, ...]

    def __post_init__(self) -> None:
        vals = tuple(float(x) for x in self.stay)
        if any(not 0.0 <= x <= 1.0 for x in vals):
            raise ValueError("arterial frequencies must lie in [0, 1]")
        object.__setattr__(self, "stay", vals)

    def __len__(self) -> int:
        return len(self.stay)

    def __getitem__(self, junction: int) -> float:
        """Frequency at 1-based ``junction``."""
        return self.stay[junction - 1]

    def as_array(self) -> np.ndarray:
        return np.array(self.stay)


@dataclass(frozen=True)
class RoutingResult:
    policy: FlowPolicy
    arterial_flows: tuple[float, ...]
    highway_flows: tuple[float, ...]
    total_time: float


def optimal_routing(spec: ArterialSpec, closure: int | None = None) -> RoutingResult:
    """Exact optimal routing: plan on the flow-augmented MDP, then roll out from the entry flow."""
    constraint = closure_constraint(spec, closure) if closure is not None else None
    env, reward = build_arterial_mdp(spec, constraint)
    q, _ = q_values(env, reward, spec.planner_config())
    policy = greedy_policy(q)
    actions = spec.actions
    k = spec.quantization - 1
    stays, art, hw = [], [], []
    total = 0.0
    for j in range(1, spec.junctions + 1):
        s = spec.state(j, k)
        ai = int(np.argmax(policy[s]))
        a = float(actions[ai])
        total -= reward[s, ai]
        stays.append(a)
        k = spec.snap(spec.flows[k] * a)
        art.append(float(spec.flows[k]))
        hw.append(spec.entry_flow - float(spec.flows[k]))
    return RoutingResult(FlowPolicy(tuple(stays)), tuple(art), tuple(hw), float(total))


def policy_cost(spec: ArterialSpec, stays, closure: int | None = None) -> float:
    """Total weighted travel time of a flow-free policy on the quantized grid (inf if it breaks the closure)."""
    k = spec.quantization - 1
    total = 0.0
    for j, a in enumerate(stays, 1):
        if closure == j and a > 0:
            return float("inf")
        total -= spec.reward(float(spec.flows[k]), float(a))
        k = spec.snap(spec.flows[k] * a)
    return total


def junction_link_scores(pre: FlowPolicy, post: FlowPolicy) -> np.ndarray:
    """Drop in arterial frequency at each junction caused by the intervention."""
    if len(pre) != len(post):
        raise ValueError(f"policies cover {len(pre)} and {len(post)} junctions")
    return pre.as_array() - post.as_array()


@dataclass(frozen=True)
class CountSeries:
    """Cumulative vehicle counts per junction; column t counts vehicles before the end of step t."""

    arterial: np.ndarray
    highway: np.ndarray
    closure_time: int

    def __post_init__(self) -> None:
        art = np.asarray(self.arterial, dtype=np.int64)
        hw = np.asarray(self.highway, dtype=np.int64)
        if art.shape != hw.shape or art.ndim != 2:
            raise ValueError("arterial and highway counts need the same (junctions, steps) shape")
        if np.any(np.diff(art, axis=1) < 0) or np.any(np.diff(hw, axis=1) < 0):
            raise ValueError("cumulative counts must be non-decreasing")
        art.flags.writeable = False
        hw.flags.writeable = False
        object.__setattr__(self, "arterial", art)
        object.__setattr__(self, "highway", hw)

    @property
    def junctions(self) -> int:
        return self.arterial.shape[0]

    @property
    def steps(self) -> int:
        return self.arterial.shape[1]

    def write(self, out_dir: str | Path, prefix: str = "cars-sim-vehicles") -> list[Path]:
        """One "time count" file per junction and road, plus a JSON header."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        times = np.arange(self.steps)
        for road, table in (("arterial", self.arterial), ("highway", self.highway)):
            for j in range(self.junctions):
                path = out / f"{prefix}-{road}-j{j}.dat"
                body = "\n".join(f"{t} {c}" for t, c in zip(times, table[j]))
                path.write_text(body + "\n", encoding="utf-8")
                paths.append(path)
        meta = out / f"{prefix}.json"
        meta.write_text(json.dumps({"junctions": self.junctions, "steps": self.steps, "closure_time": self.closure_time}), encoding="utf-8")
        paths.append(meta)
        return paths

    @classmethod
    def read(cls, in_dir: str | Path, prefix: str = "cars-sim-vehicles") -> "CountSeries":
        src = Path(in_dir)
        meta = json.loads((src / f"{prefix}.json").read_text(encoding="utf-8"))
        tables = {}
        for road in ("arterial", "highway"):
            rows = []
            for j in range(meta["junctions"]):
                data = np.loadtxt(src / f"{prefix}-{road}-j{j}.dat", dtype=np.int64, ndmin=2)
                if data.shape[0] != meta["steps"] or np.any(data[:, 0] != np.arange(meta["steps"])):
                    raise ValueError(f"{road} counts for junction {j + 1} do not cover steps 0..{meta['steps'] - 1}")
                rows.append(data[:, 1])
            tables[road] = np.vstack(rows)
        return cls(tables["arterial"], tables["highway"], int(meta["closure_time"]))


def _slopes(table: np.ndarray, lo: int, hi: int) -> np.ndarray:
    t = np.arange(lo, hi, dtype=float)
    y = table[:, lo:hi].astype(float)
    tc = t - t.mean()
    return (y - y.mean(axis=1, keepdims=True)) @ tc / (tc @ tc)


def flow_rates(counts: CountSeries, settle: float = 0.1) -> dict[str, np.ndarray]:
    """Least-squares vehicles-per-step rates on each road before and after the closure."""
    tc, n = counts.closure_time, counts.steps
    if not 2 <= tc <= n - 2:
        raise ValueError(f"closure time {tc} must fall strictly inside the {n}-step series")
    if not 0.0 <= settle < 1.0:
        raise ValueError(f"settle fraction must lie in [0, 1), got {settle}")
    start = tc + int(settle * (n - tc))
    if n - start < 2:
        raise ValueError("settle-in window leaves fewer than two post-closure steps")
    return {
        "pre-arterial": _slopes(counts.arterial, 0, tc),
        "pre-highway": _slopes(counts.highway, 0, tc),
        "post-arterial": _slopes(counts.arterial, start, n),
        "post-highway": _slopes(counts.highway, start, n),
    }


def extract_policies(counts: CountSeries, settle: float = 0.1) -> tuple[FlowPolicy, FlowPolicy]:
    """(pre, post) arterial frequencies from normalized flow rates."""
    rates = flow_rates(counts, settle)
    out = []
    for phase in ("pre", "post"):
        art = np.maximum(rates[f"{phase}-arterial"], 0.0)
        hw = np.maximum(rates[f"{phase}-highway"], 0.0)
        total = art + hw
        dead = np.flatnonzero(total <= 1e-12)
        if dead.size:
            raise DegenerateCountsError(f"no {phase}-closure traffic at junction J{int(dead[0]) + 1}")
        out.append(FlowPolicy(tuple(np.clip(art / total, 0.0, 1.0))))
    return out[0], out[1]


@dataclass(frozen=True)
class SimConfig:
    """Knobs of the iterated route-choice simulator.

    Drivers at a junction compare staying with diverting using shared
    link-time estimates, looking ``lookahead`` junction decisions ahead;
    links beyond that are assumed open at their last estimated time.
    Estimates move toward observed times every ``update_period`` steps with
    weight ``update_weight``.  ``noise`` is the logit temperature relative
    to the cheaper option's cost.  With ``congestion`` on, link times follow
    the BPR curve (the ArterialSpec alpha, or 0.15 for a free-flow ArterialSpec).
    """

    lookahead: int = 1
    update_period: int = 500
    update_weight: float = 0.5
    noise: float = 0.01
    congestion: bool = True

    def __post_init__(self) -> None:
        if self.lookahead < 0 or self.update_period < 1:
            raise ValueError("lookahead must be >= 0 and update_period >= 1")
        if not 0.0 < self.update_weight <= 1.0 or not self.noise > 0:
            raise ValueError("update_weight must lie in (0, 1] and noise must be positive")

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class _Estimates:
    arterial: np.ndarray
    ramp: np.ndarray
    highway: np.ndarray
    closed: np.ndarray


def _choice_costs(est: _Estimates, junction: int, depth: int) -> tuple[float, float]:
    """(stay, divert) estimated times to the exit from 0-based ``junction``."""
    divert = est.ramp[junction] + est.highway[junction:].sum()
    if est.closed[junction]:
        return float("inf"), float(divert)
    rest = _cost_to_go(est, junction + 1, depth - 1)
    return float(est.arterial[junction] + rest), float(divert)


def _cost_to_go(est: _Estimates, junction: int, depth: int) -> float:
    if junction >= len(est.arterial):
        return 0.0
    if depth < 0:
        return float(est.arterial[junction:].sum())
    return min(_choice_costs(est, junction, depth))


def simulate_drivers(
    spec: ArterialSpec,
    sim: SimConfig = SimConfig(),
    closure_time: int = 10_000,
    horizon: int = 50_000,
    seed: int = 0,
    closure: int | None = None,
) -> CountSeries:
    """Cumulative per-junction counts from iterated logit route choice.

    Each step ``entry_flow`` vehicles (fractional parts carried over) enter
    and are routed junction by junction with binomial draws.  From
    ``closure_time`` on, the arterial link after junction ``closure``
    (default the last) is removed and every vehicle there diverts.
    """
    if not 0 < closure_time < horizon:
        raise ValueError(f"closure time {closure_time} must lie in (0, {horizon})")
    n_j = spec.junctions
    closed_at = n_j if closure is None else int(closure)
    if not 1 <= closed_at <= n_j:
        raise ValueError(f"closure junction {closed_at} outside 1..{n_j}")
    alpha = (spec.alpha or BPR_ALPHA) if sim.congestion else 0.0
    timing = replace(spec, alpha=alpha)
    art_t, hw_t = timing.arterial_time, timing.highway_time
    rng = np.random.default_rng(seed)
    est = _Estimates(
        np.full(n_j, float(art_t(0.0))), np.full(n_j, float(hw_t(0.0))), np.full(n_j, float(hw_t(0.0))),
        np.zeros(n_j, dtype=bool),
    )
    art_counts = np.zeros((n_j, horizon), dtype=np.int64)
    hw_counts = np.zeros((n_j, horizon), dtype=np.int64)
    window_art = np.zeros(n_j)
    window_ramp = np.zeros(n_j)
    window_len = 0
    carry = 0.0
    p_stay = _stay_probabilities(est, sim)
    run_art = np.zeros(n_j, dtype=np.int64)
    run_hw = np.zeros(n_j, dtype=np.int64)
    for t in range(horizon):
        if t == closure_time:
            est.closed[closed_at - 1] = True
            p_stay = _stay_probabilities(est, sim)
        carry += spec.entry_flow
        arriving = int(carry)
        carry -= arriving
        for j in range(n_j):
            stay = int(rng.binomial(arriving, p_stay[j])) if arriving else 0
            run_art[j] += stay
            run_hw[j] += arriving - stay
            window_art[j] += stay
            window_ramp[j] += arriving - stay
            arriving = stay
        art_counts[:, t] = run_art
        hw_counts[:, t] = run_hw
        window_len += 1
        if window_len == sim.update_period:
            f_art = window_art / window_len
            f_ramp = window_ramp / window_len
            f_hw = np.cumsum(f_ramp)
            w = sim.update_weight
            observed_art = art_t(f_art)
            used = f_art > 0
            est.arterial[used] = (1 - w) * est.arterial[used] + w * observed_art[used]
            est.ramp = (1 - w) * est.ramp + w * hw_t(f_ramp)
            est.highway = (1 - w) * est.highway + w * hw_t(f_hw)
            window_art[:] = 0.0
            window_ramp[:] = 0.0
            window_len = 0
            p_stay = _stay_probabilities(est, sim)
    return CountSeries(art_counts, hw_counts, closure_time)


def _stay_probabilities(est: _Estimates, sim: SimConfig) -> np.ndarray:
    out = np.empty(len(est.arterial))
    for j in range(len(out)):
        stay, divert = _choice_costs(est, j, sim.lookahead)
        if not np.isfinite(stay):
            out[j] = 0.0
            continue
        z = (divert - stay) / (sim.noise * min(stay, divert))
        out[j] = 1.0 / (1.0 + np.exp(-np.clip(z, -700, 700)))
    return out
