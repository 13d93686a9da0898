"""Command-line entry point.

Exit codes: 0 success, 2 bad input, 3 infeasible constraint, 4 degenerate data.
Every run writes a JSON manifest listing the files it produced.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from . import __version__
from .envs.arterial import ArterialSpec
from .envs.gridworld import BUILTIN_LAYOUTS, LayoutError, load_layout, parse_gridworld
from .envs.shortcuts import shortcut_family
from .irl import arterial_problem, gridworld_problem, run_irl_experiment, shortcuts_problem, summarize_runs
from .linkscore import explanation_matrix
from .mdp import InfeasibleConstraintError
from .planners import PlannerConfig
from .recommend import RecommendationReport, evaluate_environment
from .traffic import (
    CountSeries,
    DegenerateCountsError,
    SimConfig,
    extract_policies,
    junction_link_scores,
    optimal_routing,
    simulate_drivers,
)

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_DEGENERATE = 0, 2, 3, 4

IRL_TEMPERATURES = (0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8)


class InputError(ValueError):
    """Bad command-line input; reported with exit status 2."""


@dataclass(frozen=True)
class RunManifest:
    subcommand: str
    config: dict[str, Any]
    seed: int
    outputs: tuple[str, ...]
    version: str = __version__

    def write(self, out_dir: Path) -> Path:
        path = out_dir / f"manifest-{self.subcommand.replace(' ', '-')}.json"
        doc = asdict(self)
        doc["outputs"] = sorted(self.outputs)
        path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
        return path


def _write_text(path: Path, text: str, written: list[Path]) -> None:
    path.write_text(text, encoding="utf-8")
    written.append(path)


def _finish(args: argparse.Namespace, name: str, config: dict[str, Any], written: Iterable[Path]) -> int:
    out = Path(args.out)
    rel = tuple(str(Path(p).relative_to(out)) for p in written)
    manifest = RunManifest(name, config, args.seed, rel).write(out)
    print(manifest)
    return EXIT_OK


def _planner(args: argparse.Namespace, **defaults: Any) -> PlannerConfig:
    values = {
        "gamma": args.gamma if args.gamma is not None else defaults.get("gamma", 0.99),
        "beta": args.beta if args.beta is not None else defaults.get("beta", 100.0),
        "iterations": args.iters if args.iters is not None else defaults.get("iterations", 250),
        "mode": args.mode if args.mode is not None else defaults.get("mode", "soft"),
    }
    try:
        return PlannerConfig(**values)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _map(fn: Callable, items: Sequence, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def cmd_explain(args: argparse.Namespace) -> int:
    source = Path(args.layout)
    if source.is_file():
        text, name = source.read_text(encoding="utf-8"), source.stem
    elif args.layout in BUILTIN_LAYOUTS:
        text, name = load_layout(args.layout), args.layout
    else:
        raise InputError(f"layout file not found: {args.layout}")
    try:
        world = parse_gridworld(text)
    except LayoutError as exc:
        raise InputError(f"bad layout {args.layout}: {exc}") from exc
    config = _planner(args)
    horizon = args.horizon or world.layout.horizon_cap
    matrix = explanation_matrix(world.env, world.reward, config, world.classes, horizon=horizon)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    _write_text(out / f"explain-{name}.dat", matrix.to_text(), written)
    steps = "".join(
        f"{t} {world.env.state_label(s)} {world.env.action_label(a)}\n" for t, (s, a) in enumerate(matrix.trajectory.decisions)
    )
    _write_text(out / f"explain-{name}-trajectory.dat", steps, written)
    return _finish(args, "explain", {"layout": name, "planner": asdict(config), "horizon": horizon}, written)


def cmd_recommend(args: argparse.Namespace) -> int:
    if args.n_envs < 1:
        raise InputError("--n-envs must be at least 1")
    try:
        specs = shortcut_family(args.n_envs, args.nodes, args.shortcuts, args.preps, args.cost, args.seed)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    config = _planner(args, iterations=2 * (args.nodes + args.preps))
    if args.threshold is not None and not 0.0 < args.threshold < 1.0:
        raise InputError("--threshold must lie in (0, 1)")
    reports = _map(_Evaluate(config, args.threshold), specs, args.threads)
    report = RecommendationReport(tuple(reports))
    written = report.write(Path(args.out))
    cfg = {
        "n_envs": args.n_envs, "nodes": args.nodes, "shortcuts": args.shortcuts, "preps": args.preps,
        "cost": args.cost, "threshold": args.threshold, "planner": asdict(config),
    }
    return _finish(args, "recommend", cfg, written)


class _Evaluate:
    """Picklable per-environment job for the worker pool."""

    def __init__(self, config: PlannerConfig, threshold: float | None):
        self.config, self.threshold = config, threshold

    def __call__(self, spec):
        return evaluate_environment(spec, self.config, self.threshold)


def _arterial_spec(args: argparse.Namespace) -> ArterialSpec:
    try:
        return ArterialSpec(
            junctions=args.junctions, entry_flow=args.entry_flow, quantization=args.quantization, alpha=args.alpha
        )
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _closure(args: argparse.Namespace, spec: ArterialSpec) -> int:
    raw = str(args.closure).upper().lstrip("J") if args.closure is not None else str(spec.junctions)
    try:
        junction = int(raw)
    except ValueError as exc:
        raise InputError(f"bad closure junction {args.closure!r}") from exc
    if not 1 <= junction <= spec.junctions:
        raise InputError(f"closure junction {junction} outside 1..{spec.junctions}")
    return junction


def _policy_text(values: Iterable[float]) -> str:
    return "".join(f"{j} {v:.10g}\n" for j, v in enumerate(values, 1))


def _write_policies(out: Path, pre, post, written: list[Path], prefix: str) -> None:
    _write_text(out / f"{prefix}-policy-pre.dat", _policy_text(pre.stay), written)
    _write_text(out / f"{prefix}-policy-post.dat", _policy_text(post.stay), written)
    _write_text(out / f"{prefix}-scores.dat", _policy_text(junction_link_scores(pre, post)), written)


def cmd_traffic(args: argparse.Namespace) -> int:
    out = Path(args.out)
    if args.traffic_mode == "analyze":
        src = Path(args.counts)
        if not src.is_dir():
            raise InputError(f"counts directory not found: {args.counts}")
        try:
            counts = CountSeries.read(src)
            pre, post = extract_policies(counts, args.settle)
        except DegenerateCountsError:
            raise
        except (OSError, ValueError, KeyError) as exc:
            raise InputError(f"cannot analyze counts in {src}: {exc}") from exc
        out.mkdir(parents=True, exist_ok=True)
        written: list[Path] = []
        _write_policies(out, pre, post, written, "sim")
        return _finish(args, "traffic analyze", {"counts": str(src), "settle": args.settle}, written)

    spec = _arterial_spec(args)
    closure = _closure(args, spec)
    cfg: dict[str, Any] = {"spec": spec.to_json(), "closure": closure}
    if args.traffic_mode == "rl":
        pre = optimal_routing(spec)
        post = optimal_routing(spec, closure)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        _write_policies(out, pre.policy, post.policy, written, "rl")
        return _finish(args, "traffic rl", cfg, written)

    try:
        sim = SimConfig(args.lookahead, args.update_period, args.update_weight, args.noise, not args.free_flow)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    if not 0 < args.closure_time < args.horizon:
        raise InputError("--closure-time must lie strictly inside the horizon")
    counts = simulate_drivers(spec, sim, args.closure_time, args.horizon, args.seed, closure)
    written = counts.write(out)
    cfg.update(sim=sim.to_json(), horizon=args.horizon, closure_time=args.closure_time)
    return _finish(args, "traffic sim", cfg, written)


class _IrlJob:
    def __init__(self, problem, demos: int, iterations: int, learning_rate: float | None):
        self.problem, self.demos, self.iterations, self.learning_rate = problem, demos, iterations, learning_rate

    def __call__(self, job: tuple[float, int]) -> dict:
        temperature, seed = job
        return run_irl_experiment(self.problem, 1.0 / temperature, seed, self.demos, self.iterations, self.learning_rate)


def cmd_irl(args: argparse.Namespace) -> int:
    temps = tuple(args.temperatures) if args.temperatures else IRL_TEMPERATURES
    if any(not t > 0 for t in temps) or args.seeds < 1 or args.demos < 1 or args.iterations < 0:
        raise InputError("temperatures must be positive and --seeds, --demos at least 1")
    if args.lr is not None and not 0.0 < args.lr < 1.0:
        raise InputError("--lr must lie in (0, 1)")
    try:
        if args.env == "gridworld":
            if args.layout not in BUILTIN_LAYOUTS:
                raise InputError(f"unknown layout {args.layout!r}")
            problem = gridworld_problem(args.layout)
        elif args.env == "shortcuts":
            problem = shortcuts_problem(args.n_envs, args.nodes, args.shortcuts, args.preps, args.cost, args.seed)
        else:
            problem = arterial_problem(args.junctions, args.quantization)
    except (ValueError, LayoutError) as exc:
        raise InputError(str(exc)) from exc
    jobs = [(t, args.seed + k) for t in temps for k in range(args.seeds)]
    runs = _map(_IrlJob(problem, args.demos, args.iterations, args.lr), jobs, args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for key, label in (("epic", "reward"), ("score_mse", "scores")):
        rows = summarize_runs(runs, key)
        for part, pick in (("mean", lambda m, s: m), ("lower", lambda m, s: m - s), ("upper", lambda m, s: m + s)):
            body = "".join(f"{t:.10g} {pick(m, s):.10g}\n" for t, m, s in rows)
            _write_text(out / f"irl-{args.env}-{label}-{part}.dat", body, written)
    _write_text(out / f"irl-{args.env}-runs.json", json.dumps(runs, indent=1, sort_keys=True) + "\n", written)
    cfg = {
        "env": args.env, "problem": problem.name, "temperatures": list(temps), "seeds": args.seeds,
        "demos": args.demos, "iterations": args.iterations, "learning_rate": args.lr or problem.learning_rate,
    }
    return _finish(args, "irl", cfg, written)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--threads", type=int, default=1, help="worker processes for independent runs")
    planner = argparse.ArgumentParser(add_help=False)
    planner.add_argument("--gamma", type=float)
    planner.add_argument("--beta", type=float)
    planner.add_argument("--iters", type=int)
    planner.add_argument("--mode", choices=("soft", "hard"))

    parser = argparse.ArgumentParser(prog="stratlink", description="Strategic link scores between planned decisions.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("explain", parents=[common, planner], help="score matrix along the most likely maze trajectory")
    p.add_argument("layout", help=f"layout file or built-in name ({', '.join(BUILTIN_LAYOUTS)})")
    p.add_argument("--horizon", type=int, help="cap on trajectory length (default: 4 x width x height)")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("recommend", parents=[common, planner], help="compare recommendation groupings on random shortcut envs")
    p.add_argument("--n-envs", type=int, default=100)
    p.add_argument("--nodes", "-N", type=int, default=10)
    p.add_argument("--shortcuts", "-I", type=int, default=5)
    p.add_argument("--preps", "-J", type=int, default=5)
    p.add_argument("--cost", "-C", type=float, default=0.1)
    p.add_argument("--threshold", type=float, help="link-score threshold (default half of 1/J)")
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("traffic", help="arterial/highway routing before and after a closure")
    tsub = p.add_subparsers(dest="traffic_mode", required=True)
    arterial = argparse.ArgumentParser(add_help=False)
    arterial.add_argument("--junctions", type=int, default=10)
    arterial.add_argument("--entry-flow", type=float, default=2.0)
    arterial.add_argument("--quantization", type=int, default=100)
    arterial.add_argument("--alpha", type=float, default=0.0, help="BPR congestion coefficient")
    arterial.add_argument("--closure", help="closed junction, e.g. J10 (default: last)")
    t = tsub.add_parser("rl", parents=[common, arterial], help="exact optimal routing")
    t.set_defaults(func=cmd_traffic)
    t = tsub.add_parser("sim", parents=[common, arterial], help="driver simulation, writes cumulative counts")
    t.add_argument("--horizon", type=int, default=50_000)
    t.add_argument("--closure-time", type=int, default=10_000)
    t.add_argument("--lookahead", type=int, default=1)
    t.add_argument("--update-period", type=int, default=500)
    t.add_argument("--update-weight", type=float, default=0.5)
    t.add_argument("--noise", type=float, default=0.01)
    t.add_argument("--free-flow", action="store_true", help="constant link times")
    t.set_defaults(func=cmd_traffic)
    t = tsub.add_parser("analyze", parents=[common], help="policies and scores from written counts")
    t.add_argument("counts", help="directory written by 'traffic sim'")
    t.add_argument("--settle", type=float, default=0.1, help="post-closure fraction skipped before fitting")
    t.set_defaults(func=cmd_traffic)

    p = sub.add_parser("irl", parents=[common], help="link scores from demonstrations across temperatures")
    p.add_argument("--env", choices=("gridworld", "shortcuts", "arterial"), default="gridworld")
    p.add_argument("--layout", default="simple")
    p.add_argument("--temperatures", type=float, nargs="+", help="1/beta values")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--demos", type=int, default=10_000)
    p.add_argument("--iterations", type=int, default=10_000)
    p.add_argument("--lr", type=float, help="Adam learning rate (default per environment)")
    p.add_argument("--n-envs", type=int, default=10)
    p.add_argument("--nodes", type=int, default=5)
    p.add_argument("--shortcuts", type=int, default=3)
    p.add_argument("--preps", type=int, default=3)
    p.add_argument("--cost", type=float, default=0.1)
    p.add_argument("--junctions", type=int, default=5)
    p.add_argument("--quantization", type=int, default=10)
    p.set_defaults(func=cmd_irl)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InfeasibleConstraintError as exc:
        print(f"infeasible constraint: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except DegenerateCountsError as exc:
        print(f"degenerate counts: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
