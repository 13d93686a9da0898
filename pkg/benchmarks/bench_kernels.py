"""Time the compiled kernels against the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``.  Both
backends are imported directly, so the result does not depend on
STRATLINK_PURE_PYTHON.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from stratlink import _pykernels
from stratlink.envs import ArterialSpec, build_arterial_mdp, load_layout, parse_gridworld

try:
    from stratlink import _kernels
except ImportError:
    _kernels = None


def cases():
    world = parse_gridworld(load_layout("correlated"))
    yield "gridworld-correlated", world.env, np.asarray(world.reward), 250
    env, reward = build_arterial_mdp(ArterialSpec(junctions=10, quantization=100))
    yield "arterial-10x100", env, np.asarray(reward), 11


def bench(backend, env, reward, iterations, repeat):
    indptr, indices, probs = env.csr
    v0 = np.zeros(env.state_count)
    vi = lambda: backend.value_sweeps(indptr, indices, probs, reward, 100.0, 0.99, iterations, v0, True)
    policy = np.full((1, env.state_count, env.action_count), 1.0 / env.action_count)
    fw = lambda: backend.forward_visitation(indptr, indices, probs, policy, env.initial_dist, iterations)
    return min(timeit.repeat(vi, number=1, repeat=repeat)), min(timeit.repeat(fw, number=1, repeat=repeat))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if _kernels is None:
        print("compiled kernels not built; only the numpy fallback is available")
    print(f"{'case':<22} {'kernel':<20} {'numpy [ms]':>11} {'cython [ms]':>12} {'speed-up':>9}")
    for name, env, reward, iters in cases():
        py = bench(_pykernels, env, reward, iters, args.repeat)
        cy = bench(_kernels, env, reward, iters, args.repeat) if _kernels else (float("nan"),) * 2
        for kernel, p, c in zip(("value_sweeps", "forward_visitation"), py, cy):
            print(f"{name:<22} {kernel:<20} {p * 1e3:11.2f} {c * 1e3:12.2f} {p / c:8.1f}x")


if __name__ == "__main__":
    main()
