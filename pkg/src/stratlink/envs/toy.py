"""Two-state example where identical optimal policies differ in strategic links."""
from __future__ import annotations

import numpy as np

from ..mdp import Environment, as_reward

S1, S2 = 0, 1
A1, A2 = 0, 1


def toy_environment() -> tuple[Environment, np.ndarray, np.ndarray]:
    """Return (env, r_alpha, r_beta).

    A1 loops in place; A2 moves S1 -> S2 and loops at S2.  Under r_alpha the
    move to S2 only pays off through A2 at S2; under r_beta A2 is better
    everywhere on its own.
    """
    env = Environment.from_successors(
        [1.0, 0.0],
        np.array([[S1, S2], [S2, S2]]),
        state_labels=("S1", "S2"),
        action_labels=("A1", "A2"),
    )
    r_alpha = as_reward([[1.0, 0.5], [1.0, 2.5]], env)
    r_beta = as_reward([[1.0, 1.5], [1.0, 1.5]], env)
    return env, r_alpha, r_beta
