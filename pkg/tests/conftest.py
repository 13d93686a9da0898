import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from stratlink.mdp import Environment

ACCEPTANCE = pytest.StashKey[list]()

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@st.composite
def random_mdps(draw, max_states=5, max_actions=3, deterministic=False):
    """(env, reward, tau as nested lists) with every row a valid distribution."""
    n_s = draw(st.integers(1, max_states))
    n_a = draw(st.integers(1, max_actions))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    if deterministic:
        nxt = rng.integers(0, n_s, size=(n_s, n_a))
        tau = np.zeros((n_s, n_a, n_s))
        tau[np.arange(n_s)[:, None], np.arange(n_a)[None, :], nxt] = 1.0
    else:
        tau = rng.random((n_s, n_a, n_s)) * (rng.random((n_s, n_a, n_s)) < 0.6)
        tau[:, :, 0] += 1e-3
        tau /= tau.sum(axis=2, keepdims=True)
    sigma = rng.random(n_s)
    sigma /= sigma.sum()
    reward = rng.normal(size=(n_s, n_a))
    return Environment.from_dense(sigma, tau), reward, tau.tolist()


@pytest.fixture
def toy():
    from stratlink.envs import toy_environment

    return toy_environment()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def record(request):
    """Log one "criterion N: PASS|FAIL detail" line for the end-of-run summary."""

    def log(label: str, ok: bool, detail: str) -> None:
        line = f"criterion {label}: {'PASS' if ok else 'FAIL'} {detail}"
        request.config.stash[ACCEPTANCE].append(line)
        print(line)

    return log
