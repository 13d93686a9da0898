"""Pure numpy versions of the compiled kernels, same signatures."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp


def _as_csr(indptr, indices, probs, n_cols: int) -> sp.csr_matrix:
    n_rows = len(indptr) - 1
    return sp.csr_matrix((probs, indices, indptr), shape=(n_rows, n_cols))


def value_sweeps(indptr, indices, probs, reward, beta, gamma, iterations, v0, soft):
    n_s, n_a = reward.shape
    trans = _as_csr(indptr, indices, probs, n_s)
    support = trans.copy()
    support.data = (support.data > 0).astype(np.float64)
    v = np.array(v0, dtype=np.float64, copy=True)
    q = np.full((n_s, n_a), -np.inf)
    forbidden = np.isneginf(reward)
    with np.errstate(invalid="ignore", divide="ignore"):
        for _ in range(iterations):
            dead = np.isneginf(v)
            ev = trans @ np.where(dead, 0.0, v)
            if dead.any():
                ev[(support @ dead.astype(np.float64)) > 0] = -np.inf
            q = reward + gamma * ev.reshape(n_s, n_a)
            q[forbidden] = -np.inf
            m = q.max(axis=1)
            if soft:
                shift = np.where(np.isfinite(m), m, 0.0)
                tot = np.exp(beta * (q - shift[:, None])).sum(axis=1)
                v = np.where(np.isfinite(m), shift + np.log(tot) / beta, -np.inf)
            else:
                v = m
    return q, v


def forward_visitation(indptr, indices, probs, policies, initial, horizon):
    n_pol, n_s, n_a = policies.shape
    trans = _as_csr(indptr, indices, probs, n_s)
    mu = np.zeros((n_s, n_a))
    d = np.array(initial, dtype=np.float64, copy=True)
    for t in range(horizon):
        pol = policies[t if n_pol > 1 else 0]
        mass = d[:, None] * pol
        mu += mass
        d = trans.T @ mass.ravel()
    return mu
