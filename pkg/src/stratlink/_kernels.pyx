# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled value-iteration and visitation kernels.

Transitions are passed in CSR form with one row per (state, action) pair,
row index ``s * n_actions + a``.  Rewards may hold ``-inf`` for forbidden
pairs; such entries are skipped in every reduction.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()


cdef inline double _backup(
    const cnp.int64_t[::1] indptr,
    const cnp.int64_t[::1] indices,
    const double[::1] probs,
    const double[::1] v,
    Py_ssize_t row,
    double r,
    double gamma,
) noexcept nogil:
    cdef double ev = 0.0, p, vn
    cdef Py_ssize_t j
    if r == -INFINITY:
        return -INFINITY
    for j in range(indptr[row], indptr[row + 1]):
        p = probs[j]
        if p > 0.0:
            vn = v[indices[j]]
            if vn == -INFINITY:
                return -INFINITY
            ev += p * vn
    return r + gamma * ev


def value_sweeps(
    const cnp.int64_t[::1] indptr,
    const cnp.int64_t[::1] indices,
    const double[::1] probs,
    const double[:, ::1] reward,
    double beta,
    double gamma,
    Py_ssize_t iterations,
    const double[::1] v0,
    bint soft,
):
    """Run ``iterations`` Bellman sweeps from ``v0``; return the last (Q, V)."""
    cdef Py_ssize_t n_s = reward.shape[0], n_a = reward.shape[1]
    cdef Py_ssize_t it, s, a
    cdef double m, tot, qq
    q_arr = np.empty((n_s, n_a), dtype=np.float64)
    v_arr = np.array(v0, dtype=np.float64, copy=True)
    w_arr = np.empty(n_s, dtype=np.float64)
    cdef double[:, ::1] q = q_arr
    cdef double[::1] v = v_arr
    cdef double[::1] w = w_arr
    cdef double[::1] tmp
    with nogil:
        for it in range(iterations):
            for s in range(n_s):
                m = -INFINITY
                for a in range(n_a):
                    qq = _backup(indptr, indices, probs, v, s * n_a + a, reward[s, a], gamma)
                    q[s, a] = qq
                    if qq > m:
                        m = qq
                if m == -INFINITY or not soft:
                    w[s] = m
                else:
                    tot = 0.0
                    for a in range(n_a):
                        if q[s, a] != -INFINITY:
                            tot += exp(beta * (q[s, a] - m))
                    w[s] = m + log(tot) / beta
            tmp = v
            v = w
            w = tmp
    return q_arr, np.asarray(v).copy()


def forward_visitation(
    const cnp.int64_t[::1] indptr,
    const cnp.int64_t[::1] indices,
    const double[::1] probs,
    const double[:, :, ::1] policies,
    const double[::1] initial,
    Py_ssize_t horizon,
):
    """Expected state-action visitation counts over ``horizon`` steps.

    ``policies`` holds either one stationary policy or one policy per step.
    """
    cdef Py_ssize_t n_s = policies.shape[1], n_a = policies.shape[2]
    cdef Py_ssize_t n_pol = policies.shape[0]
    cdef Py_ssize_t t, s, a, j, k, row
    cdef double mass
    mu_arr = np.zeros((n_s, n_a), dtype=np.float64)
    d_arr = np.array(initial, dtype=np.float64, copy=True)
    nd_arr = np.empty(n_s, dtype=np.float64)
    cdef double[:, ::1] mu = mu_arr
    cdef double[::1] d = d_arr
    cdef double[::1] nd = nd_arr
    cdef double[::1] tmp
    with nogil:
        for t in range(horizon):
            k = t if n_pol > 1 else 0
            nd[:] = 0.0
            for s in range(n_s):
                if d[s] == 0.0:
                    continue
                for a in range(n_a):
                    mass = d[s] * policies[k, s, a]
                    if mass == 0.0:
                        continue
                    mu[s, a] += mass
                    row = s * n_a + a
                    for j in range(indptr[row], indptr[row + 1]):
                        nd[indices[j]] += mass * probs[j]
            tmp = d
            d = nd
            nd = tmp
    return mu_arr
