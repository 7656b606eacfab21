"""Independent oracles used by the test suite.

These deliberately avoid the library's solver paths: the QP oracle
enumerates active sets by brute force, and the geometry helpers recompute
quantities from first principles. Keep them dumb and obviously correct.
"""

from __future__ import annotations

import itertools

import numpy as np


def active_set_solve(P, q, G=None, h=None, A=None, b=None, tol=1e-9):
    """Brute-force QP oracle: enumerate every subset of inequality rows.

    For each subset treated as active, solve the equality KKT system,
    keep candidates that are primal feasible with nonnegative multipliers,
    and return the feasible candidate with the lowest objective as
    (x, objective). Returns None when no candidate passes (infeasible
    problem or a degenerate KKT system for every subset).

    Only intended for small problems (few inequality rows).
    """
    P = np.asarray(P, dtype=float)
    q = np.asarray(q, dtype=float).ravel()
    n = P.shape[0]
    G = np.zeros((0, n)) if G is None else np.atleast_2d(np.asarray(G, dtype=float))
    h = np.zeros(0) if h is None else np.asarray(h, dtype=float).ravel()
    A = np.zeros((0, n)) if A is None else np.atleast_2d(np.asarray(A, dtype=float))
    b = np.zeros(0) if b is None else np.asarray(b, dtype=float).ravel()
    mi = G.shape[0]

    best = None
    for r in range(mi + 1):
        for subset in itertools.combinations(range(mi), r):
            idx = list(subset)
            C = np.vstack([G[idx], A])
            d = np.concatenate([h[idx], b])
            ma = C.shape[0]
            K = np.zeros((n + ma, n + ma))
            K[:n, :n] = P
            K[:n, n:] = C.T
            K[n:, :n] = C
            rhs = np.concatenate([-q, d])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            if not np.all(np.isfinite(sol)):
                continue
            x = sol[:n]
            lam = sol[n : n + len(idx)]
            if len(idx) and np.min(lam) < -tol:
                continue
            if mi and np.max(G @ x - h) > tol:
                continue
            if A.shape[0] and np.max(np.abs(A @ x - b)) > tol:
                continue
            obj = 0.5 * x @ P @ x + q @ x
            if best is None or obj < best[1] - 1e-12:
                best = (x, obj)
    return best


def grid_search_1d(fn, lo, hi, points=1000):
    """Dense grid argmin of a scalar function on [lo, hi]."""
    xs = np.linspace(lo, hi, points)
    ys = np.array([fn(x) for x in xs])
    k = int(np.argmin(ys))
    return xs[k], ys[k]


def gaussian_falloff_weights(positions, center, sigma):
    """Straight-line recomputation of per-waypoint gaussian falloff weights."""
    positions = np.asarray(positions, dtype=float)
    center = np.asarray(center, dtype=float)
    out = []
    for p in positions:
        d = float(np.sqrt(np.sum((p - center) ** 2)))
        out.append(float(np.exp(-(d * d) / (2.0 * sigma * sigma))))
    return np.array(out)


def first_difference_matrix(n_waypoints, channels=4):
    """Explicit block first-order difference operator for a stacked vector."""
    rows = channels * (n_waypoints - 1)
    cols = 4 * n_waypoints
    D = np.zeros((rows, cols))
    for i in range(n_waypoints - 1):
        for c in range(channels):
            D[channels * i + c, 4 * i + c] = -1.0
            D[channels * i + c, 4 * (i + 1) + c] = 1.0
    return D
