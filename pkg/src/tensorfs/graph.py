"""Per-view similarity graphs.

A similarity graph ``S`` is an ``n x n`` nonnegative matrix with zero
diagonal whose *columns* lie on the probability simplex: ``S[:, i]`` holds
the affinities of sample ``i`` to every other sample.
"""
from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np
from scipy.spatial.distance import cdist

COLUMN_TOL = 1e-9


class LaplacianPair(NamedTuple):
    L: np.ndarray
    D: np.ndarray


def check_graph(S, tol=COLUMN_TOL):
    """Raise ``ValueError`` unless ``S`` is a valid similarity graph."""
    S = np.asarray(S)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("similarity graph must be square")
    if np.any(np.diag(S) != 0):
        raise ValueError("similarity graph diagonal must be exactly zero")
    if np.any(S < 0):
        raise ValueError("similarity graph has negative entries")
    err = np.abs(S.sum(axis=0) - 1.0).max()
    if err > tol:
        raise ValueError(f"column sums deviate from 1 by {err:.3g}")


def sq_distances(X):
    """Squared Euclidean distances between the columns of ``X``."""
    X = np.asarray(X, dtype=float)
    return cdist(X.T, X.T, "sqeuclidean")


def knn_graph(X, k: int):
    """Probabilistic-neighbour kNN graph over the columns (samples) of ``X``.

    For sample ``i`` with squared distances ``d_1 <= ... <= d_k <= d_{k+1}``
    to its nearest neighbours, ``S[j, i] = (d_{k+1} - d_j)_+ /
    sum_h (d_{k+1} - d_h)`` over the ``k`` nearest.  Ties in distance are
    broken by lower sample index.  If ``k = n - 1`` the farthest neighbour
    plays the role of ``d_{k+1}``; when all weights vanish (equidistant
    neighbours) they are spread uniformly.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[1]
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must lie in [1, {n - 1}], got {k}")
    dist = sq_distances(X)
    np.fill_diagonal(dist, np.inf)
    order = np.argsort(dist, axis=0, kind="stable")
    cols = np.arange(n)
    nbrs = order[:k]
    d_near = dist[nbrs, cols]
    d_next = dist[order[k], cols] if k < n - 1 else d_near[-1]
    w = np.clip(d_next[None, :] - d_near, 0.0, None)
    tot = w.sum(axis=0)
    flat = tot <= 0
    w[:, flat] = 1.0
    w /= w.sum(axis=0)
    S = np.zeros((n, n))
    S[nbrs, cols] = w
    return S


def degrees(S):
    """Degree vector of the symmetrised graph ``(S + S^T) / 2``."""
    return 0.5 * (S.sum(axis=1) + S.sum(axis=0))


def laplacian(S) -> LaplacianPair:
    """``L = D - (S + S^T) / 2`` with ``D`` the degree of the symmetrised graph.

    For symmetric ``S`` the degree equals the row sums of ``S``.  Using the
    symmetrised degree keeps ``L`` positive semidefinite with ``L 1 = 0``
    for any nonnegative ``S``.
    """
    S = np.asarray(S, dtype=float)
    D = np.diag(degrees(S))
    return LaplacianPair(D - 0.5 * (S + S.T), D)


def pairwise_penalty(Xhat, H):
    """``F[i, j] = ||Xhat[:, i] - Xhat[:, j]||^2 + ||H[i] - H[j]||^2``."""
    return sq_distances(Xhat) + sq_distances(np.asarray(H, dtype=float).T)


def _project_sorted(Q, valid):
    """Project every column of ``Q`` onto the simplex over ``valid`` rows.

    ``valid`` is a boolean mask of the same shape; invalid rows are forced to
    zero.  Sort-and-threshold algorithm, vectorised over columns.
    """
    Qm = np.where(valid, Q, -np.inf)
    m = valid.sum(axis=0)
    U = -np.sort(-Qm, axis=0)
    U = np.where(np.isfinite(U), U, 0.0)
    css = np.cumsum(U, axis=0)
    ks = np.arange(1, Q.shape[0] + 1)[:, None]
    cond = (U - (css - 1.0) / ks > 0) & (ks <= m[None, :])
    rho = Q.shape[0] - 1 - np.argmax(cond[::-1], axis=0)
    theta = (css[rho, np.arange(Q.shape[1])] - 1.0) / (rho + 1)
    return np.where(valid, np.maximum(Q - theta[None, :], 0.0), 0.0)


def project_simplex_zero(q, zero_idx: int):
    """Euclidean projection of ``q`` onto ``{s >= 0, sum s = 1, s[zero_idx] = 0}``."""
    q = np.asarray(q, dtype=float).reshape(-1, 1)
    if q.shape[0] < 2:
        raise ValueError("need at least two coordinates")
    valid = np.ones_like(q, dtype=bool)
    valid[zero_idx] = False
    return _project_sorted(q, valid)[:, 0]


def project_columns(Q):
    """Project column ``i`` of ``Q`` onto the simplex with ``S[i, i] = 0``."""
    Q = np.asarray(Q, dtype=float)
    valid = ~np.eye(Q.shape[0], dtype=bool)
    S = _project_sorted(Q, valid)
    np.fill_diagonal(S, 0.0)
    return S


def consensus_target(v: int, Ss: Sequence[np.ndarray], bhat):
    """``sum_{k != v} bhat[v, k] S^(k)``."""
    out = np.zeros_like(Ss[v], dtype=float)
    for k, Sk in enumerate(Ss):
        if k != v:
            out += bhat[v, k] * Sk
    return out


def similarity_target(v: int, Ss: Sequence[np.ndarray], bhat, F_v,
                      penalty_scale: float = 0.5):
    """Unconstrained target ``Q^(v)`` of the column-wise graph subproblem.

    ``Q = (C + sum_{k != v} b[k, v] R^(k) - penalty_scale * F) /
    (1 + sum_{k != v} b[k, v]^2)`` with ``C = consensus_target(v)`` and
    ``R^(k) = S^(k) - sum_{t != k, v} b[k, t] S^(t)``.  The trade-off ``tau``
    scales every graph term alike and cancels here.
    """
    V = len(Ss)
    num = consensus_target(v, Ss, bhat) - penalty_scale * np.asarray(F_v, dtype=float)
    den = 1.0
    for k in range(V):
        if k == v:
            continue
        b = bhat[k, v]
        if b == 0:
            continue
        R = Ss[k].astype(float, copy=True)
        for t in range(V):
            if t != k and t != v:
                R -= bhat[k, t] * Ss[t]
        num += b * R
        den += b * b
    return num / den


def update_similarity(v: int, Ss: Sequence[np.ndarray], bhat, F_v,
                      penalty_scale: float = 0.5):
    """Refresh ``S^(v)`` by projecting each column of its target onto the simplex."""
    return project_columns(similarity_target(v, Ss, bhat, F_v, penalty_scale))


def graph_objective_terms(Ss, Xhats, H, bhat):
    """Return ``(smoothness, consensus)`` summed over views.

    smoothness = sum_v 1/2 sum_ij ||x_i - x_j||^2 S_ij + Tr(H^T L^(v) H)
    consensus  = sum_v ||S^(v) - sum_{k != v} bhat[v, k] S^(k)||_F^2
    """
    H = np.asarray(H, dtype=float)
    smooth = 0.0
    cons = 0.0
    for v, (S, X) in enumerate(zip(Ss, Xhats)):
        smooth += 0.5 * float(np.sum(sq_distances(X) * S))
        smooth += float(np.trace(H.T @ laplacian(S).L @ H))
        cons += float(np.sum((S - consensus_target(v, Ss, bhat)) ** 2))
    return smooth, cons
