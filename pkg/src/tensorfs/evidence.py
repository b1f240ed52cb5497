"""Subjective-logic belief masses between views.

Evidence that view ``v`` resembles view ``k`` is the normalised inner product
of their view-specific factor rows.  Dirichlet concentrations ``alpha =
e + 1`` then give belief masses ``bhat[v, k] = e[v, k] / T_v`` and an
uncertainty mass ``u[v] = (V - 1) / T_v``, where ``T_v`` sums ``alpha`` over
``k != v``.  Only ``bhat`` feeds back into the optimisation; ``u`` is kept for
diagnostics.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BeliefState:
    bhat: np.ndarray
    u: np.ndarray
    evidence: np.ndarray
    alpha: np.ndarray


def view_similarity(P):
    """Evidence matrix ``e[v, k] = P[v] . P[k] / sqrt(r)`` with zero diagonal."""
    P = np.asarray(P, dtype=float)
    e = P @ P.T / np.sqrt(P.shape[1])
    np.fill_diagonal(e, 0.0)
    return e


def belief_update(e) -> BeliefState:
    """Map a ``V x V`` evidence matrix to belief masses and uncertainties."""
    e = np.clip(np.asarray(e, dtype=float), 0.0, None)
    V = e.shape[0]
    if V < 2 or e.shape != (V, V):
        raise ValueError("evidence must be a square matrix with V >= 2")
    off = ~np.eye(V, dtype=bool)
    e = np.where(off, e, 0.0)
    alpha = np.where(off, e + 1.0, 0.0)
    T = alpha.sum(axis=1)
    return BeliefState(bhat=e / T[:, None], u=(V - 1) / T, evidence=e, alpha=alpha)


def beliefs_from_factor(P) -> BeliefState:
    return belief_update(view_similarity(P))
