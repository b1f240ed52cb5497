"""Dense third-order tensor primitives.

Tensors are plain ``ndarray`` objects of shape ``(n1, n2, n3)``.  Unfoldings
follow the Kolda-Bader convention: the mode-``m`` fibres become columns and
the remaining indices are ordered with the smaller mode varying fastest, so
that for ``Z = [[A, B, C]]``::

    unfold(Z, 1) == A @ khatri_rao(C, B).T
    unfold(Z, 2) == B @ khatri_rao(C, A).T
    unfold(Z, 3) == C @ khatri_rao(B, A).T

Modes are numbered 1, 2, 3.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

SIMPLEX_TOL = 1e-9


def khatri_rao(A, B):
    """Column-wise Kronecker product of ``A`` (n1 x r) and ``B`` (n2 x r).

    Row ``i * n2 + j`` of the result holds ``A[i] * B[j]``, i.e. the index of
    ``B`` varies fastest.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or B.ndim != 2:
        raise ValueError("khatri_rao expects two matrices")
    if A.shape[1] != B.shape[1]:
        raise ValueError(
            f"column mismatch: {A.shape[1]} vs {B.shape[1]}")
    r = A.shape[1]
    return np.einsum("ir,jr->ijr", A, B).reshape(-1, r)


def _check_mode(mode):
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode!r}")


def unfold(Z, mode):
    """Mode-``mode`` unfolding of a third-order tensor."""
    _check_mode(mode)
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 3:
        raise ValueError("unfold expects a third-order tensor")
    m = mode - 1
    return np.moveaxis(Z, m, 0).reshape(Z.shape[m], -1, order="F")


def fold(M, mode, shape):
    """Inverse of :func:`unfold` for a tensor of the given ``shape``."""
    _check_mode(mode)
    shape = tuple(int(s) for s in shape)
    m = mode - 1
    rest = [s for i, s in enumerate(shape) if i != m]
    T = np.asarray(M, dtype=float).reshape([shape[m]] + rest, order="F")
    return np.moveaxis(T, 0, m)


def cp_reconstruct(A, H, P):
    """Rebuild ``Z[i, j, k] = sum_t A[i, t] H[j, t] P[k, t]``."""
    A = np.asarray(A, dtype=float)
    H = np.asarray(H, dtype=float)
    P = np.asarray(P, dtype=float)
    if not (A.shape[1] == H.shape[1] == P.shape[1]):
        raise ValueError(
            f"rank mismatch: {A.shape[1]}, {H.shape[1]}, {P.shape[1]}")
    return np.einsum("it,jt,kt->ijk", A, H, P)


def stack_weighted(Zs: Sequence[np.ndarray], omega, gamma: float):
    """Stack ``omega[v] ** (gamma / 2) * Zs[v]`` as frontal slices.

    Returns a ``(c, n, V)`` tensor.  ``omega`` must lie on the probability
    simplex.
    """
    omega = np.asarray(omega, dtype=float)
    if len(Zs) != omega.shape[0]:
        raise ValueError("one weight per slice required")
    shapes = {np.shape(Z) for Z in Zs}
    if len(shapes) != 1:
        raise ValueError(f"slice shape mismatch: {sorted(shapes)}")
    if np.any(omega < -SIMPLEX_TOL) or abs(omega.sum() - 1.0) > SIMPLEX_TOL:
        raise ValueError("omega must lie on the probability simplex")
    scale = np.clip(omega, 0.0, None) ** (gamma / 2.0)
    return np.stack([s * np.asarray(Z, dtype=float) for s, Z in zip(scale, Zs)],
                    axis=2)
