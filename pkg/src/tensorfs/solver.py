"""Alternating multiplicative-update solver.

One outer iteration refreshes, in order: imputed views ``Xhat``, projection
matrices ``W``, the CP factors ``A`` and ``P`` (followed by the belief
masses), the similarity graphs ``S``, the sample factor ``H`` and the view
weights ``omega``.  Every block uses the freshest value of the others.

Shapes: ``X_v, Xhat_v: d_v x n``; ``W_v: d_v x c``; ``A: c x r``;
``H: n x r``; ``P: V x r``; ``S_v: n x n``.  The weighted tensor stacks the
slices ``omega_v ** (gamma / 2) * W_v^T Xhat_v`` into a ``c x n x V`` array
and is fitted by ``[[A, H, Ptilde]]`` with ``Ptilde = diag(omega ** (gamma/2)) P``.
"""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.special import logsumexp

from . import graph as G
from .data import MultiViewDataset, mean_impute
from .evidence import BeliefState, beliefs_from_factor
from .tensor import khatri_rao, stack_weighted, unfold

log = logging.getLogger(__name__)

DEN_FLOOR = 1e-12
BIAS_FLOOR = 1e-12

VARIANTS = ("full", "variant-I", "variant-II", "variant-III")


class FitDivergence(RuntimeError):
    """Objective became non-finite during :func:`fit`."""


@dataclass
class Hyperparams:
    """Model and optimisation settings.

    ``variant`` selects an ablation: ``variant-I`` freezes the imputation at
    the feature-wise mean, ``variant-II`` drops the view weights (plain CP),
    ``variant-III`` freezes the graphs at their kNN initialisation and drops
    the consensus term.  ``symmetric_graph`` feeds ``(S + S^T) / 2`` instead
    of ``S`` into the numerators of the ``Xhat`` and ``H`` updates.
    ``penalty_scale`` multiplies the distance matrix inside the graph target.
    """

    gamma: float = 4.0
    lam: float = 1.0
    tau: float = 1.0
    c: Optional[int] = None
    r: Optional[int] = None
    epsilon: float = 1e-8
    knn_k: int = 5
    max_iter: int = 200
    tol: float = 1e-6
    patience: int = 3
    seed: int = 0
    variant: str = "full"
    symmetric_graph: bool = True
    penalty_scale: float = 0.5

    def __post_init__(self):
        if not self.gamma > 1:
            raise ValueError("gamma must exceed 1")
        if self.lam < 0 or self.tau < 0:
            raise ValueError("lam and tau must be nonnegative")
        if self.epsilon <= 0 or self.knn_k < 1 or self.max_iter < 0 or self.patience < 1:
            raise ValueError("invalid optimisation controls")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")

    @property
    def impute(self) -> bool:
        return self.variant != "variant-I"

    @property
    def weighted(self) -> bool:
        return self.variant != "variant-II"

    @property
    def learn_graphs(self) -> bool:
        return self.variant != "variant-III"

    def resolve_dims(self, d: MultiViewDataset) -> tuple[int, int]:
        c = self.c
        if c is None:
            if d.labels is None:
                raise ValueError("c must be given when the dataset has no labels")
            c = len(np.unique(d.labels))
        r = self.r if self.r is not None else c
        return int(c), int(r)


@dataclass
class ModelState:
    Xhat: list
    W: list
    S: list
    A: np.ndarray
    H: np.ndarray
    P: np.ndarray
    omega: np.ndarray
    belief: BeliefState

    @property
    def bhat(self):
        return self.belief.bhat

    def copy(self) -> "ModelState":
        return ModelState(
            Xhat=[x.copy() for x in self.Xhat], W=[w.copy() for w in self.W],
            S=[s.copy() for s in self.S], A=self.A.copy(), H=self.H.copy(),
            P=self.P.copy(), omega=self.omega.copy(), belief=self.belief)


class ObjectiveTerms(NamedTuple):
    """Weighted contributions; they add up to the total objective."""

    fit: float
    sparsity: float
    smoothness: float
    consensus: float


@dataclass
class FitReport:
    objective: list = field(default_factory=list)
    terms: list = field(default_factory=list)
    iter_seconds: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    converged_iter: Optional[int] = None
    increases: list = field(default_factory=list)
    violations: dict = field(default_factory=dict)
    seconds: float = 0.0
    metadata: dict = field(default_factory=dict)

    def rows(self):
        for it, (total, t) in enumerate(zip(self.objective, self.terms)):
            yield [it, total, t.fit, t.sparsity, t.smoothness, t.consensus]

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "total", "fit", "sparsity", "smoothness", "consensus"])
            for row in self.rows():
                w.writerow([row[0]] + [repr(float(x)) for x in row[1:]])


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------

def l21(W):
    return float(np.sqrt((W * W).sum(axis=1)).sum())


def gamma_matrix(state: ModelState, v: int):
    """``A diag(P[v]) H^T`` (``c x n``)."""
    return (state.A * state.P[v]) @ state.H.T


def view_scales(state: ModelState, hp: Hyperparams):
    """Per-view weights ``omega ** gamma`` (all ones without view weighting)."""
    if not hp.weighted:
        return np.ones(len(state.W))
    return np.clip(state.omega, 0.0, None) ** hp.gamma


def projections(state: ModelState):
    return [W.T @ X for W, X in zip(state.W, state.Xhat)]


def weighted_tensor(state: ModelState, hp: Hyperparams):
    """Return ``(Ztilde, Ptilde)``; unweighted stack and ``P`` for plain CP."""
    Zs = projections(state)
    if not hp.weighted:
        return np.stack(Zs, axis=2), state.P
    root = np.clip(state.omega, 0.0, None) ** (hp.gamma / 2.0)
    return stack_weighted(Zs, state.omega, hp.gamma), root[:, None] * state.P


def _graph_numerator(S, hp):
    return 0.5 * (S + S.T) if hp.symmetric_graph else S


def initialize(d: MultiViewDataset, hp: Hyperparams) -> ModelState:
    c, r = hp.resolve_dims(d)
    V, n = d.n_views, d.n_samples
    rng = np.random.default_rng(hp.seed)
    Xhat = [np.array(X, dtype=float) for X in mean_impute(d).views]
    W = [rng.uniform(0.1, 1.0, size=(dv, c)) for dv in d.dims]
    A = rng.uniform(0.1, 1.0, size=(c, r))
    H = rng.uniform(0.1, 1.0, size=(n, r))
    P = rng.uniform(0.1, 1.0, size=(V, r))
    S = [G.knn_graph(X, min(hp.knn_k, n - 1)) for X in Xhat]
    return ModelState(Xhat=Xhat, W=W, S=S, A=A, H=H, P=P,
                      omega=np.full(V, 1.0 / V), belief=beliefs_from_factor(P))


def _xhat_split(v: int, state: ModelState, hp: Hyperparams):
    Xh, W = state.Xhat[v], state.W[v]
    sv = view_scales(state, hp)[v]
    S = state.S[v]
    num = sv * (W @ gamma_matrix(state, v)) + hp.tau * (Xh @ _graph_numerator(S, hp))
    den = sv * (W @ (W.T @ Xh)) + hp.tau * (Xh * G.degrees(S)[None, :])
    return num, den


def update_xhat(v: int, state: ModelState, hp: Hyperparams, d: MultiViewDataset):
    """Multiplicative step on the missing cells of view ``v``; observed cells pinned."""
    num, den = _xhat_split(v, state, hp)
    upd = state.Xhat[v] * num / np.maximum(den, DEN_FLOOR)
    return np.where(d.masks[v] == 1, d.views[v], upd)


def update_w(v: int, state: ModelState, hp: Hyperparams):
    """Reweighted l2,1 multiplicative step for ``W_v``."""
    W, Xh = state.W[v], state.Xhat[v]
    lam_diag = 1.0 / (2.0 * np.sqrt((W * W).sum(axis=1)) + hp.epsilon)
    num = Xh @ gamma_matrix(state, v).T
    den = Xh @ (Xh.T @ W) + hp.lam * lam_diag[:, None] * W
    return W * num / np.maximum(den, DEN_FLOOR)


def update_a(state: ModelState, hp: Hyperparams):
    Zt, Pt = weighted_tensor(state, hp)
    K = khatri_rao(Pt, state.H)
    num = unfold(Zt, 1) @ K
    den = state.A @ ((Pt.T @ Pt) * (state.H.T @ state.H))
    return state.A * num / np.maximum(den, DEN_FLOOR)


def update_p(state: ModelState, hp: Hyperparams):
    """Fit ``P`` to the unweighted tensor, then refresh the belief masses.

    Row ``v`` of the weighted fit only carries an extra factor
    ``omega_v ** gamma`` on both sides of the ratio, so the step is the same
    either way.
    """
    Z = np.stack(projections(state), axis=2)
    K = khatri_rao(state.H, state.A)
    num = unfold(Z, 3) @ K
    den = state.P @ ((state.H.T @ state.H) * (state.A.T @ state.A))
    P = state.P * num / np.maximum(den, DEN_FLOOR)
    return P, beliefs_from_factor(P)


def update_graphs(state: ModelState, hp: Hyperparams):
    """Sequential (Gauss-Seidel) refresh of every ``S_v``."""
    Ss = [S.copy() for S in state.S]
    for v in range(len(Ss)):
        F = G.pairwise_penalty(state.Xhat[v], state.H)
        Ss[v] = G.update_similarity(v, Ss, state.bhat, F, hp.penalty_scale)
    return Ss


def _h_split(state: ModelState, hp: Hyperparams):
    # mode-2 unfolding pairs with (Ptilde kr A) under the Kolda-Bader layout
    Zt, Pt = weighted_tensor(state, hp)
    H = state.H
    K = khatri_rao(Pt, state.A)
    num = unfold(Zt, 2) @ K
    den = H @ ((Pt.T @ Pt) * (state.A.T @ state.A))
    if hp.tau:
        for S in state.S:
            num = num + hp.tau * (_graph_numerator(S, hp) @ H)
            den = den + hp.tau * (G.degrees(S)[:, None] * H)
    return num, den


def update_h(state: ModelState, hp: Hyperparams):
    num, den = _h_split(state, hp)
    return state.H * num / np.maximum(den, DEN_FLOOR)


def h_gradient(state: ModelState, hp: Hyperparams):
    """Gradient of the objective in ``H``, read off the update split as ``2 (den - num)``.

    Exact only with ``symmetric_graph``; the raw ``S`` numerator is not a
    gradient split when ``S`` is asymmetric.
    """
    num, den = _h_split(state, hp)
    return 2.0 * (den - num)


def xhat_gradient(v: int, state: ModelState, hp: Hyperparams):
    """Gradient of the objective in ``Xhat_v`` (all cells), ``2 (den - num)``."""
    num, den = _xhat_split(v, state, hp)
    return 2.0 * (den - num)


def view_losses(state: ModelState, hp: Hyperparams):
    """``||W_v^T Xhat_v - A diag(P_v) H^T||^2 + lam ||W_v||_{2,1}`` per view."""
    out = []
    for v, (W, X) in enumerate(zip(state.W, state.Xhat)):
        R = W.T @ X - gamma_matrix(state, v)
        out.append(float(np.sum(R * R)) + hp.lam * l21(W))
    return np.array(out)


def update_omega(state: ModelState, hp: Hyperparams):
    """Closed-form view weights ``omega_v ~ b_v ** (1 / (1 - gamma))``."""
    b = np.maximum(view_losses(state, hp), BIAS_FLOOR)
    logw = np.log(b) / (1.0 - hp.gamma)
    omega = np.exp(logw - logsumexp(logw))
    return omega / omega.sum()


def objective(state: ModelState, hp: Hyperparams, d: MultiViewDataset | None = None):
    """Total objective and its weighted per-term contributions."""
    sv = view_scales(state, hp)
    fit = 0.0
    sparsity = 0.0
    for v, (W, X) in enumerate(zip(state.W, state.Xhat)):
        R = W.T @ X - gamma_matrix(state, v)
        fit += sv[v] * float(np.sum(R * R))
        sparsity += hp.lam * sv[v] * l21(W)
    smooth, cons = G.graph_objective_terms(state.S, state.Xhat, state.H, state.bhat)
    if not hp.learn_graphs:
        cons = 0.0
    terms = ObjectiveTerms(fit, sparsity, hp.tau * smooth, hp.tau * cons)
    return float(sum(terms)), terms


def constraint_violations(state: ModelState, d: MultiViewDataset) -> dict:
    pin = max(float(np.abs(np.where(M == 1, Xh - X, 0.0)).max())
              for Xh, X, M in zip(state.Xhat, d.views, d.masks))
    factors = state.Xhat + state.W + [state.A, state.H, state.P, state.omega]
    return {
        "pinning": pin,
        "min_factor": float(min(f.min() for f in factors)),
        "omega_simplex": float(abs(state.omega.sum() - 1.0)),
        "graph_column": float(max(np.abs(S.sum(axis=0) - 1.0).max() for S in state.S)),
        "graph_diag": float(max(np.abs(np.diag(S)).max() for S in state.S)),
        "graph_min": float(min(S.min() for S in state.S)),
    }


def iterate(state: ModelState, hp: Hyperparams, d: MultiViewDataset) -> ModelState:
    """One outer iteration; mutates and returns ``state``."""
    V = d.n_views
    if hp.impute:
        for v in range(V):
            state.Xhat[v] = update_xhat(v, state, hp, d)
    for v in range(V):
        state.W[v] = update_w(v, state, hp)
    state.A = update_a(state, hp)
    P, belief = update_p(state, hp)
    state.P = P
    if hp.learn_graphs:
        state.belief = belief
        state.S = update_graphs(state, hp)
    state.H = update_h(state, hp)
    if hp.weighted:
        state.omega = update_omega(state, hp)
    return state


def _check_finite(total, terms, it):
    if math.isfinite(total):
        return
    bad = next((name for name, val in terms._asdict().items() if not math.isfinite(val)),
               "total")
    raise FitDivergence(f"non-finite objective at iteration {it}: term {bad!r}")


def fit(d: MultiViewDataset, hp: Hyperparams, state: ModelState | None = None,
        callback: Callable[[int, ModelState, float], None] | None = None):
    """Run the alternating updates until convergence or ``hp.max_iter``.

    Convergence means a relative objective change below ``hp.tol`` on
    ``hp.patience`` consecutive iterations.  ``report.objective[0]`` is the
    value at initialisation and ``report.objective[t]`` after iteration ``t``.
    """
    t0 = time.perf_counter()
    if state is None:
        state = initialize(d, hp)
    report = FitReport(metadata={
        "variant": hp.variant,
        "normalization": "per-feature min-max",
        "graph_tau": "tau scales all graph terms and cancels in the S step",
        "symmetric_graph": hp.symmetric_graph,
    })
    total, terms = objective(state, hp, d)
    _check_finite(total, terms, 0)
    report.objective.append(total)
    report.terms.append(terms)
    streak = 0
    for it in range(1, hp.max_iter + 1):
        ti = time.perf_counter()
        iterate(state, hp, d)
        new, terms = objective(state, hp, d)
        report.iter_seconds.append(time.perf_counter() - ti)
        _check_finite(new, terms, it)
        report.objective.append(new)
        report.terms.append(terms)
        report.iterations = it
        rel = abs(total - new) / max(abs(total), 1e-300)
        if new > total and rel > 1e-6:
            report.increases.append(it)
            log.debug("objective rose by %.3g (relative) at iteration %d", rel, it)
        if callback is not None:
            callback(it, state, new)
        total = new
        streak = streak + 1 if rel < hp.tol else 0
        if streak >= hp.patience:
            report.converged = True
            report.converged_iter = it
            break
    report.violations = constraint_violations(state, d)
    report.seconds = time.perf_counter() - t0
    return state, report
