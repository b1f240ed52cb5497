"""Feature ranking and clustering-based evaluation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from sklearn.cluster import KMeans

DEFAULT_RATIOS = (0.1, 0.2, 0.3, 0.4, 0.5)


@dataclass
class SelectionResult:
    ranking: list
    ratios: list = field(default_factory=list)
    acc_mean: list = field(default_factory=list)
    acc_std: list = field(default_factory=list)
    nmi_mean: list = field(default_factory=list)
    nmi_std: list = field(default_factory=list)

    @property
    def metrics(self) -> dict:
        return {r: (a, sa, m, sm) for r, a, sa, m, sm in
                zip(self.ratios, self.acc_mean, self.acc_std, self.nmi_mean, self.nmi_std)}

    def to_dict(self) -> dict:
        return {
            "ratios": list(self.ratios),
            "acc_mean": list(self.acc_mean), "acc_std": list(self.acc_std),
            "nmi_mean": list(self.nmi_mean), "nmi_std": list(self.nmi_std),
            "ranking": [[int(v), int(i), float(s)] for v, i, s in self.ranking],
        }


def rank_by_scores(scores: Sequence[np.ndarray]):
    """Pool per-view feature scores; sort descending, ties by (view, index)."""
    items = [(-float(s), v, i) for v, sv in enumerate(scores) for i, s in enumerate(sv)]
    items.sort()
    return [(v, i, -neg) for neg, v, i in items]


def rank_features(Ws):
    """Rank every row of every ``W_v`` by its l2 norm."""
    return rank_by_scores([np.sqrt((np.asarray(W) ** 2).sum(axis=1)) for W in Ws])


def variance_ranking(views):
    """Baseline ranking by per-feature variance across samples."""
    return rank_by_scores([np.var(np.asarray(X), axis=1) for X in views])


def select(views, ranking, count: int):
    """Stack the top ``count`` ranked feature rows into a ``count x n`` matrix."""
    return np.stack([views[v][i] for v, i, _ in ranking[:count]])


def kmeans(X, k: int, seed: int = 0, restarts: int = 20):
    """k-means labels of the columns of ``X`` (best of ``restarts`` by inertia)."""
    X = np.asarray(X, dtype=float)
    n = X.shape[1]
    if k > n:
        raise ValueError(f"k={k} exceeds the number of samples {n}")
    km = KMeans(n_clusters=k, init="k-means++", n_init=restarts,
                random_state=seed, algorithm="lloyd")
    return km.fit_predict(X.T)


def _contingency(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("label vectors must have equal length")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    C = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(C, (ai, bi), 1)
    return C


def acc(true_labels, pred_labels) -> float:
    """Best one-to-one matching accuracy (Hungarian method)."""
    C = _contingency(true_labels, pred_labels)
    rows, cols = linear_sum_assignment(-C)
    return float(C[rows, cols].sum() / C.sum())


def nmi(true_labels, pred_labels) -> float:
    """Mutual information over the geometric mean of the two entropies."""
    C = _contingency(true_labels, pred_labels)
    n = C.sum()
    pa = C.sum(axis=1) / n
    pb = C.sum(axis=0) / n
    ha = -float(np.sum(pa * np.log(pa)))
    hb = -float(np.sum(pb * np.log(pb)))
    if ha == 0.0 or hb == 0.0:
        return 1.0 if ha == hb == 0.0 else 0.0
    nz = C > 0
    pij = C[nz] / n
    mi = float(np.sum(pij * np.log(pij / np.outer(pa, pb)[nz])))
    return float(min(max(mi / math.sqrt(ha * hb), 0.0), 1.0))


def evaluate_features(views, labels, ranking, ratios=DEFAULT_RATIOS, k: int | None = None,
                      seed: int = 0, repeats: int = 20, restarts: int = 20):
    """Cluster the top-ranked features at every ratio and average ACC / NMI.

    For each ratio the top ``ceil(ratio * sum_v d_v)`` features are clustered
    ``repeats`` times (seeds ``seed, seed + 1, ...``), each run keeping the
    best of ``restarts`` k-means initialisations.
    """
    if labels is None:
        raise ValueError("evaluation needs ground-truth labels")
    labels = np.asarray(labels)
    k = k or len(np.unique(labels))
    total = sum(np.asarray(X).shape[0] for X in views)
    res = SelectionResult(ranking=list(ranking))
    for ratio in ratios:
        count = max(1, math.ceil(round(ratio * total, 9)))
        Xs = select(views, ranking, count)
        accs, nmis = [], []
        for rep in range(repeats):
            pred = kmeans(Xs, k, seed=seed + rep, restarts=restarts)
            accs.append(acc(labels, pred))
            nmis.append(nmi(labels, pred))
        res.ratios.append(float(ratio))
        res.acc_mean.append(float(np.mean(accs)))
        res.acc_std.append(float(np.std(accs)))
        res.nmi_mean.append(float(np.mean(nmis)))
        res.nmi_std.append(float(np.std(nmis)))
    return res


def evaluate_selection(dataset, state, ranking=None, ratios=DEFAULT_RATIOS,
                       k: int | None = None, seed: int = 0, repeats: int = 20,
                       restarts: int = 20):
    """Evaluate a fitted model's ranking on its imputed views."""
    if ranking is None:
        ranking = rank_features(state.W)
    return evaluate_features(state.Xhat, dataset.labels, ranking, ratios, k,
                             seed, repeats, restarts)
