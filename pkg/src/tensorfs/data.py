"""Multi-view datasets with variable-level missing masks.

Every view is stored features-by-samples (``d_v x n``).  A mask entry of 1
marks an observed value and 0 a missing one; missing cells hold a 0
placeholder that is never read except through the mask.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

MAX_INJECT_ATTEMPTS = 100


class DatasetError(ValueError):
    """Raised when a dataset violates its structural invariants."""


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MultiViewDataset:
    """Immutable container for ``V >= 2`` views over the same ``n`` samples."""

    views: tuple
    masks: tuple = None
    labels: Optional[np.ndarray] = None
    names: tuple = None

    def __post_init__(self):
        views = tuple(_frozen(X) for X in self.views)
        if self.masks is None:
            masks = tuple(_frozen(np.ones(X.shape), dtype=np.int8) for X in views)
        else:
            masks = tuple(_frozen(M, dtype=np.int8) for M in self.masks)
        names = (tuple(f"view_{v + 1}" for v in range(len(views)))
                 if self.names is None else tuple(str(s) for s in self.names))
        labels = None if self.labels is None else _frozen(self.labels, dtype=np.int64)
        object.__setattr__(self, "views", views)
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "labels", labels)
        self._validate()

    def _validate(self):
        V = len(self.views)
        if V < 2:
            raise DatasetError(f"need at least 2 views, got {V}")
        if len(self.masks) != V or len(self.names) != V:
            raise DatasetError("views, masks and names must have equal length")
        n = self.views[0].shape[1] if self.views[0].ndim == 2 else -1
        for v, (X, M) in enumerate(zip(self.views, self.masks)):
            if X.ndim != 2:
                raise DatasetError(f"view {v + 1} is not a matrix")
            if X.shape[1] != n:
                raise DatasetError(
                    f"sample count mismatch: view 1 has {n}, view {v + 1} has {X.shape[1]}")
            if M.shape != X.shape:
                raise DatasetError(f"mask {v + 1} shape {M.shape} != view shape {X.shape}")
            if not np.isin(M, (0, 1)).all():
                raise DatasetError(f"mask {v + 1} has values outside {{0, 1}}")
            if not np.isfinite(X).all():
                raise DatasetError(f"view {v + 1} has non-finite values")
        if self.labels is not None and self.labels.shape != (n,):
            raise DatasetError(f"labels must have length {n}")
        observed = sum(M.sum(axis=0) for M in self.masks)
        if np.any(observed == 0):
            raise DatasetError("some sample has no observed entry in any view")

    @property
    def n_views(self) -> int:
        return len(self.views)

    @property
    def n_samples(self) -> int:
        return self.views[0].shape[1]

    @property
    def dims(self) -> list[int]:
        return [X.shape[0] for X in self.views]

    @property
    def missing_count(self) -> int:
        return int(sum((M == 0).sum() for M in self.masks))

    def with_views(self, views, masks=None):
        return replace(self, views=tuple(views),
                       masks=self.masks if masks is None else tuple(masks))


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the planted-cluster generator.

    ``d`` is either one dimension shared by all views or one per view;
    ``informative`` likewise.
    """

    V: int = 3
    n: int = 60
    d: Sequence[int] | int = 20
    k_true: int = 3
    informative: Sequence[int] | int = 5
    sigma: float = 0.05
    seed: int = 0

    def dims(self) -> list[int]:
        return [int(self.d)] * self.V if np.isscalar(self.d) else [int(x) for x in self.d]

    def informative_counts(self) -> list[int]:
        if np.isscalar(self.informative):
            return [int(self.informative)] * self.V
        return [int(x) for x in self.informative]

    def validate(self):
        dims, inf = self.dims(), self.informative_counts()
        if self.V < 2 or len(dims) != self.V or len(inf) != self.V:
            raise DatasetError("need V >= 2 and one d / informative entry per view")
        if any(i > dv or i < 0 for i, dv in zip(inf, dims)):
            raise DatasetError("informative count must lie in [0, d_v]")
        if not 1 <= self.k_true <= self.n:
            raise DatasetError("k_true must lie in [1, n]")
        if self.sigma < 0:
            raise DatasetError("sigma must be nonnegative")


# ---------------------------------------------------------------------------
# csv-dir I/O
# ---------------------------------------------------------------------------

def _read_matrix(path):
    try:
        M = np.loadtxt(path, delimiter=",", dtype=float, ndmin=2)
    except ValueError as exc:
        raise DatasetError(f"non-numeric cell in {path}: {exc}") from exc
    return M


def load_dataset(path, format: str = "csv-dir") -> MultiViewDataset:
    """Read a ``csv-dir`` dataset.

    The directory holds ``meta.json`` (``views``, ``names``, ``n``),
    ``view_<i>.csv`` for ``i = 1..V`` and optionally ``mask_<i>.csv`` and
    ``labels.csv``.  Missing mask files mean fully observed views.
    """
    if format != "csv-dir":
        raise ValueError(f"unsupported format {format!r}")
    root = Path(path)
    meta = json.loads((root / "meta.json").read_text(encoding="utf-8"))
    V = int(meta["views"])
    views, masks = [], []
    for i in range(1, V + 1):
        X = _read_matrix(root / f"view_{i}.csv")
        views.append(X)
        mpath = root / f"mask_{i}.csv"
        masks.append(_read_matrix(mpath) if mpath.exists() else np.ones_like(X))
    labels = None
    lpath = root / "labels.csv"
    if lpath.exists():
        raw = np.loadtxt(lpath, dtype=float, ndmin=1)
        if not np.all(raw == np.round(raw)):
            raise DatasetError("labels must be integers")
        labels = raw.astype(np.int64)
    n = meta.get("n")
    if n is not None and any(X.shape[1] != int(n) for X in views):
        raise DatasetError("sample count mismatch with meta.json")
    return MultiViewDataset(views=tuple(views), masks=tuple(masks), labels=labels,
                            names=meta.get("names"))


def save_dataset(d: MultiViewDataset, path) -> None:
    """Write ``d`` in ``csv-dir`` format; values round-trip bit-exactly."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    meta = {"views": d.n_views, "names": list(d.names), "n": d.n_samples}
    (root / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    for i, (X, M) in enumerate(zip(d.views, d.masks), start=1):
        # repr-width formatting so floats survive the text round trip
        np.savetxt(root / f"view_{i}.csv", X, delimiter=",", fmt="%.17g")
        np.savetxt(root / f"mask_{i}.csv", M, delimiter=",", fmt="%d")
    if d.labels is not None:
        np.savetxt(root / "labels.csv", d.labels, fmt="%d")


# ---------------------------------------------------------------------------
# Transformations
# ---------------------------------------------------------------------------

def normalize_views(d: MultiViewDataset) -> MultiViewDataset:
    """Min-max scale every feature row to [0, 1] using observed entries only.

    Constant rows map to 0.5.  Missing cells are reset to the 0 placeholder.
    """
    out = []
    for v, (X, M) in enumerate(zip(d.views, d.masks)):
        obs = M.astype(bool)
        if np.any(obs.sum(axis=1) == 0):
            row = int(np.flatnonzero(obs.sum(axis=1) == 0)[0])
            raise DatasetError(f"feature row {row} of view {v + 1} is fully missing")
        lo = np.where(obs, X, np.inf).min(axis=1, keepdims=True)
        hi = np.where(obs, X, -np.inf).max(axis=1, keepdims=True)
        span = hi - lo
        const = span[:, 0] == 0
        Y = (X - lo) / np.where(span == 0, 1.0, span)
        Y[const] = 0.5
        out.append(np.where(obs, Y, 0.0))
    return d.with_views(out)


def inject_missing(d: MultiViewDataset, ratio: float, seed: int,
                   per_view: bool = False) -> MultiViewDataset:
    """Remove ``floor(ratio * sum_v d_v * n)`` entries uniformly at random.

    Cells are drawn without replacement over every (view, feature, sample)
    triple.  With ``per_view`` the count is taken per view instead
    (``floor(ratio * d_v * n)`` each).  Draws that leave a sample with no
    observed entry are redrawn, up to ``MAX_INJECT_ATTEMPTS`` times.
    """
    if not 0.0 <= ratio < 1.0:
        raise ValueError("ratio must lie in [0, 1)")
    if any(not M.all() for M in d.masks):
        raise DatasetError("inject_missing expects a fully observed dataset")
    rng = np.random.default_rng(seed)
    sizes = [X.size for X in d.views]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    total = int(offsets[-1])
    for _ in range(MAX_INJECT_ATTEMPTS):
        flat = np.ones(total, dtype=np.int8)
        if per_view:
            for v, s in enumerate(sizes):
                k = int(np.floor(ratio * s))
                flat[offsets[v] + rng.choice(s, size=k, replace=False)] = 0
        else:
            k = int(np.floor(ratio * total))
            flat[rng.choice(total, size=k, replace=False)] = 0
        masks = [flat[offsets[v]:offsets[v + 1]].reshape(X.shape)
                 for v, X in enumerate(d.views)]
        if np.all(sum(M.sum(axis=0) for M in masks) > 0):
            views = [np.where(M == 1, X, 0.0) for X, M in zip(d.views, masks)]
            return d.with_views(views, masks)
    raise DatasetError(
        f"ratio {ratio} leaves a fully missing sample after {MAX_INJECT_ATTEMPTS} attempts")


def row_means(X, M):
    """Mean of the observed entries of every row of ``X``."""
    cnt = M.sum(axis=1)
    if np.any(cnt == 0):
        raise DatasetError("feature row with no observed entry")
    return (X * M).sum(axis=1) / cnt


def mean_impute(d: MultiViewDataset) -> MultiViewDataset:
    """Fill each missing cell with the mean of its feature row; masks kept."""
    out = []
    for X, M in zip(d.views, d.masks):
        mu = row_means(X, M)
        out.append(np.where(M == 1, X, mu[:, None]))
    return d.with_views(out)


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

def _balanced_labels(n, k, rng):
    return rng.permutation(np.arange(n) % k)


def synth_generate(spec: SyntheticSpec):
    """Planted-cluster multi-view data.

    Each informative row gets one prototype level per class (a random
    permutation of evenly spaced levels in [0.1, 0.9]) plus Gaussian noise of
    scale ``sigma``; the remaining rows are i.i.d. Uniform(0, 1).  Informative
    rows sit at random positions within each view.

    Returns ``(dataset, informative)`` where ``informative[v]`` is the sorted
    array of planted row indices of view ``v``.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    labels = _balanced_labels(spec.n, spec.k_true, rng)
    levels = (np.linspace(0.1, 0.9, spec.k_true) if spec.k_true > 1
              else np.array([0.5]))
    views, informative = [], []
    for dv, iv in zip(spec.dims(), spec.informative_counts()):
        X = rng.uniform(0.0, 1.0, size=(dv, spec.n))
        rows = np.sort(rng.choice(dv, size=iv, replace=False))
        for i in rows:
            proto = levels[rng.permutation(spec.k_true)]
            X[i] = proto[labels] + spec.sigma * rng.standard_normal(spec.n)
        np.clip(X, 0.0, None, out=X)
        views.append(X)
        informative.append(rows)
    return MultiViewDataset(views=tuple(views), labels=labels), informative


def synth_low_rank(V: int = 3, n: int = 80, d: int = 20, rank: int = 3,
                   seed: int = 0, k_true: int | None = None) -> MultiViewDataset:
    """Exactly low-rank nonnegative views ``X_v = U_v G^T`` with shared ``G``.

    With ``k_true`` the sample factor ``G`` is drawn around ``k_true`` class
    centres, giving cluster structure and labels.
    """
    rng = np.random.default_rng(seed)
    labels = None
    if k_true:
        labels = _balanced_labels(n, k_true, rng)
        centres = rng.uniform(0.0, 1.0, size=(k_true, rank))
        G = np.clip(centres[labels] + 0.15 * rng.standard_normal((n, rank)), 0.0, None)
    else:
        G = rng.uniform(0.0, 1.0, size=(n, rank))
    views = [rng.uniform(0.0, 1.0, size=(d, rank)) @ G.T for _ in range(V)]
    return MultiViewDataset(views=tuple(views), labels=labels)


def with_duplicate_view(d: MultiViewDataset, source: int) -> MultiViewDataset:
    """Append an exact copy (values and mask) of view ``source`` (0-based)."""
    return replace(d, views=d.views + (d.views[source],),
                   masks=d.masks + (d.masks[source],),
                   names=d.names + (f"{d.names[source]}_copy",))
