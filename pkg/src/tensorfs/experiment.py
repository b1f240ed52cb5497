"""Experiment runner: missing-ratio sweeps, grid search, ablations and dumps.

Configuration files are flat ``key = value`` text.  Lists are written as
``[a, b, c]`` or ``a, b, c``; ``#`` starts a comment.  Keys match the fields
of :class:`ExperimentConfig`.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .data import (MultiViewDataset, SyntheticSpec, inject_missing, load_dataset,
                   mean_impute, normalize_views, synth_generate)
from .evidence import BeliefState
from .selection import (DEFAULT_RATIOS, SelectionResult, evaluate_features,
                        rank_features, variance_ranking)
from .solver import VARIANTS, Hyperparams, ModelState, fit

log = logging.getLogger(__name__)

BASELINES = ("baseline-two-step", "allfea")
ALL_VARIANTS = VARIANTS + BASELINES
SUMMARY_FIELDS = ["missing_ratio", "feature_ratio", "gamma", "lam", "tau",
                  "acc_mean", "acc_std", "nmi_mean", "nmi_std", "runs"]
SWEEP_FEATURE_AT = 0.5
SWEEP_MISSING_AT = 0.3


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Everything one sweep needs; defaults follow the usual protocol grids."""

    dataset: Optional[str] = None
    synth_V: int = 3
    synth_n: int = 90
    synth_d: int = 20
    synth_k_true: int = 3
    synth_informative: int = 5
    synth_sigma: float = 0.05
    synth_seed: int = 0
    missing_ratios: tuple = (0.1, 0.3, 0.5, 0.7, 0.9)
    feature_ratios: tuple = DEFAULT_RATIOS
    gammas: tuple = (2.0, 3.0, 4.0, 5.0, 6.0, 7.0)
    lams: tuple = tuple(10.0 ** p for p in range(-3, 4))
    taus: tuple = tuple(10.0 ** p for p in range(-3, 4))
    variant: str = "full"
    seeds: tuple = (0,)
    outdir: str = "results"
    workers: int = 1
    global_grid: bool = False
    eval_on: str = "xhat"
    c: Optional[int] = None
    r: Optional[int] = None
    knn_k: int = 5
    max_iter: int = 200
    tol: float = 1e-6
    repeats: int = 20
    restarts: int = 20

    def __post_init__(self):
        for name in ("missing_ratios", "feature_ratios", "gammas", "lams", "taus"):
            setattr(self, name, tuple(float(x) for x in _as_tuple(getattr(self, name))))
        self.seeds = tuple(int(s) for s in _as_tuple(self.seeds))
        self.validate()

    def validate(self):
        if self.variant not in ALL_VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.eval_on not in ("xhat", "mean"):
            raise ConfigError("eval_on must be 'xhat' or 'mean'")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if any(not 0.0 <= m < 1.0 for m in self.missing_ratios) or not self.missing_ratios:
            raise ConfigError("missing ratios must lie in [0, 1)")
        if any(not 0.0 < f <= 1.0 for f in self.feature_ratios) or not self.feature_ratios:
            raise ConfigError("feature ratios must lie in (0, 1]")
        if not (self.gammas and self.lams and self.taus):
            raise ConfigError("hyperparameter grids must be non-empty")
        if min(self.gammas) <= 1 or min(self.lams) < 0 or min(self.taus) < 0:
            raise ConfigError("grids need gamma > 1 and nonnegative lam, tau")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @property
    def synth_spec(self) -> SyntheticSpec:
        return SyntheticSpec(V=self.synth_V, n=self.synth_n, d=self.synth_d,
                             k_true=self.synth_k_true, informative=self.synth_informative,
                             sigma=self.synth_sigma, seed=self.synth_seed)

    def grid(self):
        if self.variant in BASELINES:
            return [(None, None, None)]
        return [(g, l, t) for g in self.gammas for l in self.lams for t in self.taus]

    def hyperparams(self, gamma, lam, tau, seed, variant=None) -> Hyperparams:
        return Hyperparams(gamma=gamma, lam=lam, tau=tau, c=self.c, r=self.r,
                           knn_k=self.knn_k, max_iter=self.max_iter, tol=self.tol,
                           seed=seed, variant=variant or self.variant)

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            val = getattr(self, f.name)
            if isinstance(val, tuple):
                val = "[" + ", ".join(repr(x) for x in val) + "]"
            lines.append(f"{f.name} = {val}")
        return "\n".join(lines) + "\n"


def _as_tuple(x):
    if isinstance(x, (list, tuple)):
        return tuple(x)
    return (x,)


_FIELD_TYPES = {
    "dataset": str, "variant": str, "outdir": str, "eval_on": str,
    "synth_sigma": float, "tol": float,
    "global_grid": bool,
    "c": int, "r": int,
    "missing_ratios": list, "feature_ratios": list, "gammas": list, "lams": list,
    "taus": list, "seeds": list,
}


def coerce_value(key: str, raw: str):
    """Convert the text form of a config value to its field type."""
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    if key not in names:
        raise ConfigError(f"unknown config key {key!r}")
    kind = _FIELD_TYPES.get(key, int)
    raw = raw.strip()
    if raw.lower() in ("none", "null", "") and key in ("dataset", "c", "r"):
        return None
    try:
        if kind is list:
            body = raw[1:-1] if raw.startswith("[") and raw.endswith("]") else raw
            items = [s.strip() for s in body.split(",") if s.strip()]
            return tuple(int(s) for s in items) if key == "seeds" else tuple(float(s) for s in items)
        if kind is bool:
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def parse_config(text: str, **overrides) -> ExperimentConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        values[key] = coerce_value(key, raw)
    values.update(overrides)
    return ExperimentConfig(**values)


def load_config(path, **overrides) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), **overrides)


# ---------------------------------------------------------------------------
# Single runs
# ---------------------------------------------------------------------------

def base_dataset(cfg: ExperimentConfig) -> MultiViewDataset:
    """Normalised source data (loaded or synthetic)."""
    if cfg.dataset:
        d = load_dataset(cfg.dataset)
    else:
        d, _ = synth_generate(cfg.synth_spec)
    if d.labels is None:
        raise ConfigError("experiments need ground-truth labels")
    return normalize_views(d)


def incomplete_dataset(base: MultiViewDataset, ratio: float, seed: int) -> MultiViewDataset:
    if ratio == 0.0:
        return base
    if base.missing_count:
        raise ConfigError("missing injection needs a fully observed source dataset")
    return inject_missing(base, ratio, seed)


def _all_features_ranking(views):
    return [(v, i, 0.0) for v, X in enumerate(views) for i in range(X.shape[0])]


def run_cell(cfg: ExperimentConfig, d: MultiViewDataset, params, seed: int, variant=None):
    """Fit (or skip, for baselines) and evaluate one grid cell.

    Returns ``(SelectionResult, FitReport | None, ModelState | None)``.
    """
    variant = variant or cfg.variant
    kw = dict(ratios=cfg.feature_ratios, seed=seed, repeats=cfg.repeats,
              restarts=cfg.restarts)
    if variant == "baseline-two-step":
        views = mean_impute(d).views
        return evaluate_features(views, d.labels, variance_ranking(views), **kw), None, None
    if variant == "allfea":
        views = mean_impute(d).views
        ranking = _all_features_ranking(views)
        one = evaluate_features(views, d.labels, ranking, ratios=(1.0,), seed=seed,
                                repeats=cfg.repeats, restarts=cfg.restarts)
        res = SelectionResult(ranking=ranking)
        for fr in cfg.feature_ratios:
            res.ratios.append(fr)
            res.acc_mean.append(one.acc_mean[0])
            res.acc_std.append(one.acc_std[0])
            res.nmi_mean.append(one.nmi_mean[0])
            res.nmi_std.append(one.nmi_std[0])
        return res, None, None
    gamma, lam, tau = params
    state, report = fit(d, cfg.hyperparams(gamma, lam, tau, seed, variant))
    ranking = rank_features(state.W)
    views = state.Xhat if cfg.eval_on == "xhat" else mean_impute(d).views
    return evaluate_features(views, d.labels, ranking, **kw), report, state


def _cell_name(m, gi, seed):
    return f"m{m:g}_g{gi:03d}_s{seed}"


def _run_task(args):
    """Worker entry point; never raises."""
    cfg, d, m, gi, params, seed, variant = args
    name = _cell_name(m, gi, seed)
    try:
        res, report, _ = run_cell(cfg, d, params, seed, variant)
        return name, res, report, None
    except Exception as exc:  # isolate any failure to its cell
        return name, None, None, {"error": type(exc).__name__, "message": str(exc),
                                  "traceback": traceback.format_exc()}


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in row])


def _params_dict(params):
    return dict(zip(("gamma", "lam", "tau"), params))


def _aggregate(results):
    """Average per-run SelectionResults cell by cell (per feature ratio)."""
    acc = np.array([r.acc_mean for r in results])
    nm = np.array([r.nmi_mean for r in results])
    return acc.mean(axis=0), acc.std(axis=0), nm.mean(axis=0), nm.std(axis=0)


def run_experiment(cfg: ExperimentConfig, variant: str | None = None,
                   outdir: str | os.PathLike | None = None) -> dict:
    """Sweep missing ratios x grid x seeds, writing every artefact to ``outdir``.

    Returns a dict with the chosen grid point and aggregated metrics per
    missing ratio, plus the list of failed cells.
    """
    variant = variant or cfg.variant
    out = Path(outdir or cfg.outdir)
    runs = out / "runs"
    runs.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.replace(variant=variant).to_text(), encoding="utf-8")
    base = base_dataset(cfg)
    grid = [(None, None, None)] if variant in BASELINES else cfg.grid()

    tasks = []
    for m in cfg.missing_ratios:
        for seed in cfg.seeds:
            d = incomplete_dataset(base, m, seed)
            for gi, params in enumerate(grid):
                tasks.append((cfg, d, m, gi, params, seed, variant))
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outputs = list(pool.map(_run_task, tasks))
    else:
        outputs = [_run_task(t) for t in tasks]

    cells = {}
    failures = []
    for task, (name, res, report, err) in zip(tasks, outputs):
        _, _, m, gi, params, seed, _ = task
        if err is not None:
            log.warning("cell %s failed: %s", name, err["message"])
            _write_json(runs / f"{name}_error.json", err | {"cell": name})
            failures.append(name)
            continue
        if report is not None:
            report.to_csv(runs / f"{name}_report.csv")
        payload = res.to_dict() | {"missing_ratio": m, "seed": seed, "variant": variant,
                                   **_params_dict(params)}
        _write_json(runs / f"{name}_selection.json", payload)
        cells.setdefault((m, gi), []).append(res)

    def score(m, gi):
        rs = cells.get((m, gi))
        return float(np.mean([r.acc_mean for r in rs])) if rs else -math.inf

    chosen = {}
    if cfg.global_grid:
        totals = [sum(score(m, gi) for m in cfg.missing_ratios) for gi in range(len(grid))]
        best = int(np.argmax(totals))
        chosen = {m: best for m in cfg.missing_ratios}
    else:
        for m in cfg.missing_ratios:
            chosen[m] = int(np.argmax([score(m, gi) for gi in range(len(grid))]))

    summary = {}
    rows = []
    for m in cfg.missing_ratios:
        gi = chosen[m]
        rs = cells.get((m, gi))
        if not rs:
            continue
        acc_m, acc_s, nmi_m, nmi_s = _aggregate(rs)
        summary[m] = {"params": _params_dict(grid[gi]), "feature_ratios": list(cfg.feature_ratios),
                      "acc_mean": acc_m.tolist(), "acc_std": acc_s.tolist(),
                      "nmi_mean": nmi_m.tolist(), "nmi_std": nmi_s.tolist(), "runs": len(rs)}
        for j, fr in enumerate(cfg.feature_ratios):
            rows.append([m, fr, *grid[gi], float(acc_m[j]), float(acc_s[j]),
                         float(nmi_m[j]), float(nmi_s[j]), len(rs)])
    rows = [[("" if x is None else x) for x in row] for row in rows]
    _write_csv(out / "summary.csv", SUMMARY_FIELDS, rows)
    _write_sweeps(out, rows)
    result = {"variant": variant, "summary": summary, "failures": failures,
              "grid_selection": "global" if cfg.global_grid else "per-missing-ratio"}
    _write_json(out / "summary.json", {"variant": variant, "failures": failures,
                                       "grid_selection": result["grid_selection"],
                                       "summary": {f"{m:g}": v for m, v in summary.items()}})
    return result


def _write_sweeps(out: Path, rows):
    header = ["missing_ratio", "feature_ratio", "acc_mean", "acc_std", "nmi_mean", "nmi_std"]
    pick = lambda r: [r[0], r[1], r[5], r[6], r[7], r[8]]
    by_feat = [pick(r) for r in rows if math.isclose(r[0], SWEEP_FEATURE_AT)]
    by_miss = [pick(r) for r in rows if math.isclose(r[1], SWEEP_MISSING_AT)]
    _write_csv(out / "sweep_feature_ratio.csv", header, by_feat)
    _write_csv(out / "sweep_missing_ratio.csv", header, by_miss)


def run_ablation(cfg: ExperimentConfig, outdir=None) -> dict:
    """Run the full model and its three ablations under identical seeds and grid.

    Writes ``ablation.csv`` with one row per (variant, missing ratio, feature
    ratio).  ``full_geq`` flags whether the full model matched or beat the
    variant in that cell; a failed ordering is reported, not raised.
    """
    out = Path(outdir or cfg.outdir)
    results = {v: run_experiment(cfg, variant=v, outdir=out / v) for v in VARIANTS}
    full = results["full"]["summary"]
    rows = []
    ordering_ok = True
    for v in VARIANTS:
        for m, s in results[v]["summary"].items():
            for j, fr in enumerate(s["feature_ratios"]):
                geq = ""
                if v != "full" and m in full:
                    geq = bool(full[m]["acc_mean"][j] >= s["acc_mean"][j])
                    ordering_ok &= geq
                rows.append([v, m, fr, s["acc_mean"][j], s["acc_std"][j],
                             s["nmi_mean"][j], s["nmi_std"][j], geq])
    _write_csv(out / "ablation.csv", ["variant", "missing_ratio", "feature_ratio", "acc_mean",
                                      "acc_std", "nmi_mean", "nmi_std", "full_geq"], rows)
    return {"results": results, "ordering_ok": ordering_ok}


# ---------------------------------------------------------------------------
# State persistence and graph dumps
# ---------------------------------------------------------------------------

def save_state(state: ModelState, path) -> None:
    arrays = {"A": state.A, "H": state.H, "P": state.P, "omega": state.omega,
              "bhat": state.belief.bhat, "u": state.belief.u,
              "evidence": state.belief.evidence, "alpha": state.belief.alpha}
    for v in range(len(state.W)):
        arrays[f"Xhat_{v}"] = state.Xhat[v]
        arrays[f"W_{v}"] = state.W[v]
        arrays[f"S_{v}"] = state.S[v]
    np.savez(path, **arrays)


def load_state(path) -> ModelState:
    with np.load(path) as z:
        V = z["P"].shape[0]
        belief = BeliefState(bhat=z["bhat"], u=z["u"], evidence=z["evidence"], alpha=z["alpha"])
        return ModelState(Xhat=[z[f"Xhat_{v}"] for v in range(V)],
                          W=[z[f"W_{v}"] for v in range(V)],
                          S=[z[f"S_{v}"] for v in range(V)],
                          A=z["A"], H=z["H"], P=z["P"], omega=z["omega"], belief=belief)


def dump_graphs(state: ModelState, outdir) -> list[Path]:
    """Write ``S_view<v>.csv`` per view plus ``bhat.csv`` and ``u.csv``."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for v, S in enumerate(state.S):
        p = out / f"S_view{v + 1}.csv"
        np.savetxt(p, S, delimiter=",", fmt="%.17g")
        paths.append(p)
    for name, arr in (("bhat", state.belief.bhat), ("u", np.atleast_2d(state.belief.u))):
        p = out / f"{name}.csv"
        np.savetxt(p, arr, delimiter=",", fmt="%.17g")
        paths.append(p)
    return paths
