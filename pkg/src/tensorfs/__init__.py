"""Tensorized unsupervised feature selection for incomplete multi-view data."""
from .data import (MultiViewDataset, SyntheticSpec, inject_missing, load_dataset,
                   mean_impute, normalize_views, save_dataset, synth_generate)
from .experiment import ExperimentConfig, dump_graphs, run_ablation, run_experiment
from .selection import acc, evaluate_selection, nmi, rank_features
from .solver import FitReport, Hyperparams, ModelState, fit, initialize, objective

__version__ = "0.1.0"

__all__ = [
    "MultiViewDataset", "SyntheticSpec", "inject_missing", "load_dataset",
    "mean_impute", "normalize_views", "save_dataset", "synth_generate",
    "ExperimentConfig", "dump_graphs", "run_ablation", "run_experiment",
    "acc", "evaluate_selection", "nmi", "rank_features",
    "FitReport", "Hyperparams", "ModelState", "fit", "initialize", "objective",
]
