"""Command-line entry point: ``tensorfs <verb> [options]``.

Verbs: ``synth``, ``fit``, ``eval``, ``dump-graphs``, ``sweep``, ``ablate``.
On failure a JSON object ``{"error": ..., "message": ...}`` is printed to
stderr and the exit code is 1.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .data import (SyntheticSpec, inject_missing, load_dataset, mean_impute,
                   normalize_views, save_dataset, synth_generate)
from .experiment import (ExperimentConfig, coerce_value, dump_graphs,
                         load_config, load_state, run_ablation, run_experiment, save_state)
from .selection import DEFAULT_RATIOS, evaluate_features, rank_features
from .solver import VARIANTS, Hyperparams, fit


def _floats(text):
    return tuple(float(s) for s in text.split(",") if s.strip())


def _add_data_args(p):
    p.add_argument("--data", required=True, help="csv-dir dataset")
    p.add_argument("--missing", type=float, default=0.0, help="ratio of entries to remove")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-normalize", action="store_true")


def _add_hyper_args(p):
    hp = Hyperparams()
    p.add_argument("--gamma", type=float, default=hp.gamma)
    p.add_argument("--lam", type=float, default=hp.lam)
    p.add_argument("--tau", type=float, default=hp.tau)
    p.add_argument("--c", type=int)
    p.add_argument("--r", type=int)
    p.add_argument("--knn-k", type=int, default=hp.knn_k)
    p.add_argument("--max-iter", type=int, default=hp.max_iter)
    p.add_argument("--tol", type=float, default=hp.tol)
    p.add_argument("--variant", choices=VARIANTS, default="full")


def _add_config_args(p):
    p.add_argument("--config", help="flat key = value config file")
    for f in dataclasses.fields(ExperimentConfig):
        p.add_argument("--" + f.name.replace("_", "-"), dest="cfg_" + f.name,
                       metavar="VALUE", help=f"override '{f.name}'")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tensorfs", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("synth", help="generate a planted synthetic dataset")
    spec = SyntheticSpec()
    for name in ("V", "n", "d", "k_true", "informative", "seed"):
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=int,
                       default=getattr(spec, name))
    p.add_argument("--sigma", type=float, default=spec.sigma)
    p.add_argument("--out", required=True)

    p = sub.add_parser("fit", help="fit one model and write its state and ranking")
    _add_data_args(p)
    _add_hyper_args(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="score a ranking by k-means ACC / NMI")
    _add_data_args(p)
    p.add_argument("--state", required=True, help="state.npz written by 'fit'")
    p.add_argument("--ratios", type=_floats, default=DEFAULT_RATIOS)
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--restarts", type=int, default=20)
    p.add_argument("--eval-on", choices=("xhat", "mean"), default="xhat")
    p.add_argument("--out", help="write the SelectionResult JSON here")

    p = sub.add_parser("dump-graphs", help="export similarity graphs and belief masses")
    p.add_argument("--state", required=True)
    p.add_argument("--out", required=True)

    for verb, text in (("sweep", "grid search over missing ratios"),
                       ("ablate", "full model against its ablations")):
        p = sub.add_parser(verb, help=text)
        _add_config_args(p)
    return parser


def _load(args):
    d = load_dataset(args.data)
    if not args.no_normalize:
        d = normalize_views(d)
    if args.missing:
        d = inject_missing(d, args.missing, args.seed)
    return d


def _config(args) -> ExperimentConfig:
    overrides = {}
    for f in dataclasses.fields(ExperimentConfig):
        raw = getattr(args, "cfg_" + f.name)
        if raw is not None:
            overrides[f.name] = coerce_value(f.name, raw)
    if args.config:
        return load_config(args.config, **overrides)
    return ExperimentConfig(**overrides)


def cmd_synth(args):
    spec = SyntheticSpec(V=args.V, n=args.n, d=args.d, k_true=args.k_true,
                         informative=args.informative, sigma=args.sigma, seed=args.seed)
    d, informative = synth_generate(spec)
    save_dataset(d, args.out)
    with open(Path(args.out) / "informative.json", "w", encoding="utf-8") as fh:
        json.dump([[int(i) for i in rows] for rows in informative], fh)
    return {"out": args.out, "n": d.n_samples, "dims": d.dims}


def cmd_fit(args):
    d = _load(args)
    hp = Hyperparams(gamma=args.gamma, lam=args.lam, tau=args.tau, c=args.c, r=args.r,
                     knn_k=args.knn_k, max_iter=args.max_iter, tol=args.tol,
                     seed=args.seed, variant=args.variant)
    state, report = fit(d, hp)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_state(state, out / "state.npz")
    report.to_csv(out / "fit_report.csv")
    with open(out / "ranking.csv", "w", encoding="utf-8") as fh:
        fh.write("view,feature,score\n")
        for v, i, s in rank_features(state.W):
            fh.write(f"{v},{i},{s!r}\n")
    return {"out": str(out), "iterations": report.iterations, "converged": report.converged,
            "objective": report.objective[-1]}


def cmd_eval(args):
    d = _load(args)
    state = load_state(args.state)
    views = state.Xhat if args.eval_on == "xhat" else mean_impute(d).views
    res = evaluate_features(views, d.labels, rank_features(state.W), ratios=args.ratios,
                            seed=args.seed, repeats=args.repeats, restarts=args.restarts)
    payload = res.to_dict()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1)
    return {k: payload[k] for k in ("ratios", "acc_mean", "nmi_mean")}


def cmd_dump(args):
    paths = dump_graphs(load_state(args.state), args.out)
    return {"files": [str(p) for p in paths]}


def cmd_sweep(args):
    res = run_experiment(_config(args))
    return {"failures": res["failures"],
            "summary": {f"{m:g}": v["params"] for m, v in res["summary"].items()}}


def cmd_ablate(args):
    res = run_ablation(_config(args))
    return {"ordering_ok": res["ordering_ok"]}


COMMANDS = {"synth": cmd_synth, "fit": cmd_fit, "eval": cmd_eval,
            "dump-graphs": cmd_dump, "sweep": cmd_sweep, "ablate": cmd_ablate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        out = COMMANDS[args.verb](args)
    except Exception as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc), "verb": args.verb},
                  sys.stderr)
        sys.stderr.write("\n")
        return 1
    json.dump(out, sys.stdout, default=float)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
