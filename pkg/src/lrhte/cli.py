"""Config-driven command line for reproducible experiment pipelines.

Subcommands: generate, semisynth, train, baseline, eval, rank, finetune,
tune. Every command takes an optional --config JSON file; explicit flags
override config values, which override built-in defaults. Each run writes a
run_config.json echo into its output directory, and reruns with identical
configuration produce byte-identical outputs.

Exit codes: 0 success, 2 validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import dataset as ds_mod
from . import evaluate as ev
from . import lrlearner as lrl
from . import plots
from . import rank as rank_mod
from . import synthgen
from . import tlearner
from .dataset import format_real
from .numerics import RngStream


def _merge_config(defaults: dict, config_path: str | None, args: argparse.Namespace) -> dict:
    cfg = dict(defaults)
    if config_path:
        with open(config_path, "r", encoding="utf-8") as f:
            loaded = json.load(f)
        unknown = set(loaded) - set(defaults)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _write_run_config(out_dir: str, command: str, cfg: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "run_config.json"), "w", encoding="utf-8") as f:
        json.dump({"command": command, **cfg}, f, indent=2, sort_keys=True)
        f.write("\n")


def _csv_lines(path: str, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(header + "\n")
        for row in rows:
            f.write(row + "\n")


# ---------------------------------------------------------------------------
# generate / semisynth
# ---------------------------------------------------------------------------

GENERATE_DEFAULTS = {
    "out": None,
    "n": 1000,
    "latent_dim": 32,
    "feature_dim": 128,
    "experiments": 50,
    "metrics": 5,
    "noise_sd": 0.1,
    "seed": 0,
    "n_val": 0,
    "n_test": 0,
    "operator_rank": None,
}


def cmd_generate(args) -> int:
    cfg = _merge_config(GENERATE_DEFAULTS, args.config, args)
    if not cfg["out"]:
        raise ValueError("generate: --out is required")
    synth_cfg = synthgen.SynthConfig(
        n=int(cfg["n"]),
        latent_dim=int(cfg["latent_dim"]),
        feature_dim=int(cfg["feature_dim"]),
        experiments=int(cfg["experiments"]),
        metrics=int(cfg["metrics"]),
        noise_sd=float(cfg["noise_sd"]),
        seed=int(cfg["seed"]),
        n_val=int(cfg["n_val"]),
        n_test=int(cfg["n_test"]),
        operator_rank=None if cfg["operator_rank"] is None else int(cfg["operator_rank"]),
    )
    dataset = synthgen.gen_synthetic(synth_cfg)
    ds_mod.save_dataset(cfg["out"], dataset)
    _write_run_config(cfg["out"], "generate", cfg)
    print(
        f"generated {dataset.units.n_units} units, "
        f"{dataset.manifest.n_experiments} experiments, "
        f"{dataset.manifest.n_metrics} metrics -> {cfg['out']}"
    )
    return 0


SEMISYNTH_DEFAULTS = {
    "out": None,
    "features": None,
    "logits": None,
    "control_class": 0,
    "assign_prob": 0.1,
    "seed": 0,
    "train_frac": 0.8,
    "val_frac": 0.1,
    "test_frac": 0.1,
}


def cmd_semisynth(args) -> int:
    cfg = _merge_config(SEMISYNTH_DEFAULTS, args.config, args)
    for key in ("out", "features", "logits"):
        if not cfg[key]:
            raise ValueError(f"semisynth: --{key} is required")
    features = synthgen.load_matrix_csv(cfg["features"])
    logits = synthgen.load_matrix_csv(cfg["logits"])
    dataset = synthgen.semisynth_from_logits(
        features,
        logits,
        control_class=int(cfg["control_class"]),
        assign_prob=float(cfg["assign_prob"]),
        stream=RngStream(int(cfg["seed"])),
        split_fractions=(float(cfg["train_frac"]), float(cfg["val_frac"]), float(cfg["test_frac"])),
    )
    ds_mod.save_dataset(cfg["out"], dataset)
    _write_run_config(cfg["out"], "semisynth", cfg)
    print(
        f"semisynthetic dataset: {dataset.units.n_units} units, "
        f"{dataset.manifest.n_experiments} experiments -> {cfg['out']}"
    )
    return 0


# ---------------------------------------------------------------------------
# train / baseline
# ---------------------------------------------------------------------------

TRAIN_DEFAULTS = {
    "data": None,
    "out": None,
    "learning_rate": 5e-4,
    "weight_decay": 5e-3,
    "latent_dim": 32,
    "hidden_dim": None,
    "epochs": 250,
    "batch_size": 1024,
    "seed": 0,
    "linear": False,
}


def _hyper_from_cfg(cfg: dict) -> lrl.HyperConfig:
    return lrl.HyperConfig(
        learning_rate=float(cfg["learning_rate"]),
        weight_decay=float(cfg["weight_decay"]),
        latent_dim=int(cfg["latent_dim"]),
        hidden_dim=None if cfg["hidden_dim"] is None else int(cfg["hidden_dim"]),
        epochs=int(cfg["epochs"]),
        batch_size=int(cfg["batch_size"]),
        seed=int(cfg["seed"]),
        use_relu=not bool(cfg["linear"]),
    )


def cmd_train(args) -> int:
    cfg = _merge_config(TRAIN_DEFAULTS, args.config, args)
    if not cfg["data"] or not cfg["out"]:
        raise ValueError("train: --data and --out are required")
    dataset = ds_mod.load_dataset(cfg["data"])
    hyper = _hyper_from_cfg(cfg)
    params, report = lrl.train(dataset, hyper)
    os.makedirs(cfg["out"], exist_ok=True)
    lrl.save_params(os.path.join(cfg["out"], "model.json"), params, hyper)
    _csv_lines(
        os.path.join(cfg["out"], "train_report.csv"),
        "epoch,train_loss",
        (f"{i + 1},{format_real(loss)}" for i, loss in enumerate(report.epoch_losses)),
    )
    _csv_lines(
        os.path.join(cfg["out"], "val_mu_risk.csv"),
        "metric_id,mu_risk",
        (f"{j},{format_real(v)}" for j, v in sorted(report.val_mu_risk.items())),
    )
    plots.save_loss_figure(os.path.join(cfg["out"], "loss.png"), report.epoch_losses)
    _write_run_config(cfg["out"], "train", cfg)
    final = report.epoch_losses[-1]
    print(f"trained {hyper.epochs} epochs, final loss {final:.6g} -> {cfg['out']}")
    if report.val_mu_risk:
        avg = float(np.mean(list(report.val_mu_risk.values())))
        print(f"validation outcome mse (metric average): {avg:.6g}")
    return 0


BASELINE_DEFAULTS = {
    "data": None,
    "out": None,
    "reg": 1e-6,
    "predict_split": "val",
    "pairs": "auto",
}


def cmd_baseline(args) -> int:
    cfg = _merge_config(BASELINE_DEFAULTS, args.config, args)
    if not cfg["data"] or not cfg["out"]:
        raise ValueError("baseline: --data and --out are required")
    dataset = ds_mod.load_dataset(cfg["data"])
    collection = tlearner.fit_all(dataset, reg=float(cfg["reg"]))
    unit_ids = dataset.splits.get(cfg["predict_split"])
    tensor = tlearner.predictions_tensor(collection, dataset, unit_ids, pairs=cfg["pairs"])
    os.makedirs(cfg["out"], exist_ok=True)
    ds_mod.save_tensor_csv(os.path.join(cfg["out"], "predictions.csv"), tensor)
    _csv_lines(
        os.path.join(cfg["out"], "fit_summary.csv"),
        "metric_id,experiment_id,arm",
        (f"{j},{k},{t}" for j, k, t in sorted(collection.pairs)),
    )
    _write_run_config(cfg["out"], "baseline", cfg)
    print(
        f"fitted {len(collection.pairs)} independent pairs; predictions for "
        f"{len(unit_ids)} {cfg['predict_split']} units -> {cfg['out']}"
    )
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

EVAL_DEFAULTS = {
    "data": None,
    "out": None,
    "model": None,
    "predictions": None,
    "split": "val",
    "tau_risk": False,
    "nuisance_reg": 1e-6,
    "pairs": "auto",
}


def cmd_eval(args) -> int:
    cfg = _merge_config(EVAL_DEFAULTS, args.config, args)
    if not cfg["data"] or not cfg["out"]:
        raise ValueError("eval: --data and --out are required")
    if bool(cfg["model"]) == bool(cfg["predictions"]):
        raise ValueError("eval: provide exactly one of --model or --predictions")
    dataset = ds_mod.load_dataset(cfg["data"])
    if cfg["model"]:
        params, _ = lrl.load_params(cfg["model"])
        tensor = ev.lr_predictions_tensor(
            params, dataset, dataset.splits.get(cfg["split"]), pairs=cfg["pairs"]
        )
    else:
        tensor = ds_mod.load_tensor_csv(cfg["predictions"])
    report = ev.build_risk_report(
        dataset,
        tensor,
        split=cfg["split"],
        include_tau=bool(cfg["tau_risk"]),
        nuisance_reg=float(cfg["nuisance_reg"]),
    )
    os.makedirs(cfg["out"], exist_ok=True)
    report.write_csv(os.path.join(cfg["out"], "risk_report.csv"))
    report.write_summary_csv(os.path.join(cfg["out"], "risk_summary.csv"))
    plots.save_risk_figure(
        os.path.join(cfg["out"], "risks.png"),
        {
            "pehe": report.metric_average("pehe"),
            "mu_risk": report.metric_average("mu_risk"),
            "tau_risk": report.metric_average("tau_risk"),
        },
    )
    _write_run_config(cfg["out"], "eval", cfg)
    parts = []
    for name in ("pehe", "mu_risk", "tau_risk"):
        val = report.overall(name)
        if val is not None:
            parts.append(f"{name}={val:.6g}")
    print(f"eval on split {cfg['split']!r}: " + ", ".join(parts) + f" -> {cfg['out']}")
    return 0


# ---------------------------------------------------------------------------
# rank
# ---------------------------------------------------------------------------

RANK_DEFAULTS = {
    "data": None,
    "out": None,
    "model": None,
    "predictions": None,
    "use_true": False,
    "split": "val",
    "metrics": None,  # comma-separated; default all
    "arm": 1,
    "folds": 5,
    "max_rank": None,
    "als_iters": 40,
    "seed": 0,
}


def cmd_rank(args) -> int:
    cfg = _merge_config(RANK_DEFAULTS, args.config, args)
    if not cfg["data"] or not cfg["out"]:
        raise ValueError("rank: --data and --out are required")
    sources = [bool(cfg["model"]), bool(cfg["predictions"]), bool(cfg["use_true"])]
    if sum(sources) != 1:
        raise ValueError("rank: provide exactly one of --model, --predictions, --use-true")
    dataset = ds_mod.load_dataset(cfg["data"])

    if cfg["split"] == "all":
        unit_ids = dataset.units.unit_ids
    else:
        unit_ids = dataset.splits.get(cfg["split"])
    if cfg["use_true"]:
        if dataset.true_outcomes is None:
            raise ValueError("rank: dataset has no ground-truth tensor")
        tensor = dataset.true_outcomes
        mask = np.isin(tensor.unit_ids, unit_ids)
        tensor = ds_mod.PotentialOutcomeTensor(
            tensor.unit_ids[mask],
            tensor.experiment_ids[mask],
            tensor.metric_ids[mask],
            tensor.arms[mask],
            tensor.y_control[mask],
            tensor.y_treated[mask],
            tensor.ite[mask],
        )
    elif cfg["model"]:
        params, _ = lrl.load_params(cfg["model"])
        tensor = ev.lr_predictions_tensor(params, dataset, unit_ids, pairs="all")
    else:
        tensor = ds_mod.load_tensor_csv(cfg["predictions"])

    if cfg["metrics"] is None:
        metric_ids = sorted(int(j) for j in np.unique(tensor.metric_ids))
    else:
        metric_ids = [int(j) for j in str(cfg["metrics"]).split(",")]

    os.makedirs(cfg["out"], exist_ok=True)
    stream = RngStream(int(cfg["seed"]))
    spectra = {}
    curves = {}
    selected = {}
    rows = []
    for j in metric_ids:
        mat, _, _ = ds_mod.ite_slice(tensor, j, arm=int(cfg["arm"]))
        report = rank_mod.bcv_effective_rank(
            mat,
            folds=int(cfg["folds"]),
            max_rank=None if cfg["max_rank"] is None else int(cfg["max_rank"]),
            stream=stream.child(j),
            als_iters=int(cfg["als_iters"]),
            metric=j,
        )
        spectra[j] = report.singular_values
        curves[j] = report.mean_errors
        selected[j] = report.selected_rank
        report.write_csv(os.path.join(cfg["out"], f"bcv_metric{j}.csv"))
        corr = ev.ite_correlation_matrix(mat)
        _csv_lines(
            os.path.join(cfg["out"], f"correlation_metric{j}.csv"),
            ",".join(str(c) for c in range(corr.shape[1])),
            (",".join(format_real(x) for x in row) for row in corr),
        )
        plots.save_correlation_figure(
            os.path.join(cfg["out"], f"correlation_metric{j}.png"), corr, metric=j
        )
        rows.append(f"{j},{report.selected_rank}")
    rank_mod.write_spectrum_csv(os.path.join(cfg["out"], "spectrum.csv"), spectra)
    _csv_lines(os.path.join(cfg["out"], "rank_report.csv"), "metric_id,selected_rank", rows)
    plots.save_spectrum_figure(os.path.join(cfg["out"], "spectrum.png"), spectra)
    plots.save_bcv_figure(os.path.join(cfg["out"], "bcv.png"), curves, selected)
    _write_run_config(cfg["out"], "rank", cfg)
    print(
        "effective ranks: "
        + ", ".join(f"metric {j}: {selected[j]}" for j in metric_ids)
        + f" -> {cfg['out']}"
    )
    return 0


# ---------------------------------------------------------------------------
# finetune
# ---------------------------------------------------------------------------

FINETUNE_DEFAULTS = {
    "data": None,
    "out": None,
    "model": None,
    "experiment": None,
    "metric": 0,
    "split": "train",
    "reg": 1e-8,
}


def cmd_finetune(args) -> int:
    cfg = _merge_config(FINETUNE_DEFAULTS, args.config, args)
    if not cfg["data"] or not cfg["out"] or not cfg["model"]:
        raise ValueError("finetune: --data, --model and --out are required")
    dataset = ds_mod.load_dataset(cfg["data"])
    params, _ = lrl.load_params(cfg["model"])
    obs = dataset.observations_for_split(cfg["split"])
    if cfg["experiment"] is None:
        experiment = int(np.unique(obs.experiment_ids)[0])
    else:
        experiment = int(cfg["experiment"])
    sel = (obs.experiment_ids == experiment) & (obs.metric_ids == int(cfg["metric"]))
    if not np.any(sel):
        raise ValueError(
            f"finetune: no observations for experiment {experiment}, metric {cfg['metric']}"
        )
    x = dataset.units.features[dataset.units.rows_for(obs.unit_ids[sel])]
    embeddings = lrl.finetune_new_experiment(
        params, x, obs.arms[sel], obs.values[sel], reg=float(cfg["reg"])
    )
    v = lrl.embed_units(params, x)
    os.makedirs(cfg["out"], exist_ok=True)
    with open(os.path.join(cfg["out"], "finetuned.json"), "w", encoding="utf-8") as f:
        json.dump(
            {
                "experiment": experiment,
                "metric": int(cfg["metric"]),
                "embeddings": {str(t): e.tolist() for t, e in sorted(embeddings.items())},
            },
            f,
            sort_keys=True,
        )
        f.write("\n")
    rows = []
    for t, e in sorted(embeddings.items()):
        arm_sel = obs.arms[sel] == t
        resid = v[arm_sel] @ e - obs.values[sel][arm_sel]
        rows.append(f"{t},{int(arm_sel.sum())},{format_real(float(np.mean(resid * resid)))}")
    _csv_lines(os.path.join(cfg["out"], "finetune_report.csv"), "arm,n_obs,mse_residual", rows)
    _write_run_config(cfg["out"], "finetune", cfg)
    print(
        f"fine-tuned experiment {experiment}: arms {sorted(embeddings)} -> {cfg['out']}"
    )
    return 0


# ---------------------------------------------------------------------------
# tune
# ---------------------------------------------------------------------------

TUNE_DEFAULTS = {
    "data": None,
    "out": None,
    "learning_rates": "5e-4",
    "weight_decays": "5e-3",
    "latent_dims": "32",
    "hidden_dim": None,
    "epochs": 250,
    "batch_size": 1024,
    "seed": 0,
    "linear": False,
    "risk": "mu",
    "nuisance_reg": 1e-6,
}


def _float_list(spec) -> list:
    if isinstance(spec, (list, tuple)):
        return [float(x) for x in spec]
    return [float(x) for x in str(spec).split(",") if x != ""]


def cmd_tune(args) -> int:
    cfg = _merge_config(TUNE_DEFAULTS, args.config, args)
    if not cfg["data"] or not cfg["out"]:
        raise ValueError("tune: --data and --out are required")
    if cfg["risk"] not in ("mu", "tau"):
        raise ValueError("tune: --risk must be 'mu' or 'tau'")
    lrs = _float_list(cfg["learning_rates"])
    wds = _float_list(cfg["weight_decays"])
    dims = [int(x) for x in _float_list(cfg["latent_dims"])]
    if not lrs or not wds or not dims:
        raise ValueError("tune: empty hyperparameter grid")
    dataset = ds_mod.load_dataset(cfg["data"])

    leaderboard = []
    best = None
    for lr in lrs:
        for wd in wds:
            for d in dims:
                hyper = lrl.HyperConfig(
                    learning_rate=lr,
                    weight_decay=wd,
                    latent_dim=d,
                    hidden_dim=None if cfg["hidden_dim"] is None else int(cfg["hidden_dim"]),
                    epochs=int(cfg["epochs"]),
                    batch_size=int(cfg["batch_size"]),
                    seed=int(cfg["seed"]),
                    use_relu=not bool(cfg["linear"]),
                )
                params, report = lrl.train(dataset, hyper)
                if cfg["risk"] == "mu":
                    score = float(np.mean(list(report.val_mu_risk.values())))
                else:
                    tensor = ev.lr_predictions_tensor(params, dataset, dataset.splits.val)
                    risk_report = ev.build_risk_report(
                        dataset,
                        tensor,
                        split="val",
                        include_tau=True,
                        nuisance_reg=float(cfg["nuisance_reg"]),
                    )
                    score = risk_report.overall("tau_risk")
                leaderboard.append((score, lr, wd, d))
                if best is None or score < best[0][0]:
                    best = ((score, lr, wd, d), params, hyper)
                print(f"  lr={lr:g} wd={wd:g} d={d}: {cfg['risk']}-risk {score:.6g}")

    leaderboard.sort()
    os.makedirs(cfg["out"], exist_ok=True)
    _csv_lines(
        os.path.join(cfg["out"], "leaderboard.csv"),
        f"{cfg['risk']}_risk,learning_rate,weight_decay,latent_dim",
        (
            f"{format_real(s)},{format_real(lr)},{format_real(wd)},{d}"
            for s, lr, wd, d in leaderboard
        ),
    )
    lrl.save_params(os.path.join(cfg["out"], "best_model.json"), best[1], best[2])
    _write_run_config(cfg["out"], "tune", cfg)
    score, lr, wd, d = best[0]
    print(f"best: lr={lr:g} wd={wd:g} d={d} ({cfg['risk']}-risk {score:.6g}) -> {cfg['out']}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lrhte",
        description="Joint low-rank treatment-effect estimation across experiments and metrics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, helptext):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.set_defaults(func=func)
        return p

    p = add("generate", cmd_generate, "generate a synthetic multi-experiment dataset")
    p.add_argument("--out")
    p.add_argument("--n", type=int, help="training units per arm per experiment")
    p.add_argument("--latent-dim", dest="latent_dim", type=int)
    p.add_argument("--feature-dim", dest="feature_dim", type=int)
    p.add_argument("--experiments", type=int)
    p.add_argument("--metrics", type=int)
    p.add_argument("--noise-sd", dest="noise_sd", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-val", dest="n_val", type=int)
    p.add_argument("--n-test", dest="n_test", type=int)
    p.add_argument("--operator-rank", dest="operator_rank", type=int)

    p = add("semisynth", cmd_semisynth, "build a dataset from classifier features and logits")
    p.add_argument("--out")
    p.add_argument("--features", help="headered CSV, one row per unit")
    p.add_argument("--logits", help="headered CSV, one column per class")
    p.add_argument("--control-class", dest="control_class", type=int)
    p.add_argument("--assign-prob", dest="assign_prob", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--train-frac", dest="train_frac", type=float)
    p.add_argument("--val-frac", dest="val_frac", type=float)
    p.add_argument("--test-frac", dest="test_frac", type=float)

    p = add("train", cmd_train, "train the low-rank learner")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--latent-dim", dest="latent_dim", type=int)
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--linear", action="store_const", const=True, help="disable the ReLU")

    p = add("baseline", cmd_baseline, "fit independent per-experiment baselines")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--reg", type=float)
    p.add_argument("--predict-split", dest="predict_split", choices=("train", "val", "test"))
    p.add_argument("--pairs", choices=("auto", "all"))

    p = add("eval", cmd_eval, "compute risks for a model or a predictions file")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--model")
    p.add_argument("--predictions")
    p.add_argument("--split", choices=("train", "val", "test"))
    p.add_argument("--tau-risk", dest="tau_risk", action="store_const", const=True)
    p.add_argument("--nuisance-reg", dest="nuisance_reg", type=float)
    p.add_argument("--pairs", choices=("auto", "all"))

    p = add("rank", cmd_rank, "singular spectra, correlations, and effective rank")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--model")
    p.add_argument("--predictions")
    p.add_argument("--use-true", dest="use_true", action="store_const", const=True)
    p.add_argument("--split", choices=("train", "val", "test", "all"))
    p.add_argument("--metrics", help="comma-separated metric ids (default: all)")
    p.add_argument("--arm", type=int)
    p.add_argument("--folds", type=int)
    p.add_argument("--max-rank", dest="max_rank", type=int)
    p.add_argument("--als-iters", dest="als_iters", type=int)
    p.add_argument("--seed", type=int)

    p = add("finetune", cmd_finetune, "fit arm embeddings for a new experiment, extractor frozen")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--model")
    p.add_argument("--experiment", type=int)
    p.add_argument("--metric", type=int)
    p.add_argument("--split", choices=("train", "val", "test"))
    p.add_argument("--reg", type=float)

    p = add("tune", cmd_tune, "grid search scored by validation risk")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--learning-rates", dest="learning_rates")
    p.add_argument("--weight-decays", dest="weight_decays")
    p.add_argument("--latent-dims", dest="latent_dims")
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--linear", action="store_const", const=True)
    p.add_argument("--risk", choices=("mu", "tau"))
    p.add_argument("--nuisance-reg", dest="nuisance_reg", type=float)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ArithmeticError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3
    except (ValueError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
