"""Risk metrics and effect diagnostics.

Three risks are computed per (metric, experiment) cell and averaged with
equal weight per experiment:

  * effect MSE against stored ground-truth effects (available on synthetic
    and semi-synthetic data only),
  * outcome MSE on held-out observations,
  * the R-loss style proxy risk, whose nuisance fits (outcome mean and
    propensity, both ridge with intercept) are trained on the held-out set
    itself, with no clipping of the fitted propensity.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, PotentialOutcomeTensor, format_real
from .numerics import ridge_fit


def pehe(predicted_ites, true_ites) -> float:
    """Mean squared difference between predicted and true effects."""
    a = np.asarray(predicted_ites, dtype=np.float64)
    b = np.asarray(true_ites, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"index mismatch: {a.shape} predictions vs {b.shape} truths")
    if a.size == 0:
        raise ValueError("empty effect arrays")
    d = a - b
    return float(np.mean(d * d))


def mu_risk(predicted_outcomes, observed_outcomes) -> float:
    """Mean squared prediction error on held-out observed outcomes."""
    a = np.asarray(predicted_outcomes, dtype=np.float64)
    b = np.asarray(observed_outcomes, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"index mismatch: {a.shape} predictions vs {b.shape} outcomes")
    if a.size == 0:
        raise ValueError("empty outcome arrays")
    d = a - b
    return float(np.mean(d * d))


def tau_risk(cate_estimates, outcomes, treatments, features, nuisance_reg: float = 1e-6) -> float:
    """Proxy risk: mean of ((y - m(x)) - (t - p(x)) tau(x))^2.

    m (outcome on features) and p (0/1 treatment indicator on features,
    a linear probability model) are ridge fits with intercept trained on
    the supplied held-out rows themselves. Requires both arms present.
    """
    tau = np.asarray(cate_estimates, dtype=np.float64)
    y = np.asarray(outcomes, dtype=np.float64)
    t = np.asarray(treatments, dtype=np.float64)
    x = np.asarray(features, dtype=np.float64)
    if not (len(tau) == len(y) == len(t) == len(x)):
        raise ValueError("cate, outcomes, treatments and features must align")
    if not np.all(np.isin(t, (0.0, 1.0))):
        raise ValueError("treatments must be 0/1")
    if len(np.unique(t)) < 2:
        raise ValueError("held-out set must contain both arms")
    m_hat = ridge_fit(x, y, nuisance_reg).predict(x)
    p_hat = ridge_fit(x, t, nuisance_reg).predict(x)
    r = (y - m_hat) - (t - p_hat) * tau
    return float(np.mean(r * r))


def ite_correlation_matrix(m) -> np.ndarray:
    """Pearson correlations between the columns of a units x experiments slice.

    Columns with zero variance are flagged with a warning and their
    off-diagonal entries set to 0 (diagonal stays 1).
    """
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 2:
        raise ValueError("need a 2-D matrix with at least 2 rows")
    centered = a - a.mean(axis=0)
    sd = np.sqrt(np.mean(centered * centered, axis=0))
    degenerate = sd == 0.0
    if np.any(degenerate):
        warnings.warn(
            f"zero-variance columns {np.flatnonzero(degenerate).tolist()} in correlation matrix"
        )
    safe = np.where(degenerate, 1.0, sd)
    z = centered / safe
    corr = (z.T @ z) / a.shape[0]
    corr[degenerate, :] = 0.0
    corr[:, degenerate] = 0.0
    np.fill_diagonal(corr, 1.0)
    return corr


# ---------------------------------------------------------------------------
# report assembly over a dataset + predicted tensor
# ---------------------------------------------------------------------------


@dataclass
class RiskReport:
    """Per-(metric, experiment) risks plus per-metric and overall averages."""

    rows: list = field(default_factory=list)  # dicts: metric, experiment, pehe, mu_risk, tau_risk
    has_truth: bool = False
    has_tau: bool = False

    def metric_average(self, name: str) -> dict:
        out = {}
        for row in self.rows:
            if row.get(name) is not None:
                out.setdefault(row["metric"], []).append(row[name])
        return {j: float(np.mean(v)) for j, v in sorted(out.items())}

    def overall(self, name: str):
        vals = [row[name] for row in self.rows if row.get(name) is not None]
        return float(np.mean(vals)) if vals else None

    def write_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write("metric_id,experiment_id,pehe,mu_risk,tau_risk\n")
            for row in self.rows:
                f.write(
                    ",".join(
                        [
                            str(row["metric"]),
                            str(row["experiment"]),
                            format_real(row["pehe"]) if row.get("pehe") is not None else "",
                            format_real(row["mu_risk"]) if row.get("mu_risk") is not None else "",
                            format_real(row["tau_risk"]) if row.get("tau_risk") is not None else "",
                        ]
                    )
                    + "\n"
                )

    def write_summary_csv(self, path: str) -> None:
        names = ["pehe", "mu_risk", "tau_risk"]
        per_metric = {name: self.metric_average(name) for name in names}
        metrics = sorted({j for avg in per_metric.values() for j in avg})
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write("metric_id,pehe,mu_risk,tau_risk\n")
            for j in metrics:
                cells = [
                    format_real(per_metric[name][j]) if j in per_metric[name] else ""
                    for name in names
                ]
                f.write(f"{j}," + ",".join(cells) + "\n")
            overall = [
                format_real(self.overall(name)) if self.overall(name) is not None else ""
                for name in names
            ]
            f.write("all," + ",".join(overall) + "\n")


def prediction_pairs(dataset: Dataset, unit_ids, mode: str = "auto"):
    """(unit, experiment) pairs a predictions tensor should cover.

    "auto": pairs with ground truth, plus observed pairs, for the units.
    "all": the full cartesian product units x experiments.
    Returns parallel (unit, experiment) arrays, sorted.
    """
    ids = np.asarray(unit_ids, dtype=np.int64)
    if mode == "all":
        exps = np.arange(dataset.manifest.n_experiments, dtype=np.int64)
        u = np.repeat(ids, len(exps))
        k = np.tile(exps, len(ids))
        return u, k
    if mode != "auto":
        raise ValueError(f"unknown pair mode {mode!r}")
    seen = set()
    if dataset.true_outcomes is not None:
        mask = np.isin(dataset.true_outcomes.unit_ids, ids)
        seen.update(
            zip(
                dataset.true_outcomes.unit_ids[mask].tolist(),
                dataset.true_outcomes.experiment_ids[mask].tolist(),
            )
        )
    mask = np.isin(dataset.observations.unit_ids, ids)
    seen.update(
        zip(
            dataset.observations.unit_ids[mask].tolist(),
            dataset.observations.experiment_ids[mask].tolist(),
        )
    )
    if not seen:
        raise ValueError("no (unit, experiment) pairs to predict for the given units")
    pairs = np.array(sorted(seen), dtype=np.int64)
    return pairs[:, 0], pairs[:, 1]


def lr_predictions_tensor(params, dataset: Dataset, unit_ids, pairs: str = "auto") -> PotentialOutcomeTensor:
    """Predicted outcome tensor from a trained low-rank model."""
    from .lrlearner import predict_rows

    unit_arr, exp_arr = prediction_pairs(dataset, unit_ids, mode=pairs)
    rows = dataset.units.rows_for(unit_arr)
    x = dataset.units.features[rows]
    cols = {name: [] for name in ("u", "k", "j", "t", "y0", "y1")}
    treated_arms = {
        k: [t for t in arms if t != 0]
        for k, arms in dataset.manifest.arms_per_experiment.items()
    }
    for j in range(dataset.manifest.n_metrics):
        for k in sorted(treated_arms):
            sel = exp_arr == k
            if not np.any(sel):
                continue
            n_sel = int(sel.sum())
            j_col = np.full(n_sel, j, dtype=np.int64)
            k_col = np.full(n_sel, k, dtype=np.int64)
            y0 = predict_rows(params, x[sel], j_col, k_col, np.zeros(n_sel, dtype=np.int64))
            for t in treated_arms[k]:
                y1 = predict_rows(params, x[sel], j_col, k_col, np.full(n_sel, t, dtype=np.int64))
                cols["u"].append(unit_arr[sel])
                cols["k"].append(k_col)
                cols["j"].append(j_col)
                cols["t"].append(np.full(n_sel, t, dtype=np.int64))
                cols["y0"].append(y0)
                cols["y1"].append(y1)
    y0 = np.concatenate(cols["y0"])
    y1 = np.concatenate(cols["y1"])
    return PotentialOutcomeTensor(
        unit_ids=np.concatenate(cols["u"]),
        experiment_ids=np.concatenate(cols["k"]),
        metric_ids=np.concatenate(cols["j"]),
        arms=np.concatenate(cols["t"]),
        y_control=y0,
        y_treated=y1,
        ite=y1 - y0,
    )


def _tensor_lookup(tensor: PotentialOutcomeTensor):
    idx = tensor.key_index()

    def get(u, k, j, t):
        try:
            return idx[(int(u), int(k), int(j), int(t))]
        except KeyError:
            raise ValueError(
                f"prediction tensor is missing (unit {u}, experiment {k}, "
                f"metric {j}, arm {t})"
            ) from None

    return get


def build_risk_report(
    dataset: Dataset,
    predictions: PotentialOutcomeTensor,
    split: str = "val",
    include_tau: bool = False,
    nuisance_reg: float = 1e-6,
) -> RiskReport:
    """Assemble per-(metric, experiment) risks for one evaluation split.

    Outcome MSE always; effect MSE when ground truth is stored; the proxy
    risk on request (binary-arm cells only). Predictions must cover every
    evaluated row.
    """
    split_ids = dataset.splits.get(split)
    if len(split_ids) == 0:
        raise ValueError(f"split {split!r} is empty")
    report = RiskReport(has_truth=dataset.true_outcomes is not None, has_tau=include_tau)
    lookup = _tensor_lookup(predictions)

    obs = dataset.observations_for_split(split)
    if len(obs) == 0:
        raise ValueError(f"no observations for split {split!r}")
    pred_rows = np.array(
        [
            lookup(u, k, j, t if t != 0 else _first_treated(dataset, k))
            for u, k, j, t in zip(obs.unit_ids, obs.experiment_ids, obs.metric_ids, obs.arms)
        ]
    )
    yhat_obs = np.where(
        obs.arms == 0,
        predictions.y_control[pred_rows],
        predictions.y_treated[pred_rows],
    )

    truth = dataset.true_outcomes
    truth_mask = None
    if truth is not None:
        truth_mask = np.isin(truth.unit_ids, split_ids)

    for j in range(dataset.manifest.n_metrics):
        for k in sorted(dataset.manifest.arms_per_experiment):
            row = {"metric": j, "experiment": k, "pehe": None, "mu_risk": None, "tau_risk": None}
            cell_obs = (obs.metric_ids == j) & (obs.experiment_ids == k)
            if np.any(cell_obs):
                row["mu_risk"] = mu_risk(yhat_obs[cell_obs], obs.values[cell_obs])
            if truth is not None:
                cell_truth = truth_mask & (truth.metric_ids == j) & (truth.experiment_ids == k)
                if np.any(cell_truth):
                    rows_pred = np.array(
                        [
                            lookup(u, k, j, t)
                            for u, t in zip(truth.unit_ids[cell_truth], truth.arms[cell_truth])
                        ]
                    )
                    row["pehe"] = pehe(predictions.ite[rows_pred], truth.ite[cell_truth])
            if include_tau and np.any(cell_obs):
                arms_here = np.unique(obs.arms[cell_obs])
                binary = cell_obs & np.isin(obs.arms, (0, 1))
                if 0 in arms_here and 1 in arms_here:
                    units_cell = obs.unit_ids[binary]
                    x_cell = dataset.units.features[dataset.units.rows_for(units_cell)]
                    rows_pred = np.array([lookup(u, k, j, 1) for u in units_cell])
                    row["tau_risk"] = tau_risk(
                        predictions.ite[rows_pred],
                        obs.values[binary],
                        obs.arms[binary],
                        x_cell,
                        nuisance_reg,
                    )
            if any(row[name] is not None for name in ("pehe", "mu_risk", "tau_risk")):
                report.rows.append(row)
    return report


def _first_treated(dataset: Dataset, experiment: int) -> int:
    for t in dataset.manifest.arms_per_experiment[int(experiment)]:
        if t != 0:
            return t
    raise ValueError(f"experiment {experiment} has no treated arm")
