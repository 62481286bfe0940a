"""Independent two-model baselines, one pair per (metric, experiment, arm).

Each treated arm of each experiment gets its own pair of ridge regressions,
one fit on that arm's units and one on the controls, with no parameter
sharing anywhere; the estimated effect is the difference of the two
predictions. Within an (experiment, arm) cell the feature Gram matrix is
shared across metrics, which only changes speed, not results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, Observations, PotentialOutcomeTensor
from .numerics import LinearModel, ridge_fit_multi


class EmptyCellError(ValueError):
    """An (experiment, arm) cell has too few observations to fit."""


@dataclass
class TLearnerPair:
    metric: int
    experiment: int
    arm: int
    mu_treated: LinearModel
    mu_control: LinearModel


@dataclass
class TLearnerCollection:
    pairs: dict  # (metric, experiment, arm) -> TLearnerPair
    reg: float

    def pair(self, metric: int, experiment: int, arm: int) -> TLearnerPair:
        try:
            return self.pairs[(int(metric), int(experiment), int(arm))]
        except KeyError:
            raise ValueError(
                f"no fitted pair for metric {metric}, experiment {experiment}, arm {arm}"
            ) from None


def _cell_design(dataset: Dataset, obs: Observations, experiment: int, arm: int):
    """Feature matrix and per-metric outcome matrix for one (k, t) cell."""
    sel = (obs.experiment_ids == experiment) & (obs.arms == arm)
    metrics = np.unique(obs.metric_ids)
    base = sel & (obs.metric_ids == metrics[0])
    unit_ids = obs.unit_ids[base]
    x = dataset.units.features[dataset.units.rows_for(unit_ids)]
    y = np.empty((len(unit_ids), len(metrics)))
    order = np.argsort(unit_ids, kind="stable")
    for c, j in enumerate(metrics):
        sj = sel & (obs.metric_ids == j)
        if not np.array_equal(np.sort(obs.unit_ids[sj]), np.sort(unit_ids)):
            raise EmptyCellError(
                f"experiment {experiment}, arm {arm}: metric {int(j)} does not cover "
                "the same units as the other metrics"
            )
        oj = np.argsort(obs.unit_ids[sj], kind="stable")
        col = np.empty(len(unit_ids))
        col[order] = obs.values[sj][oj]
        y[:, c] = col
    return x, y, metrics


def fit_all(dataset: Dataset, reg: float = 1e-6, split: str = "train") -> TLearnerCollection:
    """Fit every (metric, experiment, treated-arm) pair independently.

    Requires at least 2 observations per (experiment, arm) cell. reg = 0 is
    ordinary least squares and raises on singular cells.
    """
    obs = dataset.observations_for_split(split)
    if len(obs) == 0:
        raise ValueError(f"no observations in split {split!r}")
    pairs = {}
    for k in sorted(int(e) for e in np.unique(obs.experiment_ids)):
        arms = sorted(int(a) for a in np.unique(obs.arms[obs.experiment_ids == k]))
        if 0 not in arms:
            raise EmptyCellError(f"experiment {k} has no control observations")
        counts = {
            a: int(np.sum((obs.experiment_ids == k) & (obs.arms == a) & (obs.metric_ids == obs.metric_ids.min())))
            for a in arms
        }
        for a, c in counts.items():
            if c < 2:
                raise EmptyCellError(
                    f"experiment {k}, arm {a}: {c} observation(s), need at least 2"
                )
        x0, y0, metrics = _cell_design(dataset, obs, k, 0)
        coef0, int0 = ridge_fit_multi(x0, y0, reg)
        for a in arms:
            if a == 0:
                continue
            x1, y1, _ = _cell_design(dataset, obs, k, a)
            coef1, int1 = ridge_fit_multi(x1, y1, reg)
            for c, j in enumerate(metrics):
                pairs[(int(j), k, a)] = TLearnerPair(
                    metric=int(j),
                    experiment=k,
                    arm=a,
                    mu_treated=LinearModel(coef=coef1[:, c], intercept=float(int1[c])),
                    mu_control=LinearModel(coef=coef0[:, c], intercept=float(int0[c])),
                )
    return TLearnerCollection(pairs=pairs, reg=reg)


def t_cate(pair: TLearnerPair, x) -> float:
    """Estimated effect for one unit: treated prediction minus control."""
    x = np.asarray(x, dtype=np.float64)
    return float(pair.mu_treated.predict(x) - pair.mu_control.predict(x))


def t_cate_batch(pair: TLearnerPair, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return pair.mu_treated.predict(x) - pair.mu_control.predict(x)


def predictions_tensor(
    collection: TLearnerCollection,
    dataset: Dataset,
    unit_ids,
    pairs: str = "auto",
) -> PotentialOutcomeTensor:
    """Predicted outcome tensor for the given units, in the shared layout.

    pairs="auto" predicts the (unit, experiment) pairs present in the
    ground-truth tensor (falling back to observed pairs); pairs="all"
    predicts every unit x experiment combination, as needed for slice
    diagnostics.
    """
    from .evaluate import prediction_pairs  # local import to avoid a cycle

    unit_arr, exp_arr = prediction_pairs(dataset, unit_ids, mode=pairs)
    rows = dataset.units.rows_for(unit_arr)
    x = dataset.units.features[rows]
    cols = {name: [] for name in ("u", "k", "j", "t", "y0", "y1")}
    for (j, k, a), pair in sorted(collection.pairs.items()):
        sel = exp_arr == k
        if not np.any(sel):
            continue
        y0 = pair.mu_control.predict(x[sel])
        y1 = pair.mu_treated.predict(x[sel])
        cols["u"].append(unit_arr[sel])
        cols["k"].append(np.full(sel.sum(), k, dtype=np.int64))
        cols["j"].append(np.full(sel.sum(), j, dtype=np.int64))
        cols["t"].append(np.full(sel.sum(), a, dtype=np.int64))
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
