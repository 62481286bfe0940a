"""The low-rank learner: a bilinear embedding model trained jointly on all
experiments and metrics.

A two-layer network maps unit features to a d-dimensional embedding v(x);
each (experiment, arm) pair, control included, owns a d-vector; each metric
owns a d x d operator. The predicted outcome is the bilinear form
v(x)' A_j e_kt and the predicted effect of arm t is v(x)' A_j (e_kt - e_k0).
Training minimizes mean squared prediction error plus an L2 penalty on
weights, embeddings, and operators (biases unpenalized) with Adam on
analytically derived gradients; everything is plain float64 numpy, seeded
and deterministic.
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from .dataset import Dataset
from .numerics import RngStream

MODEL_FORMAT_VERSION = "lrhte-model-v1"

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class TrainingDivergedError(ArithmeticError):
    """Training loss became non-finite."""


class ModelFormatError(ValueError):
    """Model file is missing, corrupt, or has an unsupported version."""


@dataclass
class HyperConfig:
    learning_rate: float = 5e-4
    weight_decay: float = 5e-3
    latent_dim: int = 32
    hidden_dim: int | None = None  # defaults to latent_dim
    epochs: int = 250
    batch_size: int = 1024
    seed: int = 0
    use_relu: bool = True

    @property
    def hidden(self) -> int:
        return self.latent_dim if self.hidden_dim is None else self.hidden_dim

    def validate(self):
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ValueError("learning rate and weight decay must be nonnegative")
        if min(self.latent_dim, self.hidden, self.epochs, self.batch_size) < 1:
            raise ValueError("dims, epochs and batch size must be >= 1")


@dataclass
class LRParams:
    """Full factorization state; all blocks are float64 arrays."""

    w1: np.ndarray  # (h, m)
    b1: np.ndarray  # (h,)
    w2: np.ndarray  # (d, h)
    b2: np.ndarray  # (d,)
    arm_emb: np.ndarray  # (n_arm_rows, d), one row per (experiment, arm)
    arm_keys: list  # [(experiment, arm), ...] in arm_emb row order
    ops: np.ndarray  # (J, d, d)
    use_relu: bool = True

    def __post_init__(self):
        self._row = {key: i for i, key in enumerate(self.arm_keys)}

    @property
    def feature_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def latent_dim(self) -> int:
        return self.w2.shape[0]

    @property
    def n_metrics(self) -> int:
        return self.ops.shape[0]

    def arm_row(self, experiment: int, arm: int) -> int:
        try:
            return self._row[(int(experiment), int(arm))]
        except KeyError:
            raise ValueError(f"unknown (experiment, arm) pair ({experiment}, {arm})") from None

    def arm_rows(self, experiments, arms) -> np.ndarray:
        return np.array(
            [self.arm_row(k, t) for k, t in zip(np.atleast_1d(experiments), np.atleast_1d(arms))]
        )

    def blocks(self):
        return [self.w1, self.b1, self.w2, self.b2, self.arm_emb, self.ops]

    def copy(self) -> "LRParams":
        return LRParams(
            w1=self.w1.copy(),
            b1=self.b1.copy(),
            w2=self.w2.copy(),
            b2=self.b2.copy(),
            arm_emb=self.arm_emb.copy(),
            arm_keys=list(self.arm_keys),
            ops=self.ops.copy(),
            use_relu=self.use_relu,
        )


@dataclass
class LRGrads:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    arm_emb: np.ndarray
    ops: np.ndarray

    def blocks(self):
        return [self.w1, self.b1, self.w2, self.b2, self.arm_emb, self.ops]


@dataclass
class TrainReport:
    epoch_losses: list = field(default_factory=list)
    val_mu_risk: dict = field(default_factory=dict)  # metric_id -> mse, empty if no val split


def init_params(
    feature_dim: int,
    arms_per_experiment: dict,
    n_metrics: int,
    hyper: HyperConfig,
    stream: RngStream | None = None,
) -> LRParams:
    """Seeded initialization: uniform +-1/sqrt(fan_in) weights, zero biases,
    N(0, 1/d) embeddings, and identity-anchored operators."""
    if stream is None:
        stream = RngStream(hyper.seed).child(0)
    h, d, m = hyper.hidden, hyper.latent_dim, feature_dim
    w1 = (stream.uniform01(h * m).reshape(h, m) * 2.0 - 1.0) / np.sqrt(m)
    w2 = (stream.uniform01(d * h).reshape(d, h) * 2.0 - 1.0) / np.sqrt(h)
    arm_keys = [
        (int(k), int(t))
        for k in sorted(arms_per_experiment)
        for t in sorted(arms_per_experiment[k])
    ]
    arm_emb = stream.std_normal(len(arm_keys) * d).reshape(len(arm_keys), d) / np.sqrt(d)
    ops = np.stack(
        [
            np.eye(d) + stream.std_normal(d * d).reshape(d, d) * (0.1 / np.sqrt(d))
            for _ in range(n_metrics)
        ]
    )
    return LRParams(
        w1=w1,
        b1=np.zeros(h),
        w2=w2,
        b2=np.zeros(d),
        arm_emb=arm_emb,
        arm_keys=arm_keys,
        ops=ops,
        use_relu=hyper.use_relu,
    )


def embed_units(params: LRParams, x: np.ndarray) -> np.ndarray:
    """Unit embeddings for a (n, m) feature matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.feature_dim:
        raise ValueError(
            f"features have shape {x.shape}, expected (*, {params.feature_dim})"
        )
    a1 = x @ params.w1.T + params.b1
    h1 = np.maximum(a1, 0.0) if params.use_relu else a1
    return h1 @ params.w2.T + params.b2


def embed_unit(params: LRParams, x) -> np.ndarray:
    """Embedding v(x) for a single feature vector."""
    return embed_units(params, np.asarray(x, dtype=np.float64)[None, :])[0]


def predict_outcome(params: LRParams, x, metric: int, experiment: int, arm: int) -> float:
    """Predicted potential outcome v(x)' A_j e for one unit."""
    if not 0 <= metric < params.n_metrics:
        raise ValueError(f"unknown metric {metric}")
    v = embed_unit(params, x)
    e = params.arm_emb[params.arm_row(experiment, arm)]
    return float(v @ (params.ops[metric] @ e))


def predict_cate(params: LRParams, x, metric: int, experiment: int, arm: int) -> float:
    """Predicted effect of `arm` vs control: v(x)' A_j (e_arm - e_0)."""
    if arm == 0:
        raise ValueError("cate is defined for treated arms (arm != 0)")
    if not 0 <= metric < params.n_metrics:
        raise ValueError(f"unknown metric {metric}")
    v = embed_unit(params, x)
    e_t = params.arm_emb[params.arm_row(experiment, arm)]
    e_0 = params.arm_emb[params.arm_row(experiment, 0)]
    return float(v @ (params.ops[metric] @ (e_t - e_0)))


def predict_rows(params: LRParams, x, metrics, experiments, arms, chunk: int = 65536) -> np.ndarray:
    """Vectorized predicted outcomes for parallel (x_i, j_i, k_i, t_i) rows."""
    x = np.asarray(x, dtype=np.float64)
    j_arr = np.asarray(metrics, dtype=np.int64)
    rows = params.arm_rows(experiments, arms)
    out = np.empty(len(j_arr))
    for a in range(0, len(j_arr), chunk):
        b = min(a + chunk, len(j_arr))
        v = embed_units(params, x[a:b])
        e_sel = params.arm_emb[rows[a:b]]
        z = np.empty_like(v)
        for j in np.unique(j_arr[a:b]):
            sel = j_arr[a:b] == j
            z[sel] = e_sel[sel] @ params.ops[j].T
        out[a:b] = np.einsum("id,id->i", v, z)
    return out


def _scatter_rows(target: np.ndarray, rows: np.ndarray, values: np.ndarray) -> None:
    # segment-sum: sort rows once, then reduce contiguous runs; much faster
    # than np.add.at or per-column bincount
    order = np.argsort(rows, kind="stable")
    sorted_rows = rows[order]
    sorted_vals = values[order]
    starts = np.flatnonzero(np.diff(sorted_rows, prepend=sorted_rows[0] - 1))
    sums = np.add.reduceat(sorted_vals, starts, axis=0)
    target[sorted_rows[starts]] += sums


def loss_and_grads(
    params: LRParams,
    x,
    metrics,
    experiments,
    arms,
    y,
    weight_decay: float = 0.0,
):
    """Mean squared residual plus L2 penalty, with analytic gradients.

    The penalty applies to w1, w2, the arm embeddings, and the operators;
    biases are unpenalized. Gradients chain the bilinear-form derivatives
    through the feature network, with the ReLU subgradient taken as 0 at 0.
    Returns (loss, LRGrads).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    j_arr = np.asarray(metrics, dtype=np.int64)
    n = len(y)
    if n == 0:
        raise ValueError("empty batch")
    rows = params.arm_rows(experiments, arms)

    a1 = x @ params.w1.T + params.b1
    h1 = np.maximum(a1, 0.0) if params.use_relu else a1
    v = h1 @ params.w2.T + params.b2
    e_sel = params.arm_emb[rows]

    z = np.empty_like(v)  # A_j e per row
    w = np.empty_like(v)  # A_j' v per row
    uniq = np.unique(j_arr)
    for j in uniq:
        sel = j_arr == j
        z[sel] = e_sel[sel] @ params.ops[j].T
        w[sel] = v[sel] @ params.ops[j]
    yhat = np.einsum("id,id->i", v, z)
    resid = yhat - y

    wd = float(weight_decay)
    loss = float(np.mean(resid * resid))
    if wd > 0.0:
        loss += wd * (
            float(np.sum(params.w1 * params.w1))
            + float(np.sum(params.w2 * params.w2))
            + float(np.sum(params.arm_emb * params.arm_emb))
            + float(np.sum(params.ops * params.ops))
        )

    g = (2.0 / n) * resid
    dv = g[:, None] * z
    d_emb = np.zeros_like(params.arm_emb)
    _scatter_rows(d_emb, rows, g[:, None] * w)
    d_ops = np.zeros_like(params.ops)
    for j in uniq:
        sel = j_arr == j
        d_ops[j] = (v[sel] * g[sel, None]).T @ e_sel[sel]
    if wd > 0.0:
        d_emb += 2.0 * wd * params.arm_emb
        d_ops += 2.0 * wd * params.ops

    d_w2 = dv.T @ h1
    d_b2 = dv.sum(axis=0)
    dh = dv @ params.w2
    if params.use_relu:
        dh = dh * (a1 > 0.0)
    d_w1 = dh.T @ x
    d_b1 = dh.sum(axis=0)
    if wd > 0.0:
        d_w1 += 2.0 * wd * params.w1
        d_w2 += 2.0 * wd * params.w2

    return loss, LRGrads(w1=d_w1, b1=d_b1, w2=d_w2, b2=d_b2, arm_emb=d_emb, ops=d_ops)


def train(
    dataset: Dataset,
    hyper: HyperConfig,
    init: LRParams | None = None,
    train_split: str = "train",
    val_split: str = "val",
):
    """Adam over shuffled minibatches of the training split's observations.

    Deterministic given hyper.seed. Returns (params, TrainReport) where the
    report carries the per-epoch mean training loss and, when the validation
    split is nonempty, the final validation outcome MSE per metric.
    """
    hyper.validate()
    obs = dataset.observations_for_split(train_split)
    if len(obs) == 0:
        raise ValueError(f"no observations in split {train_split!r}")

    root = RngStream(hyper.seed)
    if init is None:
        params = init_params(
            dataset.units.feature_dim,
            dataset.manifest.arms_per_experiment,
            dataset.manifest.n_metrics,
            hyper,
            stream=root.child(0),
        )
    else:
        params = init.copy()

    unit_rows = dataset.units.rows_for(obs.unit_ids)
    features = dataset.units.features
    emb_rows = params.arm_rows(obs.experiment_ids, obs.arms)
    j_arr = obs.metric_ids.astype(np.int64)
    y = obs.values
    n_obs = len(y)

    blocks = params.blocks()
    m_state = [np.zeros_like(b) for b in blocks]
    v_state = [np.zeros_like(b) for b in blocks]
    lr, wd = hyper.learning_rate, hyper.weight_decay
    shuffle = root.child(1)
    report = TrainReport()
    step = 0

    for epoch in range(hyper.epochs):
        perm = shuffle.permutation(n_obs)
        epoch_loss = 0.0
        for a in range(0, n_obs, hyper.batch_size):
            idx = perm[a : a + hyper.batch_size]
            loss, grads = _batch_loss_grads(
                params, features, unit_rows[idx], j_arr[idx], emb_rows[idx], y[idx], wd
            )
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, step {step}; "
                    "reduce the learning rate"
                )
            step += 1
            bc1 = 1.0 - ADAM_BETA1**step
            bc2 = 1.0 - ADAM_BETA2**step
            for p, g, ms, vs in zip(blocks, grads.blocks(), m_state, v_state):
                ms *= ADAM_BETA1
                ms += (1.0 - ADAM_BETA1) * g
                vs *= ADAM_BETA2
                vs += (1.0 - ADAM_BETA2) * (g * g)
                p -= lr * (ms / bc1) / (np.sqrt(vs / bc2) + ADAM_EPS)
            epoch_loss += loss * len(idx)  # observation-weighted epoch mean
        report.epoch_losses.append(epoch_loss / n_obs)

    val_obs = dataset.observations_for_split(val_split)
    if len(val_obs) > 0:
        v_rows = dataset.units.rows_for(val_obs.unit_ids)
        yhat = predict_rows(
            params,
            features[v_rows],
            val_obs.metric_ids,
            val_obs.experiment_ids,
            val_obs.arms,
        )
        err = (yhat - val_obs.values) ** 2
        for j in np.unique(val_obs.metric_ids):
            report.val_mu_risk[int(j)] = float(err[val_obs.metric_ids == j].mean())
    return params, report


def _batch_loss_grads(params, features, unit_rows, j_arr, emb_rows, y, wd):
    """Training inner loop: like loss_and_grads but with precomputed row
    indices, the batch sorted by metric so per-metric work is on contiguous
    slices, and unit features gathered per batch."""
    order = np.argsort(j_arr, kind="stable")
    j_sorted = j_arr[order]
    emb_sorted = emb_rows[order]
    y_sorted = y[order]
    x = features[unit_rows[order]]
    n = len(y)

    a1 = x @ params.w1.T
    a1 += params.b1
    h1 = np.maximum(a1, 0.0) if params.use_relu else a1
    v = h1 @ params.w2.T
    v += params.b2
    e_sel = params.arm_emb[emb_sorted]

    uniq = np.unique(j_sorted)
    bounds = np.searchsorted(j_sorted, uniq)
    bounds = np.append(bounds, n)
    z = np.empty_like(v)
    w = np.empty_like(v)
    for i, j in enumerate(uniq):
        a, b = bounds[i], bounds[i + 1]
        np.matmul(e_sel[a:b], params.ops[j].T, out=z[a:b])
        np.matmul(v[a:b], params.ops[j], out=w[a:b])
    resid = np.einsum("id,id->i", v, z)
    resid -= y_sorted

    loss = float(np.mean(resid * resid))
    if wd > 0.0:
        loss += wd * (
            float(np.sum(params.w1 * params.w1))
            + float(np.sum(params.w2 * params.w2))
            + float(np.sum(params.arm_emb * params.arm_emb))
            + float(np.sum(params.ops * params.ops))
        )

    g = (2.0 / n) * resid
    dv = g[:, None] * z
    d_emb = np.zeros_like(params.arm_emb)
    w *= g[:, None]
    _scatter_rows(d_emb, emb_sorted, w)
    d_ops = np.zeros_like(params.ops)
    vg = v * g[:, None]
    for i, j in enumerate(uniq):
        a, b = bounds[i], bounds[i + 1]
        np.matmul(vg[a:b].T, e_sel[a:b], out=d_ops[j])
    if wd > 0.0:
        d_emb += 2.0 * wd * params.arm_emb
        d_ops += 2.0 * wd * params.ops

    d_w2 = dv.T @ h1
    d_b2 = dv.sum(axis=0)
    dh = dv @ params.w2
    if params.use_relu:
        dh *= a1 > 0.0
    d_w1 = dh.T @ x
    d_b1 = dh.sum(axis=0)
    if wd > 0.0:
        d_w1 += 2.0 * wd * params.w1
        d_w2 += 2.0 * wd * params.w2
    return loss, LRGrads(w1=d_w1, b1=d_b1, w2=d_w2, b2=d_b2, arm_emb=d_emb, ops=d_ops)


def finetune_new_experiment(
    params: LRParams,
    features,
    arms_observed,
    outcomes,
    arm_ids=None,
    reg: float = 1e-8,
) -> dict:
    """Closed-form per-arm embeddings for a new experiment, extractor frozen.

    Solves min_e sum (y - v(x)' e)^2 + reg ||e||^2 per arm on the frozen
    embeddings v(x); the feature network and metric operators are untouched.
    Returns {arm: embedding}. The effect of arm t for features x is then
    v(x) @ (e[t] - e[0]), linear in the extracted features.
    """
    x = np.asarray(features, dtype=np.float64)
    t_arr = np.asarray(arms_observed, dtype=np.int64)
    y = np.asarray(outcomes, dtype=np.float64)
    if not (len(x) == len(t_arr) == len(y)):
        raise ValueError("features, arms and outcomes must have equal lengths")
    if arm_ids is None:
        arm_ids = sorted(int(t) for t in np.unique(t_arr))
    v = embed_units(params, x)
    d = v.shape[1]
    out = {}
    for arm in arm_ids:
        sel = t_arr == arm
        n_arm = int(sel.sum())
        if n_arm == 0:
            raise ValueError(f"no observations for arm {arm}")
        if n_arm < d:
            warnings.warn(
                f"arm {arm} has {n_arm} observations for {d}-dimensional embeddings; "
                "the fit is underdetermined"
            )
        va = v[sel]
        gram = va.T @ va + reg * np.eye(d)
        out[int(arm)] = np.linalg.solve(gram, va.T @ y[sel])
    return out


def finetuned_cate(params: LRParams, embeddings: dict, features, arm: int = 1) -> np.ndarray:
    """Effects implied by fine-tuned arm embeddings: v(x) @ (e_arm - e_0)."""
    v = embed_units(params, np.asarray(features, dtype=np.float64))
    return v @ (embeddings[arm] - embeddings[0])


def save_params(path: str, params: LRParams, hyper: HyperConfig | None = None) -> None:
    """Versioned JSON container; floats round-trip bit-exactly."""
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "dims": {
            "feature_dim": params.feature_dim,
            "hidden_dim": params.w1.shape[0],
            "latent_dim": params.latent_dim,
            "n_metrics": params.n_metrics,
        },
        "use_relu": bool(params.use_relu),
        "arms": [[int(k), int(t)] for k, t in params.arm_keys],
        "hyper": asdict(hyper) if hyper is not None else None,
        "params": {
            "w1": params.w1.tolist(),
            "b1": params.b1.tolist(),
            "w2": params.w2.tolist(),
            "b2": params.b2.tolist(),
            "arm_embeddings": params.arm_emb.tolist(),
            "operators": params.ops.tolist(),
        },
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, sort_keys=True)
        f.write("\n")


def load_params(path: str):
    """Inverse of save_params; returns (LRParams, HyperConfig | None)."""
    if not os.path.exists(path):
        raise ModelFormatError(f"missing model file: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ModelFormatError(f"corrupt model file {path}: {e}") from None
    if not isinstance(payload, dict) or payload.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"model format_version {payload.get('format_version')!r} "
            f"is not {MODEL_FORMAT_VERSION!r}"
        )
    try:
        p = payload["params"]
        params = LRParams(
            w1=np.array(p["w1"], dtype=np.float64),
            b1=np.array(p["b1"], dtype=np.float64),
            w2=np.array(p["w2"], dtype=np.float64),
            b2=np.array(p["b2"], dtype=np.float64),
            arm_emb=np.array(p["arm_embeddings"], dtype=np.float64),
            arm_keys=[(int(k), int(t)) for k, t in payload["arms"]],
            ops=np.array(p["operators"], dtype=np.float64),
            use_relu=bool(payload["use_relu"]),
        )
        hyper = HyperConfig(**payload["hyper"]) if payload.get("hyper") else None
    except (KeyError, TypeError) as e:
        raise ModelFormatError(f"corrupt model file {path}: missing field {e}") from None
    dims = payload.get("dims", {})
    if dims.get("latent_dim") != params.latent_dim or dims.get("feature_dim") != params.feature_dim:
        raise ModelFormatError(f"model file {path}: declared dims do not match parameter shapes")
    return params, hyper
