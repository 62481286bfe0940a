"""Synthetic and semi-synthetic data generators.

The fully synthetic generator draws, per metric, a dense d x d operator; per
experiment, unit-norm treatment/control embeddings and a fresh latent unit
matrix; potential outcomes are the bilinear products, observed through
additive Gaussian noise. Stored ITEs are differences of the noisy
realizations, so a perfect predictor of the conditional means sees a noise
floor of sigma^2 on held-out outcomes and 2 sigma^2 on ITEs.

The semi-synthetic transform turns an externally produced (features, logits)
pair from a multi-class classifier into a multi-experiment dataset: one
experiment per non-control class, the class logit as the potential outcome,
and the logit difference to the control class as the exact ITE.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, asdict

import numpy as np

from .dataset import (
    Dataset,
    Manifest,
    Observations,
    PotentialOutcomeTensor,
    Splits,
    UnitTable,
    split_units,
)
from .numerics import RngStream


@dataclass
class SynthConfig:
    """Generator settings; n counts training units per arm per experiment.

    operator_rank = None draws dense standard-normal metric operators; an
    integer r draws rank-r operators (scaled to keep unit outcome variance),
    which caps every metric's effect-matrix rank at r and is what makes
    cross-experiment pooling dramatically more sample efficient than
    independent per-experiment fits.
    """

    n: int = 1000
    latent_dim: int = 32
    feature_dim: int = 128
    experiments: int = 50
    metrics: int = 5
    noise_sd: float = 0.1
    seed: int = 0
    n_val: int = 0   # additional held-out units per arm, per experiment
    n_test: int = 0
    operator_rank: int | None = None

    def validate(self):
        if min(self.n, self.latent_dim, self.feature_dim, self.experiments, self.metrics) < 1:
            raise ValueError("all synthetic generator counts must be >= 1")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")
        if min(self.n_val, self.n_test) < 0:
            raise ValueError("held-out pool sizes must be nonnegative")
        if self.operator_rank is not None and not 1 <= self.operator_rank <= self.latent_dim:
            raise ValueError(
                f"operator_rank must be in [1, {self.latent_dim}], got {self.operator_rank}"
            )
        if self.latent_dim > self.feature_dim:
            warnings.warn(
                f"latent_dim {self.latent_dim} exceeds feature_dim {self.feature_dim}; "
                "features will not identify the latents"
            )


def gen_synthetic(cfg: SynthConfig, with_latents: bool = False):
    """Generate a dataset (with ground-truth tensor) from the linear DGP.

    Per experiment, 2 * (n + n_val + n_test) units are generated in
    train / val / test blocks; arms are Bernoulli(0.5) per unit. The latent
    matrix is rescaled to Frobenius norm sqrt(#units) so per-unit signal
    scale does not shrink with n. Deterministic in cfg: per-experiment
    substreams make parallel generation equal to sequential.

    with_latents=True additionally returns the generator's internal state
    (operators, loading, per-experiment arm embeddings and latent rows) for
    structural tests and debugging.
    """
    cfg.validate()
    root = RngStream(cfg.seed)
    d, m, K, J = cfg.latent_dim, cfg.feature_dim, cfg.experiments, cfg.metrics
    n_per_exp = 2 * (cfg.n + cfg.n_val + cfg.n_test)

    ops_stream = root.child(0)
    if cfg.operator_rank is None:
        operators = np.stack([ops_stream.std_normal(d * d).reshape(d, d) for _ in range(J)])
    else:
        r = cfg.operator_rank
        operators = np.empty((J, d, d))
        for j in range(J):
            g = ops_stream.std_normal(d * r).reshape(d, r)
            h = ops_stream.std_normal(d * r).reshape(d, r)
            operators[j] = (g @ h.T) / np.sqrt(r)  # entry variance 1, rank r
    # one loading matrix for every experiment: features of all units live in a
    # common d-dimensional subspace, so the latent map is identifiable from a
    # single shared feature network
    load = root.child(2).std_normal(d * m).reshape(d, m)

    unit_ids_all = []
    features_all = []
    obs_cols = ([], [], [], [], [])  # unit, experiment, arm, metric, value
    t_cols = ([], [], [], [], [], [], [])  # unit, exp, metric, arm, y0, y1, ite
    split_ids = {"train": [], "val": [], "test": []}
    latents = {"operators": operators, "loading": load, "embeddings": {}, "v": {}}

    for k in range(K):
        s = root.child(1, k)
        e1 = s.std_normal(d)
        e1 /= np.linalg.norm(e1)
        e0 = s.std_normal(d)
        e0 /= np.linalg.norm(e0)
        v = s.std_normal(n_per_exp * d).reshape(n_per_exp, d)
        v *= np.sqrt(n_per_exp) / np.linalg.norm(v)

        ids = np.arange(k * n_per_exp, (k + 1) * n_per_exp, dtype=np.int64)
        y0_real = np.empty((J, n_per_exp))
        y1_real = np.empty((J, n_per_exp))
        for j in range(J):
            mu1 = v @ (operators[j] @ e1)
            mu0 = v @ (operators[j] @ e0)
            y1_real[j] = mu1 + cfg.noise_sd * s.std_normal(n_per_exp)
            y0_real[j] = mu0 + cfg.noise_sd * s.std_normal(n_per_exp)

        x = v @ load
        arms = s.bernoulli(0.5, n_per_exp)
        latents["embeddings"][k] = {0: e0, 1: e1}
        latents["v"][k] = v

        unit_ids_all.append(ids)
        features_all.append(x)
        for j in range(J):
            observed = np.where(arms == 1, y1_real[j], y0_real[j])
            obs_cols[0].append(ids)
            obs_cols[1].append(np.full(n_per_exp, k, dtype=np.int64))
            obs_cols[2].append(arms)
            obs_cols[3].append(np.full(n_per_exp, j, dtype=np.int64))
            obs_cols[4].append(observed)
            t_cols[0].append(ids)
            t_cols[1].append(np.full(n_per_exp, k, dtype=np.int64))
            t_cols[2].append(np.full(n_per_exp, j, dtype=np.int64))
            t_cols[3].append(np.ones(n_per_exp, dtype=np.int64))
            t_cols[4].append(y0_real[j])
            t_cols[5].append(y1_real[j])
            t_cols[6].append(y1_real[j] - y0_real[j])

        split_ids["train"].append(ids[: 2 * cfg.n])
        split_ids["val"].append(ids[2 * cfg.n : 2 * (cfg.n + cfg.n_val)])
        split_ids["test"].append(ids[2 * (cfg.n + cfg.n_val) :])

    units = UnitTable(
        unit_ids=np.concatenate(unit_ids_all),
        features=np.concatenate(features_all, axis=0),
    )
    observations = Observations(*(np.concatenate(c) for c in obs_cols))
    tensor = PotentialOutcomeTensor(*(np.concatenate(c) for c in t_cols))
    splits = Splits(
        train=np.concatenate(split_ids["train"]),
        val=np.concatenate(split_ids["val"]),
        test=np.concatenate(split_ids["test"]),
    )
    manifest = Manifest(
        n_units=units.n_units,
        feature_dim=m,
        n_experiments=K,
        n_metrics=J,
        arms_per_experiment={k: [0, 1] for k in range(K)},
        generator_config={"kind": "synthetic", **asdict(cfg)},
    )
    ds = Dataset(
        units=units,
        observations=observations,
        splits=splits,
        manifest=manifest,
        true_outcomes=tensor,
    )
    ds.validate()
    if with_latents:
        return ds, latents
    return ds


def semisynth_from_logits(
    features,
    logits,
    control_class: int,
    assign_prob: float,
    stream: RngStream,
    split_fractions=(0.8, 0.1, 0.1),
    config_echo: dict | None = None,
) -> Dataset:
    """Build a multi-experiment dataset from classifier features and logits.

    One experiment per non-control class (K = n_classes - 1), a single
    outcome metric. Each unit enrolls in each experiment independently with
    probability assign_prob; within an enrollment, the arm is Bernoulli(0.5)
    and the observed outcome is the (noiseless) logit of the assigned class.
    The ground-truth tensor covers every (unit, experiment) pair with
    ITE = class logit - control logit, exactly.
    """
    x = np.asarray(features, dtype=np.float64)
    z = np.asarray(logits, dtype=np.float64)
    if x.ndim != 2 or z.ndim != 2:
        raise ValueError("features and logits must be 2-D arrays")
    if x.shape[0] != z.shape[0]:
        raise ValueError(
            f"row-count mismatch: {x.shape[0]} feature rows vs {z.shape[0]} logit rows"
        )
    n, n_classes = z.shape
    if n_classes < 2:
        raise ValueError("need at least 2 classes")
    if not 0 <= control_class < n_classes:
        raise ValueError(f"control_class {control_class} out of range [0, {n_classes})")
    if not 0 < assign_prob <= 1:
        raise ValueError("assign_prob must be in (0, 1]")

    treatment_classes = [c for c in range(n_classes) if c != control_class]
    K = len(treatment_classes)
    ids = np.arange(n, dtype=np.int64)
    y_control = z[:, control_class]

    obs_cols = ([], [], [], [], [])
    t_cols = ([], [], [], [], [], [], [])
    for k, cls in enumerate(treatment_classes):
        enrolled = stream.bernoulli(assign_prob, n) == 1
        arms = stream.bernoulli(0.5, n)
        sel = ids[enrolled]
        arm_sel = arms[enrolled]
        y_treated = z[:, cls]
        observed = np.where(arm_sel == 1, y_treated[enrolled], y_control[enrolled])
        obs_cols[0].append(sel)
        obs_cols[1].append(np.full(len(sel), k, dtype=np.int64))
        obs_cols[2].append(arm_sel)
        obs_cols[3].append(np.zeros(len(sel), dtype=np.int64))
        obs_cols[4].append(observed)
        t_cols[0].append(ids)
        t_cols[1].append(np.full(n, k, dtype=np.int64))
        t_cols[2].append(np.zeros(n, dtype=np.int64))
        t_cols[3].append(np.ones(n, dtype=np.int64))
        t_cols[4].append(y_control)
        t_cols[5].append(y_treated)
        t_cols[6].append(y_treated - y_control)

    units = UnitTable(unit_ids=ids, features=x)
    observations = Observations(*(np.concatenate(c) for c in obs_cols))
    tensor = PotentialOutcomeTensor(*(np.concatenate(c) for c in t_cols))
    splits = split_units(ids, split_fractions, stream.child(2))
    manifest = Manifest(
        n_units=n,
        feature_dim=x.shape[1],
        n_experiments=K,
        n_metrics=1,
        arms_per_experiment={k: [0, 1] for k in range(K)},
        generator_config={
            "kind": "semisynthetic",
            "control_class": control_class,
            "assign_prob": assign_prob,
            "treatment_class_per_experiment": treatment_classes,
            "split_fractions": list(split_fractions),
            **(config_echo or {}),
        },
    )
    ds = Dataset(
        units=units,
        observations=observations,
        splits=splits,
        manifest=manifest,
        true_outcomes=tensor,
    )
    ds.validate()
    return ds


def load_matrix_csv(path: str) -> np.ndarray:
    """Read a headered CSV of reals into an (n, p) array."""
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().rstrip("\n").split(",")
        width = len(header)
        rows = []
        for lineno, line in enumerate(f, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != width:
                raise ValueError(f"{path} row {lineno}: expected {width} fields")
            rows.append([float(p) for p in parts])
    return np.array(rows, dtype=np.float64)
