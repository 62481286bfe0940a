"""Data model and on-disk format for multi-experiment, multi-metric data.

A dataset directory holds UTF-8 CSV files plus a JSON manifest:

    units.csv          unit_id,f0..f{m-1}
    observations.csv   unit_id,experiment_id,arm,metric_id,value
    splits.csv         unit_id,split          (split in {train,val,test})
    true_outcomes.csv  unit_id,experiment_id,metric_id,arm,y_control,y_treated,ite
                       (optional; one row per treated arm)
    manifest.json      counts, arms per experiment, file names, config echo

Reals are serialized with 17 significant digits so save -> load round-trips
doubles exactly. Loaded datasets are immutable by convention and safe for
shared concurrent reads.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .numerics import RngStream

FORMAT_VERSION = "hte-v1"


class DatasetError(ValueError):
    """Schema violation, dangling reference, or manifest inconsistency."""


def format_real(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class UnitTable:
    """Units keyed by integer id, each with an m-dimensional feature vector."""

    unit_ids: np.ndarray  # (n,) int64, unique
    features: np.ndarray  # (n, m) float64

    def __post_init__(self):
        self._row_of = None

    @property
    def n_units(self) -> int:
        return len(self.unit_ids)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def rows_for(self, unit_ids) -> np.ndarray:
        """Row indices of the given unit ids; raises on unknown ids."""
        if self._row_of is None:
            order = np.argsort(self.unit_ids, kind="stable")
            self._row_of = (self.unit_ids[order], order)
        sorted_ids, order = self._row_of
        wanted = np.atleast_1d(np.asarray(unit_ids, dtype=np.int64))
        pos = np.searchsorted(sorted_ids, wanted)
        bad = (pos >= len(sorted_ids)) | (sorted_ids[np.minimum(pos, len(sorted_ids) - 1)] != wanted)
        if np.any(bad):
            raise DatasetError(f"unknown unit_id {int(wanted[np.argmax(bad)])}")
        return order[pos]

    def validate(self):
        if self.features.ndim != 2:
            raise DatasetError("unit features must be a 2-D array")
        if len(self.unit_ids) != self.features.shape[0]:
            raise DatasetError("unit_ids and features row counts differ")
        if len(np.unique(self.unit_ids)) != len(self.unit_ids):
            raise DatasetError("unit_ids are not unique")
        if not np.all(np.isfinite(self.features)):
            raise DatasetError("unit features contain non-finite values")


@dataclass
class Observations:
    """Flat (unit, experiment, arm, metric, value) records as parallel arrays."""

    unit_ids: np.ndarray
    experiment_ids: np.ndarray
    arms: np.ndarray
    metric_ids: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.values)

    def subset(self, mask) -> "Observations":
        return Observations(
            self.unit_ids[mask],
            self.experiment_ids[mask],
            self.arms[mask],
            self.metric_ids[mask],
            self.values[mask],
        )


@dataclass
class PotentialOutcomeTensor:
    """Ground-truth (or predicted) outcomes per (unit, experiment, metric, arm).

    One record per treated arm; `ite` always equals y_treated - y_control
    exactly for stored values.
    """

    unit_ids: np.ndarray
    experiment_ids: np.ndarray
    metric_ids: np.ndarray
    arms: np.ndarray  # treated arm (>= 1)
    y_control: np.ndarray
    y_treated: np.ndarray
    ite: np.ndarray

    def __len__(self) -> int:
        return len(self.ite)

    def key_index(self) -> dict:
        return {
            (int(u), int(k), int(j), int(t)): i
            for i, (u, k, j, t) in enumerate(
                zip(self.unit_ids, self.experiment_ids, self.metric_ids, self.arms)
            )
        }

    def validate(self):
        diff = self.y_treated - self.y_control
        if not np.array_equal(diff, self.ite):
            bad = int(np.argmax(diff != self.ite))
            raise DatasetError(
                f"tensor row {bad}: ite does not equal y_treated - y_control"
            )


@dataclass
class Splits:
    """Pairwise-disjoint unit id sets for train / validation / test."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def validate(self):
        for a, b in (("train", "val"), ("train", "test"), ("val", "test")):
            if len(np.intersect1d(self.get(a), self.get(b))) > 0:
                raise DatasetError(f"splits {a} and {b} are not disjoint")

    def get(self, name: str) -> np.ndarray:
        if name not in ("train", "val", "test"):
            raise DatasetError(f"unknown split {name!r}")
        return getattr(self, name)


@dataclass
class Manifest:
    n_units: int
    feature_dim: int
    n_experiments: int
    n_metrics: int
    arms_per_experiment: dict  # experiment_id -> sorted list of arms (incl. 0)
    files: dict = field(default_factory=dict)
    generator_config: dict = field(default_factory=dict)
    format_version: str = FORMAT_VERSION


@dataclass
class Dataset:
    units: UnitTable
    observations: Observations
    splits: Splits
    manifest: Manifest
    true_outcomes: PotentialOutcomeTensor | None = None

    def validate(self):
        self.units.validate()
        self.splits.validate()
        known = np.unique(self.units.unit_ids)
        for name in ("train", "val", "test"):
            ids = self.splits.get(name)
            bad = ~np.isin(ids, known)
            if np.any(bad):
                raise DatasetError(
                    f"{name} split references unknown unit {int(ids[np.argmax(bad)])}"
                )
        dangling = ~np.isin(self.observations.unit_ids, known)
        if np.any(dangling):
            row = int(np.argmax(dangling))
            raise DatasetError(
                f"observations row {row} references unknown unit "
                f"{int(self.observations.unit_ids[row])}"
            )
        # each experiment present must include the control arm
        all_exps = np.unique(self.observations.experiment_ids)
        ctrl_exps = np.unique(self.observations.experiment_ids[self.observations.arms == 0])
        missing_ctrl = np.setdiff1d(all_exps, ctrl_exps)
        if len(missing_ctrl) > 0:
            raise DatasetError(
                f"experiment {int(missing_ctrl[0])} has no control (arm 0) observations"
            )
        if self.true_outcomes is not None:
            self.true_outcomes.validate()
            bad = ~np.isin(self.true_outcomes.unit_ids, known)
            if np.any(bad):
                raise DatasetError(
                    f"true_outcomes references unknown unit "
                    f"{int(self.true_outcomes.unit_ids[np.argmax(bad)])}"
                )
        if self.manifest.n_units != self.units.n_units:
            raise DatasetError(
                f"manifest declares {self.manifest.n_units} units, found {self.units.n_units}"
            )
        if self.manifest.feature_dim != self.units.feature_dim:
            raise DatasetError(
                f"manifest declares feature_dim {self.manifest.feature_dim}, "
                f"found {self.units.feature_dim}"
            )

    def observations_for_split(self, name: str) -> Observations:
        mask = np.isin(self.observations.unit_ids, self.splits.get(name))
        return self.observations.subset(mask)


def split_units(unit_ids, fractions, stream: RngStream) -> Splits:
    """Randomly partition unit ids into train/val/test by fractions.

    fractions is a (train, val, test) triple, nonnegative and summing to at
    most 1; each resulting size is within 1 of fraction * n. Deterministic
    given the stream.
    """
    ftr, fva, fte = fractions
    if min(ftr, fva, fte) < 0 or ftr + fva + fte > 1 + 1e-12:
        raise DatasetError(f"invalid split fractions {fractions}")
    ids = np.asarray(unit_ids)
    n = len(ids)
    perm = ids[stream.permutation(n)]
    n_tr = int(round(ftr * n))
    n_va = min(int(round(fva * n)), n - n_tr)
    n_te = min(int(round(fte * n)), n - n_tr - n_va)
    return Splits(
        train=np.sort(perm[:n_tr]),
        val=np.sort(perm[n_tr : n_tr + n_va]),
        test=np.sort(perm[n_tr + n_va : n_tr + n_va + n_te]),
    )


def ite_slice(tensor: PotentialOutcomeTensor, metric: int, arm: int = 1):
    """Units x experiments matrix of ITEs for one (metric, treated arm).

    Returns (matrix, unit_ids, experiment_ids) with entry (i, k) the ITE of
    unit unit_ids[i] in experiment experiment_ids[k]. Requires the slice to
    be fully populated; missing pairs are reported.
    """
    sel = (tensor.metric_ids == metric) & (tensor.arms == arm)
    if not np.any(sel):
        raise DatasetError(f"no tensor entries for metric {metric}, arm {arm}")
    units = np.unique(tensor.unit_ids[sel])
    exps = np.unique(tensor.experiment_ids[sel])
    mat = np.full((len(units), len(exps)), np.nan)
    u_idx = np.searchsorted(units, tensor.unit_ids[sel])
    k_idx = np.searchsorted(exps, tensor.experiment_ids[sel])
    mat[u_idx, k_idx] = tensor.ite[sel]
    missing = np.isnan(mat)
    if missing.any():
        i, k = np.argwhere(missing)[0]
        raise DatasetError(
            f"ite slice (metric {metric}, arm {arm}) is missing {int(missing.sum())} "
            f"entries, e.g. unit {int(units[i])} in experiment {int(exps[k])}"
        )
    return mat, units, exps


# ---------------------------------------------------------------------------
# on-disk format
# ---------------------------------------------------------------------------

_DEFAULT_FILES = {
    "units": "units.csv",
    "observations": "observations.csv",
    "splits": "splits.csv",
    "true_outcomes": "true_outcomes.csv",
}


def _write_csv(path: str, header: list, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(row) + "\n")


def save_dataset(directory: str, ds: Dataset) -> None:
    ds.validate()
    os.makedirs(directory, exist_ok=True)
    files = dict(_DEFAULT_FILES)
    if ds.true_outcomes is None:
        files["true_outcomes"] = None

    m = ds.units.feature_dim
    _write_csv(
        os.path.join(directory, files["units"]),
        ["unit_id"] + [f"f{i}" for i in range(m)],
        (
            [str(int(u))] + [format_real(x) for x in feats]
            for u, feats in zip(ds.units.unit_ids, ds.units.features)
        ),
    )
    obs = ds.observations
    _write_csv(
        os.path.join(directory, files["observations"]),
        ["unit_id", "experiment_id", "arm", "metric_id", "value"],
        (
            [str(int(u)), str(int(k)), str(int(t)), str(int(j)), format_real(y)]
            for u, k, t, j, y in zip(
                obs.unit_ids, obs.experiment_ids, obs.arms, obs.metric_ids, obs.values
            )
        ),
    )
    _write_csv(
        os.path.join(directory, files["splits"]),
        ["unit_id", "split"],
        (
            [str(int(u)), name]
            for name in ("train", "val", "test")
            for u in ds.splits.get(name)
        ),
    )
    if ds.true_outcomes is not None:
        save_tensor_csv(os.path.join(directory, files["true_outcomes"]), ds.true_outcomes)

    manifest = {
        "format_version": ds.manifest.format_version,
        "n_units": ds.manifest.n_units,
        "feature_dim": ds.manifest.feature_dim,
        "n_experiments": ds.manifest.n_experiments,
        "n_metrics": ds.manifest.n_metrics,
        "arms_per_experiment": {
            str(k): list(map(int, v)) for k, v in sorted(ds.manifest.arms_per_experiment.items())
        },
        "files": files,
        "generator_config": ds.manifest.generator_config,
    }
    with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def save_tensor_csv(path: str, tensor: PotentialOutcomeTensor) -> None:
    _write_csv(
        path,
        ["unit_id", "experiment_id", "metric_id", "arm", "y_control", "y_treated", "ite"],
        (
            [
                str(int(u)),
                str(int(k)),
                str(int(j)),
                str(int(t)),
                format_real(y0),
                format_real(y1),
                format_real(d),
            ]
            for u, k, j, t, y0, y1, d in zip(
                tensor.unit_ids,
                tensor.experiment_ids,
                tensor.metric_ids,
                tensor.arms,
                tensor.y_control,
                tensor.y_treated,
                tensor.ite,
            )
        ),
    )


def _read_rows(path: str, expected_header: list):
    if not os.path.exists(path):
        raise DatasetError(f"missing file: {path}")
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().rstrip("\n").split(",")
        if header != expected_header:
            raise DatasetError(f"{os.path.basename(path)}: unexpected header {header}")
        for lineno, line in enumerate(f, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            yield lineno, line.split(",")


def load_tensor_csv(path: str) -> PotentialOutcomeTensor:
    cols = ([], [], [], [], [], [], [])
    header = ["unit_id", "experiment_id", "metric_id", "arm", "y_control", "y_treated", "ite"]
    for lineno, parts in _read_rows(path, header):
        if len(parts) != 7:
            raise DatasetError(f"{os.path.basename(path)} row {lineno}: expected 7 fields")
        try:
            for c, p, conv in zip(cols, parts, (int, int, int, int, float, float, float)):
                c.append(conv(p))
        except ValueError:
            raise DatasetError(
                f"{os.path.basename(path)} row {lineno}: unparseable value"
            ) from None
    return PotentialOutcomeTensor(
        unit_ids=np.array(cols[0], dtype=np.int64),
        experiment_ids=np.array(cols[1], dtype=np.int64),
        metric_ids=np.array(cols[2], dtype=np.int64),
        arms=np.array(cols[3], dtype=np.int64),
        y_control=np.array(cols[4]),
        y_treated=np.array(cols[5]),
        ite=np.array(cols[6]),
    )


def load_dataset(directory: str) -> Dataset:
    """Load and fully validate a dataset directory; errors carry row numbers."""
    man_path = os.path.join(directory, "manifest.json")
    if not os.path.exists(man_path):
        raise DatasetError(f"missing file: {man_path}")
    with open(man_path, "r", encoding="utf-8") as f:
        raw = json.load(f)
    if raw.get("format_version") != FORMAT_VERSION:
        raise DatasetError(
            f"manifest format_version {raw.get('format_version')!r} is not {FORMAT_VERSION!r}"
        )
    manifest = Manifest(
        n_units=int(raw["n_units"]),
        feature_dim=int(raw["feature_dim"]),
        n_experiments=int(raw["n_experiments"]),
        n_metrics=int(raw["n_metrics"]),
        arms_per_experiment={int(k): list(map(int, v)) for k, v in raw["arms_per_experiment"].items()},
        files=raw["files"],
        generator_config=raw.get("generator_config", {}),
    )
    files = raw["files"]

    m = manifest.feature_dim
    unit_header = ["unit_id"] + [f"f{i}" for i in range(m)]
    ids, feats = [], []
    for lineno, parts in _read_rows(os.path.join(directory, files["units"]), unit_header):
        if len(parts) != m + 1:
            raise DatasetError(f"units.csv row {lineno}: expected {m + 1} fields")
        try:
            ids.append(int(parts[0]))
            feats.append([float(p) for p in parts[1:]])
        except ValueError:
            raise DatasetError(f"units.csv row {lineno}: unparseable value") from None
    units = UnitTable(
        unit_ids=np.array(ids, dtype=np.int64),
        features=np.array(feats, dtype=np.float64).reshape(len(ids), m),
    )

    obs_header = ["unit_id", "experiment_id", "arm", "metric_id", "value"]
    cols = ([], [], [], [], [])
    for lineno, parts in _read_rows(os.path.join(directory, files["observations"]), obs_header):
        if len(parts) != 5:
            raise DatasetError(f"observations.csv row {lineno}: expected 5 fields")
        try:
            for c, p, conv in zip(cols, parts, (int, int, int, int, float)):
                c.append(conv(p))
        except ValueError:
            raise DatasetError(f"observations.csv row {lineno}: unparseable value") from None
    observations = Observations(
        unit_ids=np.array(cols[0], dtype=np.int64),
        experiment_ids=np.array(cols[1], dtype=np.int64),
        arms=np.array(cols[2], dtype=np.int64),
        metric_ids=np.array(cols[3], dtype=np.int64),
        values=np.array(cols[4]),
    )

    parts_by_split = {"train": [], "val": [], "test": []}
    for lineno, parts in _read_rows(os.path.join(directory, files["splits"]), ["unit_id", "split"]):
        if len(parts) != 2 or parts[1] not in parts_by_split:
            raise DatasetError(f"splits.csv row {lineno}: malformed row")
        parts_by_split[parts[1]].append(int(parts[0]))
    splits = Splits(
        train=np.array(sorted(parts_by_split["train"]), dtype=np.int64),
        val=np.array(sorted(parts_by_split["val"]), dtype=np.int64),
        test=np.array(sorted(parts_by_split["test"]), dtype=np.int64),
    )

    tensor = None
    if files.get("true_outcomes"):
        tensor = load_tensor_csv(os.path.join(directory, files["true_outcomes"]))

    ds = Dataset(
        units=units,
        observations=observations,
        splits=splits,
        manifest=manifest,
        true_outcomes=tensor,
    )
    ds.validate()
    return ds
