"""Low-rank diagnostics for effect matrices: singular spectra and effective
rank by speckled-holdout cross-validation.

The cross-validation scheme scatters the matrix entries into folds; for each
fold and candidate rank the matrix is completed from the retained entries by
alternating least squares and scored by squared error on the held-out
entries. The selected rank minimizes the mean held-out error, with ties
going to the smallest rank.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import format_real
from .numerics import RngStream, als_complete, as_matrix, singular_values


@dataclass
class RankReport:
    metric: int | None
    singular_values: np.ndarray
    bcv_errors: np.ndarray  # (max_rank, folds) held-out MSE
    selected_rank: int

    @property
    def mean_errors(self) -> np.ndarray:
        return self.bcv_errors.mean(axis=1)

    def write_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write("metric_id,rank,fold,heldout_mse\n")
            j = "" if self.metric is None else str(self.metric)
            for r in range(self.bcv_errors.shape[0]):
                for fold in range(self.bcv_errors.shape[1]):
                    f.write(f"{j},{r + 1},{fold},{format_real(self.bcv_errors[r, fold])}\n")


def spectrum_report(m, k: int | None = None) -> np.ndarray:
    """Top-k singular values of an effect matrix, descending."""
    return singular_values(m, k)


def _speckled_folds(shape, n_folds: int, stream: RngStream, max_retries: int = 20) -> np.ndarray:
    """Assign each entry to one of n_folds so every fold's complement still
    covers every row and column; re-randomizes a bounded number of times."""
    n_entries = shape[0] * shape[1]
    for _ in range(max_retries):
        assignment = (stream.uniform01(n_entries) * n_folds).astype(np.int64).reshape(shape)
        ok = True
        for fold in range(n_folds):
            retained = assignment != fold
            if not (retained.any(axis=1).all() and retained.any(axis=0).all()):
                ok = False
                break
        if ok:
            return assignment
    raise ValueError(
        f"could not find a {n_folds}-fold speckled partition covering all rows "
        f"and columns of a {shape[0]}x{shape[1]} matrix after {max_retries} tries"
    )


def bcv_effective_rank(
    m,
    folds: int = 5,
    max_rank: int | None = None,
    stream: RngStream | None = None,
    als_iters: int = 40,
    als_reg: float = 1e-6,
    fold_assignment=None,
    metric: int | None = None,
) -> RankReport:
    """Effective rank of a fully observed matrix by speckled-holdout CV.

    For each fold and each candidate rank r in [1, max_rank], the matrix is
    completed from the retained entries (alternating ridge, deterministic
    per-(fold, rank) substreams) and scored on the held-out entries. A
    pre-built fold_assignment array may be supplied, e.g. to check
    permutation invariance with entry-equivalent folds.
    """
    a = as_matrix(m)
    if folds < 2:
        raise ValueError("need at least 2 folds")
    limit = min(a.shape) - 1
    if max_rank is None:
        max_rank = min(20, limit)
    if not 1 <= max_rank <= limit:
        raise ValueError(f"max_rank must be in [1, {limit}], got {max_rank}")
    if stream is None:
        stream = RngStream(0)
    if fold_assignment is None:
        fold_assignment = _speckled_folds(a.shape, folds, stream.child(0))
    else:
        fold_assignment = np.asarray(fold_assignment, dtype=np.int64)
        if fold_assignment.shape != a.shape:
            raise ValueError("fold_assignment shape does not match the matrix")

    errors = np.empty((max_rank, folds))
    for fold in range(folds):
        held = fold_assignment == fold
        retained = ~held
        for r in range(1, max_rank + 1):
            completed = als_complete(
                a,
                retained,
                rank=r,
                reg=als_reg,
                iters=als_iters,
                stream=stream.child(1, fold, r),
            )
            diff = (completed - a)[held]
            errors[r - 1, fold] = float(np.mean(diff * diff))

    mean_err = errors.mean(axis=1)
    selected = int(np.argmin(mean_err)) + 1  # argmin takes the first (smallest) rank on ties
    svals = singular_values(a, min(a.shape))
    return RankReport(
        metric=metric,
        singular_values=svals,
        bcv_errors=errors,
        selected_rank=selected,
    )


def write_spectrum_csv(path: str, spectra: dict) -> None:
    """spectra: {metric_id: descending singular values} -> CSV for plotting."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("metric_id,index,singular_value\n")
        for j in sorted(spectra):
            for i, s in enumerate(spectra[j]):
                f.write(f"{j},{i},{format_real(s)}\n")
