"""Generalization measurements: differential errors, alpha/beta curves, and
convergence epochs.

A trained fold yields a differential error ``|train_error - full_error|``.
Over k folds, the empirical probability that the differential error exceeds a
threshold alpha is ``beta(alpha) = #{diffs > alpha} / k`` -- the minimal beta
for which the (alpha, beta)-generalization statement holds empirically.
Exceedance is strict because the good event is "gap <= alpha".

Convergence of an error series is operationalized as *plateau entry*: the
first snapshot from which the series never again leaves a band of width
``tol``.  A plateau must contain at least two snapshots -- the final snapshot
alone always spans a zero-width band and would make every series trivially
convergent.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .optim import TrainHistory


@dataclass(frozen=True)
class FoldResult:
    """Errors of one fold's classifier: on its own training fold and on the
    full distribution (all folds)."""

    fold: int
    train_error: float
    full_error: float

    @property
    def diff(self) -> float:
        return abs(self.train_error - self.full_error)


def beta_for_alpha(diffs, alpha: float) -> float:
    """Minimal beta satisfying the generalization statement at ``alpha``:
    the fraction of differential errors strictly greater than alpha."""
    diffs = np.asarray(diffs, dtype=np.float64)
    if diffs.size == 0:
        raise ValueError("need at least one differential error")
    return float(np.mean(diffs > alpha))


@dataclass(frozen=True)
class GeneralizationCurve:
    """Sampled alpha -> beta mapping, alphas ascending over [0, 1]."""

    alphas: np.ndarray
    betas: np.ndarray

    def alpha_max(self) -> float:
        """Smallest sampled alpha with beta = 0 (the largest observed
        differential error, rounded up to the grid)."""
        zero = np.flatnonzero(self.betas == 0.0)
        return float(self.alphas[zero[0]])

    def beta_at(self, alpha: float) -> float:
        i = int(np.searchsorted(self.alphas, alpha))
        return float(self.betas[min(i, len(self.betas) - 1)])


def generalization_curve(diffs, grid_step: float = 0.001) -> GeneralizationCurve:
    """Sample beta over the alpha grid 0, grid_step, ..., 1 (1 included)."""
    if not 0.0 < grid_step <= 0.1:
        raise ValueError(f"grid step must be in (0, 0.1], got {grid_step}")
    alphas = []
    i = 0
    while i * grid_step < 1.0:
        alphas.append(i * grid_step)
        i += 1
    alphas.append(1.0)
    alphas = np.asarray(alphas)
    betas = np.asarray([beta_for_alpha(diffs, a) for a in alphas])
    return GeneralizationCurve(alphas, betas)


def gap_reduction(sgd_diffs, dpsgd_diffs) -> float:
    """Relative reduction of the maximum differential error:
    1 - max(dpsgd) / max(sgd)."""
    sgd_diffs = np.asarray(sgd_diffs, dtype=np.float64)
    dpsgd_diffs = np.asarray(dpsgd_diffs, dtype=np.float64)
    if sgd_diffs.size == 0 or dpsgd_diffs.size == 0:
        raise ValueError("both differential-error lists must be non-empty")
    sgd_max = float(sgd_diffs.max())
    if sgd_max == 0.0:
        raise ZeroDivisionError("baseline max differential error is 0; ratio undefined")
    return 1.0 - float(dpsgd_diffs.max()) / sgd_max


def plateau_entry(values, tol: float) -> int | None:
    """Index of the first element from which the remaining values span at
    most ``tol``; None when no suffix of length >= 2 qualifies."""
    if tol <= 0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    values = list(values)
    if not values:
        raise ValueError("need at least one value")
    suffix_min = float("inf")
    suffix_max = float("-inf")
    entry = None
    for i in range(len(values) - 1, -1, -1):
        suffix_min = min(suffix_min, values[i])
        suffix_max = max(suffix_max, values[i])
        if suffix_max - suffix_min <= tol and i <= len(values) - 2:
            entry = i
    return entry


def convergence_epoch(history: TrainHistory, series: str, tol: float = 0.01) -> int | None:
    """Plateau-entry epoch of the train or test error series; None when the
    series never settles within ``tol`` over the recorded range."""
    if len(history) == 0:
        raise ValueError("history must contain at least one snapshot")
    values = history.series(series)
    if any(v is None for v in values):
        raise ValueError(f"history has no {series} errors recorded")
    index = plateau_entry(values, tol)
    return None if index is None else history.epochs()[index]


@dataclass(frozen=True)
class ConvergenceReport:
    """Plateau epochs and final errors of one training history."""

    epoch_train_converged: int | None
    epoch_test_converged: int | None
    final_train_error: float
    final_test_error: float | None

    @property
    def gap_ratio(self) -> float | None:
        """How much later the train series settles than the test series."""
        if not self.epoch_train_converged or not self.epoch_test_converged:
            return None
        return self.epoch_train_converged / self.epoch_test_converged


def convergence_report(history: TrainHistory, tol: float = 0.01) -> ConvergenceReport:
    last = history.snapshots[-1]
    has_test = all(s.test_error is not None for s in history.snapshots)
    return ConvergenceReport(
        convergence_epoch(history, "train", tol),
        convergence_epoch(history, "test", tol) if has_test else None,
        last.train_error,
        last.test_error,
    )


def write_curve_csv(
    path: str | os.PathLike,
    curve_sgd: GeneralizationCurve,
    curve_dpsgd: GeneralizationCurve,
) -> None:
    """Curve CSV: alpha,beta_sgd,beta_dpsgd (curves must share the grid)."""
    if not np.array_equal(curve_sgd.alphas, curve_dpsgd.alphas):
        raise ValueError("curves must be sampled on the same alpha grid")
    with open(path, "w", newline="") as fh:
        fh.write("alpha,beta_sgd,beta_dpsgd\n")
        for alpha, b_sgd, b_dpsgd in zip(
            curve_sgd.alphas, curve_sgd.betas, curve_dpsgd.betas
        ):
            fh.write(f"{float(alpha)!r},{float(b_sgd)!r},{float(b_dpsgd)!r}\n")


def write_convergence_csv(
    path: str | os.PathLike,
    epochs,
    sgd_train,
    sgd_test,
    dpsgd_train,
    dpsgd_test,
) -> None:
    """Convergence CSV: epoch,sgd_train,sgd_test,dpsgd_train,dpsgd_test.

    Values are classification accuracies, matching the emitted figures.
    """
    columns = [sgd_train, sgd_test, dpsgd_train, dpsgd_test]
    if any(len(c) != len(epochs) for c in columns):
        raise ValueError("all series must have one value per epoch")
    with open(path, "w", newline="") as fh:
        fh.write("epoch,sgd_train,sgd_test,dpsgd_train,dpsgd_test\n")
        for i, epoch in enumerate(epochs):
            row = ",".join(repr(float(c[i])) for c in columns)
            fh.write(f"{epoch},{row}\n")
