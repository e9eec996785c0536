"""Experiment drivers: dataset emission, the k-fold generalization-gap sweep,
and the convergence-vs-epochs comparison.

Every run owns a single master stream and forks one substream per purpose
(top-level labels below), so arms, folds, and noise scales can be added or
reordered without perturbing each other's draws.  All delimited output is
written with ``repr`` floats (shortest round-trip form), which makes reruns
byte-identical for a fixed configuration.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

from . import analysis, plots, privacy
from .config import ExperimentConfig, RunManifest
from .data import generate, split_folds, write_csv
from .nn import Architecture, error_rate, init_params
from .optim import FORK_INIT, TrainHistory, train
from .rng import RandomStream

_FORK_GAP_DATA = 0
_FORK_GAP_ARMS = 1
_FORK_CONV_DATA = 2
_FORK_CONV_ARMS = 3
_ARM_SGD = 0
_ARM_DPSGD = 1

HIDDEN_SIZES = (128, 16)
OUTPUT_CLASSES = 2


def architecture_for(attr_count: int) -> Architecture:
    return Architecture((attr_count,) + HIDDEN_SIZES + (OUTPUT_CLASSES,))


def _sigma_tag(sigma: float) -> str:
    return f"{sigma:g}".replace(".", "p")


def _fmt(x: float) -> str:
    return repr(float(x))


# -- gen-data ----------------------------------------------------------------


def run_gen_data(config: ExperimentConfig, out_dir: str | os.PathLike) -> str:
    """Generate the dataset and write it as CSV; returns the dataset path."""
    os.makedirs(out_dir, exist_ok=True)
    dataset_name = "dataset.csv"
    manifest = RunManifest.start("gen-data", config, [dataset_name])
    manifest.runs.append({"purpose": "dataset", "stream_path": [_FORK_GAP_DATA]})
    manifest.write(out_dir)
    stream = RandomStream(config.master_seed)
    dataset = generate(config.synthetic_spec(), stream.fork(_FORK_GAP_DATA))
    folds = split_folds(dataset, config.folds)
    manifest.runs.append(
        {"purpose": "folds", "count": len(folds), "fold_size": len(folds.folds[0])}
    )
    write_csv(dataset, os.path.join(out_dir, dataset_name))
    manifest.finish(out_dir)
    return os.path.join(out_dir, dataset_name)


# -- generalization-gap sweep --------------------------------------------------


@dataclass
class SigmaGapResult:
    """Both arms' fold results at one noise scale, plus their curves."""

    sigma: float
    sgd: list = field(default_factory=list)
    dpsgd: list = field(default_factory=list)
    curve_sgd: analysis.GeneralizationCurve | None = None
    curve_dpsgd: analysis.GeneralizationCurve | None = None

    def sgd_diffs(self) -> list[float]:
        return [r.diff for r in self.sgd]

    def dpsgd_diffs(self) -> list[float]:
        return [r.diff for r in self.dpsgd]


@dataclass
class GapOutcome:
    per_sigma: list
    out_dir: str

    def for_sigma(self, sigma: float) -> SigmaGapResult:
        for result in self.per_sigma:
            if result.sigma == sigma:
                return result
        raise KeyError(f"no results for sigma={sigma}")


def _train_fold_arm(dataset, fold_indices, train_config, arch, stream):
    inputs = dataset.inputs()
    targets = dataset.one_hot_labels()
    fold_inputs = inputs[fold_indices]
    fold_targets = targets[fold_indices]
    params, history, _ = train(
        (fold_inputs, fold_targets), None, train_config, arch, stream
    )
    train_error = error_rate(params, fold_inputs, fold_targets)
    full_error = error_rate(params, inputs, targets)
    return train_error, full_error


def run_overfit(config: ExperimentConfig, out_dir: str | os.PathLike) -> GapOutcome:
    """Train both arms on every fold for every noise scale; emit one table
    CSV, one curve CSV, and one curve SVG per noise scale.

    Table rows mirror the per-fold layout: the classifier's error on its own
    training fold, its error on the full distribution (all folds), and the
    absolute difference, for SGD then DPSGD.
    """
    os.makedirs(out_dir, exist_ok=True)
    outputs = []
    for sigma in config.sigma_list:
        tag = _sigma_tag(sigma)
        outputs += [f"table_sigma{tag}.csv", f"curve_sigma{tag}.csv", f"curve_sigma{tag}.svg"]
    manifest = RunManifest.start("overfit", config, outputs)
    manifest.write(out_dir)

    stream = RandomStream(config.master_seed)
    dataset = generate(config.synthetic_spec(), stream.fork(_FORK_GAP_DATA))
    folds = split_folds(dataset, config.folds)
    arch = architecture_for(config.attr_count)
    arm_root = stream.fork(_FORK_GAP_ARMS)

    per_sigma = []
    for sigma_index, sigma in enumerate(config.sigma_list):
        sigma_root = arm_root.fork(sigma_index)
        result = SigmaGapResult(sigma)
        for fold_index, fold_indices in enumerate(folds):
            fold_root = sigma_root.fork(fold_index)
            sgd_stream = fold_root.fork(_ARM_SGD)
            dpsgd_stream = fold_root.fork(_ARM_DPSGD)
            manifest.runs.append(
                {
                    "sigma": sigma,
                    "fold": fold_index,
                    "sgd_stream_path": list(sgd_stream.path),
                    "dpsgd_stream_path": list(dpsgd_stream.path),
                }
            )
            sgd_train, sgd_full = _train_fold_arm(
                dataset, fold_indices, config.sgd_config(), arch, sgd_stream
            )
            dpsgd_train, dpsgd_full = _train_fold_arm(
                dataset, fold_indices, config.dpsgd_config(sigma), arch, dpsgd_stream
            )
            result.sgd.append(analysis.FoldResult(fold_index, sgd_train, sgd_full))
            result.dpsgd.append(analysis.FoldResult(fold_index, dpsgd_train, dpsgd_full))
        result.curve_sgd = analysis.generalization_curve(
            result.sgd_diffs(), config.curve_grid_step
        )
        result.curve_dpsgd = analysis.generalization_curve(
            result.dpsgd_diffs(), config.curve_grid_step
        )
        tag = _sigma_tag(sigma)
        _write_gap_table(os.path.join(out_dir, f"table_sigma{tag}.csv"), result)
        analysis.write_curve_csv(
            os.path.join(out_dir, f"curve_sigma{tag}.csv"),
            result.curve_sgd,
            result.curve_dpsgd,
        )
        fig = plots.curve_figure(
            result.curve_sgd.alphas,
            result.curve_sgd.betas,
            result.curve_dpsgd.betas,
            sigma,
        )
        plots.save_svg(fig, os.path.join(out_dir, f"curve_sigma{tag}.svg"))
        per_sigma.append(result)
    manifest.finish(out_dir)
    return GapOutcome(per_sigma, str(out_dir))


def _write_gap_table(path: str, result: SigmaGapResult) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("fold,sgd_train,sgd_test,sgd_diff,dpsgd_train,dpsgd_test,dpsgd_diff\n")
        for sgd, dpsgd in zip(result.sgd, result.dpsgd):
            fh.write(
                f"{sgd.fold},{_fmt(sgd.train_error)},{_fmt(sgd.full_error)},"
                f"{_fmt(sgd.diff)},{_fmt(dpsgd.train_error)},"
                f"{_fmt(dpsgd.full_error)},{_fmt(dpsgd.diff)}\n"
            )


# -- convergence vs epochs -----------------------------------------------------


@dataclass
class SigmaConvergenceResult:
    """Accuracy series (epoch 0 included) and plateau reports at one noise
    scale."""

    sigma: float
    epochs: list
    accuracy: dict
    sgd_history: TrainHistory
    dpsgd_history: TrainHistory
    sgd_report: analysis.ConvergenceReport
    dpsgd_report: analysis.ConvergenceReport


@dataclass
class ConvergenceOutcome:
    per_sigma: list
    out_dir: str

    def for_sigma(self, sigma: float) -> SigmaConvergenceResult:
        for result in self.per_sigma:
            if result.sigma == sigma:
                return result
        raise KeyError(f"no results for sigma={sigma}")


def _initial_errors(arch, arm_stream, train_set, test_set):
    # train() will fork the same label, so these are the exact initial params
    params = init_params(arch, arm_stream.fork(FORK_INIT))
    return (
        error_rate(params, *train_set),
        error_rate(params, *test_set),
    )


def run_convergence(config: ExperimentConfig, out_dir: str | os.PathLike) -> ConvergenceOutcome:
    """Train both arms on a 50/50 split, snapshotting errors at fixed epoch
    intervals; emit accuracy-vs-epoch CSV and SVG per noise scale."""
    os.makedirs(out_dir, exist_ok=True)
    outputs = []
    for sigma in config.conv_sigma_list:
        tag = _sigma_tag(sigma)
        outputs += [f"convergence_sigma{tag}.csv", f"convergence_sigma{tag}.svg"]
    manifest = RunManifest.start("convergence", config, outputs)
    manifest.write(out_dir)

    stream = RandomStream(config.master_seed)
    dataset = generate(config.convergence_spec(), stream.fork(_FORK_CONV_DATA))
    inputs = dataset.inputs()
    targets = dataset.one_hot_labels()
    n_train = config.conv_train_records
    train_set = (inputs[:n_train], targets[:n_train])
    test_set = (inputs[n_train:], targets[n_train:])
    arch = architecture_for(config.attr_count)
    arm_root = stream.fork(_FORK_CONV_ARMS)

    per_sigma = []
    for sigma_index, sigma in enumerate(config.conv_sigma_list):
        sigma_root = arm_root.fork(sigma_index)
        sgd_stream = sigma_root.fork(_ARM_SGD)
        dpsgd_stream = sigma_root.fork(_ARM_DPSGD)
        manifest.runs.append(
            {
                "sigma": sigma,
                "sgd_stream_path": list(sgd_stream.path),
                "dpsgd_stream_path": list(dpsgd_stream.path),
            }
        )
        sgd_initial = _initial_errors(arch, sgd_stream, train_set, test_set)
        dpsgd_initial = _initial_errors(arch, dpsgd_stream, train_set, test_set)
        _, sgd_history, _ = train(
            train_set, test_set, config.conv_sgd_config(), arch, sgd_stream
        )
        _, dpsgd_history, _ = train(
            train_set, test_set, config.conv_dpsgd_config(sigma), arch, dpsgd_stream
        )
        epochs = [0] + sgd_history.epochs()
        if dpsgd_history.epochs() != sgd_history.epochs():
            raise RuntimeError("arms disagree on the snapshot epoch axis")
        accuracy = {
            "sgd_train": [1.0 - sgd_initial[0]] + [1.0 - e for e in sgd_history.series("train")],
            "sgd_test": [1.0 - sgd_initial[1]] + [1.0 - e for e in sgd_history.series("test")],
            "dpsgd_train": [1.0 - dpsgd_initial[0]]
            + [1.0 - e for e in dpsgd_history.series("train")],
            "dpsgd_test": [1.0 - dpsgd_initial[1]]
            + [1.0 - e for e in dpsgd_history.series("test")],
        }
        tag = _sigma_tag(sigma)
        analysis.write_convergence_csv(
            os.path.join(out_dir, f"convergence_sigma{tag}.csv"),
            epochs,
            accuracy["sgd_train"],
            accuracy["sgd_test"],
            accuracy["dpsgd_train"],
            accuracy["dpsgd_test"],
        )
        fig = plots.history_figure(epochs, accuracy, sigma)
        plots.save_svg(fig, os.path.join(out_dir, f"convergence_sigma{tag}.svg"))
        result = SigmaConvergenceResult(
            sigma,
            epochs,
            accuracy,
            sgd_history,
            dpsgd_history,
            _report_or_none(sgd_history, config.conv_tol),
            _report_or_none(dpsgd_history, config.conv_tol),
        )
        per_sigma.append(result)
    manifest.finish(out_dir)
    return ConvergenceOutcome(per_sigma, str(out_dir))


def _report_or_none(history: TrainHistory, tol: float):
    if len(history) == 0:
        return None
    return analysis.convergence_report(history, tol)


# -- accountant ----------------------------------------------------------------


ACCOUNTANT_COLUMNS = (
    "sigma,q,steps,eps_step,eps_amplified,eps_total,delta_total"
)


def accountant_row(sigma: float, q: float, steps: int, delta: float) -> dict:
    """One ledger line: per-step cost at the lot level, after amplification,
    and the composed total."""
    eps_step = privacy.eps_for_sigma(sigma, delta)
    amplified = privacy.amplify(privacy.EpsDelta(eps_step, delta), q)
    total = privacy.strong_composition_accountant(sigma, q, steps, delta)
    return {
        "sigma": sigma,
        "q": q,
        "steps": steps,
        "eps_step": eps_step,
        "eps_amplified": amplified.epsilon,
        "eps_total": total.epsilon,
        "delta_total": total.delta,
    }


def format_accountant_table(rows: list[dict]) -> str:
    lines = [ACCOUNTANT_COLUMNS]
    for row in rows:
        lines.append(
            f"{row['sigma']:g},{row['q']:g},{row['steps']},"
            f"{row['eps_step']:.6g},{row['eps_amplified']:.6g},"
            f"{row['eps_total']:.6g},{row['delta_total']:.6g}"
        )
    return "\n".join(lines) + "\n"


def steps_per_epoch(n: int, lot_size: int) -> int:
    return math.ceil(n / lot_size)
