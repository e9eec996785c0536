"""Training loops: plain SGD and differentially private SGD.

The private variant works on *lots*: each step samples every training example
independently with probability ``q = L/N``, computes per-example gradients,
clips each to L2 norm ``C``, sums them, adds a single Gaussian noise vector
N(0, (sigma*C)^2 I) over the flat parameter vector, and divides by the
*nominal* lot size L (never the realized one; a data-dependent divisor would
break the sensitivity bound).  Noise is drawn even when the lot is empty.

The SGD baseline is the classical scheme the private variant is compared
against: shuffled fixed-size minibatches, mean gradient, no clipping, no
noise.

Per-example clipping never materializes per-example gradient matrices.  For a
dense layer the per-example gradient is the outer product ``delta_i (x)
activation_i``, whose Frobenius norm is ``|delta_i| * |activation_i|``; the
squared per-example norm is accumulated from those factors, and the clipped
sum is a single matrix product after scaling each example's deltas.  This is
algebraically exact and keeps the reduction order fixed (independent of any
worker count).

Stream discipline: ``train`` forks its stream into init/lot/noise/shuffle
roots (labels 0..3) and per-step substreams off those, so e.g. changing the
noise scale can never perturb lot membership.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .nn import (
    ActivationOverflowError,
    Architecture,
    Gradient,
    GradientExplosionError,
    MlpParams,
    backprop_deltas,
    batch_forward,
    error_rate,
    init_params,
)
from .rng import RandomStream

MODE_SGD = "sgd"
MODE_DPSGD = "dpsgd"

POLICY_ABORT = "abort"
POLICY_SKIP_STEP = "skip_step"

FORK_INIT = 0
FORK_LOT = 1
FORK_NOISE = 2
FORK_SHUFFLE = 3

_CLIP_SLACK = 1.0 + 1e-12


class TrainingExplosionError(RuntimeError):
    """Training aborted on a non-finite gradient (policy "abort")."""

    def __init__(self, step: int, cause: str):
        super().__init__(f"gradient explosion at step {step}: {cause}")
        self.step = step


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run.

    ``lot_size`` doubles as the SGD minibatch size.  ``noise_scale`` and
    ``clip_norm`` are ignored in SGD mode.  ``eval_every`` is the number of
    epochs between history snapshots; None records the final epoch only.
    """

    mode: str
    learning_rate: float
    epochs: int
    lot_size: int
    noise_scale: float = 0.0
    clip_norm: float = 4.0
    explosion_policy: str = POLICY_ABORT
    eval_every: int | None = None

    def __post_init__(self):
        if self.mode not in (MODE_SGD, MODE_DPSGD):
            raise ValueError(f"mode must be 'sgd' or 'dpsgd', got {self.mode!r}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.lot_size <= 0:
            raise ValueError(f"lot size must be positive, got {self.lot_size}")
        if self.noise_scale < 0:
            raise ValueError(f"noise scale must be >= 0, got {self.noise_scale}")
        if self.clip_norm <= 0:
            raise ValueError(f"clip norm must be positive, got {self.clip_norm}")
        if self.explosion_policy not in (POLICY_ABORT, POLICY_SKIP_STEP):
            raise ValueError(f"unknown explosion policy {self.explosion_policy!r}")
        if self.eval_every is not None and self.eval_every <= 0:
            raise ValueError(f"eval_every must be positive or None, got {self.eval_every}")


@dataclass(frozen=True)
class StepRecord:
    """Observability for one update step."""

    step: int
    lot_size: int
    preclip_min_norm: float
    preclip_mean_norm: float
    preclip_max_norm: float
    clipped_frac: float
    exploded: bool = False


@dataclass(frozen=True)
class Snapshot:
    epoch: int
    train_error: float
    test_error: float | None
    lots: int


@dataclass
class TrainHistory:
    """Per-snapshot (epoch, train error, test error, cumulative update count)."""

    snapshots: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.snapshots)

    def __iter__(self):
        return iter(self.snapshots)

    def epochs(self) -> list[int]:
        return [s.epoch for s in self.snapshots]

    def series(self, which: str) -> list[float]:
        if which == "train":
            return [s.train_error for s in self.snapshots]
        if which == "test":
            return [s.test_error for s in self.snapshots]
        raise ValueError(f"series must be 'train' or 'test', got {which!r}")


def clip(grad: Gradient, clip_norm: float) -> Gradient:
    """Scale ``grad`` to L2 norm at most ``clip_norm``: g / max(1, |g|/C).

    A gradient already under the bound is returned unchanged (the same
    object).  A non-finite norm raises :class:`GradientExplosionError`.
    """
    if clip_norm <= 0:
        raise ValueError(f"clip norm must be positive, got {clip_norm}")
    norm = grad.norm()
    if not math.isfinite(norm):
        raise GradientExplosionError(f"gradient norm is {norm}")
    divisor = max(1.0, norm / clip_norm)
    if divisor == 1.0:
        return grad
    return Gradient(
        [w / divisor for w in grad.weights], [b / divisor for b in grad.biases]
    )


def sample_lot(n: int, q: float, stream: RandomStream) -> np.ndarray:
    """Indices of a lot: each of range(n) included independently with
    probability ``q``."""
    if not 0.0 < q <= 1.0:
        raise ValueError(f"sampling probability must be in (0, 1], got {q}")
    return np.flatnonzero(stream.uniforms(n) < q)


def _clipped_gradient_sum(
    params: MlpParams,
    inputs: np.ndarray,
    targets: np.ndarray,
    clip_norm: float | None,
) -> tuple[list[np.ndarray], list[np.ndarray], np.ndarray]:
    """Sum of per-example gradients, each clipped to ``clip_norm`` (no
    clipping when None).  Returns (weight sums, bias sums, pre-clip norms).

    SGD and DPSGD both run through here so that the noiseless, unclipped
    private step is bit-identical to a plain averaged step.
    """
    trace = batch_forward(params, inputs)
    deltas = backprop_deltas(params, trace, targets)
    sq_norms = np.zeros(len(inputs))
    for delta, act in zip(deltas, trace.activations):
        sq_norms += (delta**2).sum(axis=1) * ((act**2).sum(axis=1) + 1.0)
    norms = np.sqrt(sq_norms)
    if not np.all(np.isfinite(norms)):
        raise GradientExplosionError("non-finite per-example gradient norm")
    if clip_norm is None:
        scales = np.ones(len(inputs))
    else:
        scales = 1.0 / np.maximum(1.0, norms / clip_norm)
        assert np.all(norms * scales <= clip_norm * _CLIP_SLACK)
    weight_sums, bias_sums = [], []
    for delta, act in zip(deltas, trace.activations):
        scaled = delta * scales[:, None]
        weight_sums.append(scaled.T @ act)
        bias_sums.append(scaled.sum(axis=0))
    return weight_sums, bias_sums, norms


def _norm_stats(norms: np.ndarray, clip_norm: float | None) -> tuple[float, float, float, float]:
    if len(norms) == 0:
        return 0.0, 0.0, 0.0, 0.0
    clipped = float(np.mean(norms > clip_norm)) if clip_norm is not None else 0.0
    return float(norms.min()), float(norms.mean()), float(norms.max()), clipped


def dpsgd_step(
    params: MlpParams,
    inputs: np.ndarray,
    targets: np.ndarray,
    config: TrainConfig,
    lot_stream: RandomStream,
    noise_stream: RandomStream,
    step: int = 0,
) -> tuple[MlpParams, StepRecord]:
    """One private update over a freshly sampled lot.

    On a gradient explosion the configured policy applies: "abort" raises
    :class:`TrainingExplosionError`, "skip_step" returns the parameters
    unchanged with the step record flagged.
    """
    if config.mode != MODE_DPSGD:
        raise ValueError("dpsgd_step requires a config with mode 'dpsgd'")
    n = len(inputs)
    lot = sample_lot(n, config.lot_size / n, lot_stream)
    try:
        if len(lot):
            weight_sums, bias_sums, norms = _clipped_gradient_sum(
                params, inputs[lot], targets[lot], config.clip_norm
            )
        else:
            zero = Gradient.zeros(params.architecture)
            weight_sums, bias_sums, norms = zero.weights, zero.biases, np.empty(0)
    except (ActivationOverflowError, GradientExplosionError) as exc:
        if config.explosion_policy == POLICY_ABORT:
            raise TrainingExplosionError(step, str(exc)) from exc
        record = StepRecord(step, len(lot), 0.0, 0.0, 0.0, 0.0, exploded=True)
        return params, record
    # 0 * inf would poison the noiseless-ablation + unbounded-clip combination
    noise_std = config.noise_scale * config.clip_norm if config.noise_scale else 0.0
    noise = noise_stream.gaussians(params.size, 0.0, noise_std)
    scale = 1.0 / config.lot_size
    update_w, update_b, offset = [], [], 0
    for w_sum, b_sum in zip(weight_sums, bias_sums):
        w_noise = noise[offset : offset + w_sum.size].reshape(w_sum.shape)
        offset += w_sum.size
        b_noise = noise[offset : offset + b_sum.size]
        offset += b_sum.size
        update_w.append((w_sum + w_noise) * scale)
        update_b.append((b_sum + b_noise) * scale)
    new_params = params.updated(Gradient(update_w, update_b), -config.learning_rate)
    stats = _norm_stats(norms, config.clip_norm)
    return new_params, StepRecord(step, len(lot), *stats)


def sgd_step(
    params: MlpParams,
    batch_inputs: np.ndarray,
    batch_targets: np.ndarray,
    config: TrainConfig,
) -> MlpParams:
    """One plain SGD update: mean per-example gradient over the batch."""
    if config.mode != MODE_SGD:
        raise ValueError("sgd_step requires a config with mode 'sgd'")
    new_params, _ = _sgd_step_recorded(params, batch_inputs, batch_targets, config, 0)
    return new_params


def _sgd_step_recorded(
    params: MlpParams,
    batch_inputs: np.ndarray,
    batch_targets: np.ndarray,
    config: TrainConfig,
    step: int,
) -> tuple[MlpParams, StepRecord]:
    if len(batch_inputs) == 0:
        raise ValueError("sgd batch must be non-empty")
    try:
        weight_sums, bias_sums, norms = _clipped_gradient_sum(
            params, batch_inputs, batch_targets, None
        )
    except (ActivationOverflowError, GradientExplosionError) as exc:
        if config.explosion_policy == POLICY_ABORT:
            raise TrainingExplosionError(step, str(exc)) from exc
        record = StepRecord(step, len(batch_inputs), 0.0, 0.0, 0.0, 0.0, exploded=True)
        return params, record
    scale = 1.0 / len(batch_inputs)
    mean = Gradient(
        [w * scale for w in weight_sums], [b * scale for b in bias_sums]
    )
    new_params = params.updated(mean, -config.learning_rate)
    stats = _norm_stats(norms, None)
    return new_params, StepRecord(step, len(batch_inputs), *stats)


def train(
    train_set: tuple[np.ndarray, np.ndarray],
    test_set: tuple[np.ndarray, np.ndarray] | None,
    config: TrainConfig,
    arch: Architecture,
    stream: RandomStream,
) -> tuple[MlpParams, TrainHistory, list[StepRecord]]:
    """Run a full training session and return (final params, history, step log).

    ``train_set`` / ``test_set`` are (inputs, one-hot targets) pairs; the test
    set may be None, in which case snapshots carry no test error.  A DPSGD
    epoch is ceil(N/L) lots; an SGD epoch is one shuffled pass in minibatches
    of size L (the last one possibly smaller).  Snapshots are taken every
    ``eval_every`` epochs and always at the final epoch.
    """
    inputs, targets = train_set
    n = len(inputs)
    if n == 0:
        raise ValueError("training set must be non-empty")
    if config.lot_size > n:
        raise ValueError(f"lot size {config.lot_size} exceeds training set size {n}")
    init_stream = stream.fork(FORK_INIT)
    lot_root = stream.fork(FORK_LOT)
    noise_root = stream.fork(FORK_NOISE)
    shuffle_root = stream.fork(FORK_SHUFFLE)
    params = init_params(arch, init_stream)
    steps_per_epoch = math.ceil(n / config.lot_size)
    history = TrainHistory()
    records: list[StepRecord] = []
    step = 0
    for epoch in range(1, config.epochs + 1):
        if config.mode == MODE_DPSGD:
            for _ in range(steps_per_epoch):
                params, record = dpsgd_step(
                    params,
                    inputs,
                    targets,
                    config,
                    lot_root.fork(step),
                    noise_root.fork(step),
                    step=step,
                )
                records.append(record)
                step += 1
        else:
            perm = shuffle_root.fork(epoch).permutation(n)
            for start in range(0, n, config.lot_size):
                batch = perm[start : start + config.lot_size]
                params, record = _sgd_step_recorded(
                    params, inputs[batch], targets[batch], config, step
                )
                records.append(record)
                step += 1
        due = config.eval_every is not None and epoch % config.eval_every == 0
        if due or epoch == config.epochs:
            train_error = error_rate(params, inputs, targets)
            test_error = error_rate(params, *test_set) if test_set is not None else None
            history.snapshots.append(Snapshot(epoch, train_error, test_error, step))
    return params, history, records


def write_step_log(records: list[StepRecord], path: str | os.PathLike) -> None:
    """Step log CSV: step,lot_size,preclip_mean_norm,clipped_frac,exploded."""
    with open(path, "w", newline="") as fh:
        fh.write("step,lot_size,preclip_mean_norm,clipped_frac,exploded\n")
        for r in records:
            fh.write(
                f"{r.step},{r.lot_size},{r.preclip_mean_norm!r},"
                f"{r.clipped_frac!r},{int(r.exploded)}\n"
            )
