"""Fully connected ReLU/softmax classifier with exact per-example gradients.

The layer stack is dense: each layer computes ``z = W @ a + b``; hidden layers
apply ReLU (subgradient 0 at 0), the output layer applies a max-shifted
softmax.  The loss is categorical cross-entropy with a 1e-12 floor inside the
log only; the backward pass uses the fused output delta ``probs - target``,
which needs no floor.

Parameters and gradients share one flat-vector convention: per layer, weights
row-major then biases, layers in order.  For the default 200-128-16-2
architecture the flat length is 27,826.

Checkpoint files (:func:`save_params` / :func:`load_params`) are little-endian
binary: uint32 layer count, that many uint32 layer sizes, then the flat
float64 parameter vector.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .rng import RandomStream


class ActivationOverflowError(ArithmeticError):
    """A forward pass produced a non-finite pre-activation.

    ``layer`` is the 1-based index of the offending layer.
    """

    def __init__(self, layer: int):
        super().__init__(f"non-finite pre-activation in layer {layer}")
        self.layer = layer


class GradientExplosionError(ArithmeticError):
    """A gradient came out non-finite; the caller decides the policy."""


def l2_norm(v: np.ndarray) -> float:
    """Euclidean norm; exactly 0 for the zero vector."""
    v = np.asarray(v, dtype=np.float64)
    return float(np.sqrt(np.dot(v, v)))


def softmax(z: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis."""
    shifted = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, target: np.ndarray, floor: float = 1e-12) -> float:
    """Categorical cross-entropy -sum(target * log(max(probs, floor)))."""
    return float(-np.sum(target * np.log(np.maximum(probs, floor))))


@dataclass(frozen=True)
class Architecture:
    """Layer sizes, input first.  Hidden layers are ReLU, output is softmax."""

    layer_sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 3:
            raise ValueError("need an input layer, at least one hidden layer, and an output layer")
        if any(s < 1 for s in sizes):
            raise ValueError(f"layer sizes must be positive, got {sizes}")
        if sizes[-1] < 2:
            raise ValueError(f"output layer must have >= 2 units, got {sizes[-1]}")

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_size(self) -> int:
        return self.layer_sizes[-1]

    @property
    def layer_count(self) -> int:
        """Number of weight layers."""
        return len(self.layer_sizes) - 1

    @property
    def param_count(self) -> int:
        return sum(
            fan_out * fan_in + fan_out
            for fan_in, fan_out in zip(self.layer_sizes, self.layer_sizes[1:])
        )


DEFAULT_ARCHITECTURE = Architecture((200, 128, 16, 2))


class _LayerStack:
    """Per-layer (weights, biases) arrays with a flat float64 view.

    Base for both parameters and gradients, which share shapes and the
    flatten/unflatten round-trip.
    """

    __slots__ = ("weights", "biases")

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray]):
        if len(weights) != len(biases):
            raise ValueError("weights and biases must pair up layer by layer")
        for w, b in zip(weights, biases):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ValueError(f"inconsistent layer shapes {w.shape} / {b.shape}")
        self.weights = weights
        self.biases = biases

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    @property
    def architecture(self) -> Architecture:
        return Architecture(self.layer_sizes)

    @property
    def size(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def flatten(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    @classmethod
    def from_flat(cls, arch: Architecture, flat: np.ndarray):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (arch.param_count,):
            raise ValueError(
                f"flat vector has length {flat.shape}, architecture needs "
                f"({arch.param_count},)"
            )
        weights, biases, offset = [], [], 0
        for fan_in, fan_out in zip(arch.layer_sizes, arch.layer_sizes[1:]):
            weights.append(flat[offset : offset + fan_out * fan_in].reshape(fan_out, fan_in).copy())
            offset += fan_out * fan_in
            biases.append(flat[offset : offset + fan_out].copy())
            offset += fan_out
        return cls(weights, biases)

    @classmethod
    def zeros(cls, arch: Architecture):
        weights = [
            np.zeros((fan_out, fan_in))
            for fan_in, fan_out in zip(arch.layer_sizes, arch.layer_sizes[1:])
        ]
        biases = [np.zeros(fan_out) for fan_out in arch.layer_sizes[1:]]
        return cls(weights, biases)

    def copy(self):
        return type(self)([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def all_finite(self) -> bool:
        return all(
            np.all(np.isfinite(w)) and np.all(np.isfinite(b))
            for w, b in zip(self.weights, self.biases)
        )


class MlpParams(_LayerStack):
    """All weights and biases of the network."""

    def updated(self, grad: "Gradient", scale: float) -> "MlpParams":
        """New parameters ``theta + scale * grad`` (pass a negative scale to
        descend)."""
        return MlpParams(
            [w + scale * gw for w, gw in zip(self.weights, grad.weights)],
            [b + scale * gb for b, gb in zip(self.biases, grad.biases)],
        )


class Gradient(_LayerStack):
    """Loss gradient with the same shape family as :class:`MlpParams`."""

    def norm(self) -> float:
        return l2_norm(self.flatten())


def init_params(arch: Architecture, stream: RandomStream) -> MlpParams:
    """ReLU-scaled Gaussian init: weights ~ N(0, 2/fan_in), biases 0."""
    weights, biases = [], []
    for fan_in, fan_out in zip(arch.layer_sizes, arch.layer_sizes[1:]):
        std = np.sqrt(2.0 / fan_in)
        weights.append(stream.gaussians(fan_out * fan_in, 0.0, std).reshape(fan_out, fan_in))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


@dataclass
class ForwardTrace:
    """Intermediate state of one forward pass.

    ``pre_activations[k]`` is layer k+1's ``z``; ``activations[0]`` is the
    input and ``activations[k]`` the post-ReLU output of hidden layer k.
    ``probs`` is the softmax output.
    """

    pre_activations: list
    activations: list
    probs: np.ndarray


def forward(params: MlpParams, x: np.ndarray) -> ForwardTrace:
    """Forward pass for a single example."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.layer_sizes[0],):
        raise ValueError(f"input has shape {x.shape}, expected ({params.layer_sizes[0]},)")
    pre, acts = [], [x]
    a = x
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = w @ a + b
        if not np.all(np.isfinite(z)):
            raise ActivationOverflowError(k + 1)
        pre.append(z)
        if k < last:
            a = np.maximum(z, 0.0)
            acts.append(a)
    return ForwardTrace(pre, acts, softmax(pre[-1]))


def per_example_gradient(
    params: MlpParams, x: np.ndarray, target: np.ndarray
) -> tuple[float, Gradient]:
    """Loss and its exact gradient w.r.t. every weight and bias, for one
    example.  Pure function; safe to evaluate concurrently against shared
    read-only params."""
    trace = forward(params, x)
    loss = cross_entropy(trace.probs, target)
    delta = trace.probs - np.asarray(target, dtype=np.float64)
    weights_grad = [np.empty(0)] * len(params.weights)
    biases_grad = [np.empty(0)] * len(params.weights)
    for k in range(len(params.weights) - 1, -1, -1):
        weights_grad[k] = np.outer(delta, trace.activations[k])
        biases_grad[k] = delta.copy()
        if k > 0:
            delta = (params.weights[k].T @ delta) * (trace.pre_activations[k - 1] > 0.0)
    grad = Gradient(weights_grad, biases_grad)
    if not grad.all_finite():
        raise GradientExplosionError("non-finite per-example gradient")
    return loss, grad


@dataclass
class BatchTrace:
    """Batched analogue of :class:`ForwardTrace`; rows are examples."""

    pre_activations: list
    activations: list
    probs: np.ndarray


def batch_forward(params: MlpParams, inputs: np.ndarray) -> BatchTrace:
    """Forward pass for a batch, rows of ``inputs`` being examples."""
    a = np.asarray(inputs, dtype=np.float64)
    pre, acts = [], [a]
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w.T + b
        if not np.all(np.isfinite(z)):
            raise ActivationOverflowError(k + 1)
        pre.append(z)
        if k < last:
            a = np.maximum(z, 0.0)
            acts.append(a)
    return BatchTrace(pre, acts, softmax(pre[-1]))


def backprop_deltas(
    params: MlpParams, trace: BatchTrace, targets: np.ndarray
) -> list[np.ndarray]:
    """Per-layer error terms for every example in a batch.

    Returns deltas[k] of shape (batch, fan_out of layer k); the per-example
    gradient of layer k is ``outer(deltas[k][i], activations[k][i])`` for the
    weights and ``deltas[k][i]`` for the biases.
    """
    deltas = [np.empty(0)] * len(params.weights)
    delta = trace.probs - np.asarray(targets, dtype=np.float64)
    for k in range(len(params.weights) - 1, -1, -1):
        deltas[k] = delta
        if k > 0:
            delta = (delta @ params.weights[k]) * (trace.pre_activations[k - 1] > 0.0)
    return deltas


def error_rate(params: MlpParams, inputs: np.ndarray, targets: np.ndarray) -> float:
    """Fraction of examples whose predicted class (argmax of the output
    probabilities, ties toward the lower index) differs from the target's."""
    if len(inputs) == 0:
        raise ValueError("error_rate needs a non-empty record set")
    trace = batch_forward(params, inputs)
    predicted = np.argmax(trace.probs, axis=1)
    actual = np.argmax(targets, axis=1)
    return float(np.mean(predicted != actual))


def save_params(params: MlpParams, path: str | os.PathLike) -> None:
    """Write a checkpoint: uint32 layer count, uint32 layer sizes, float64
    flat parameter vector, all little-endian."""
    sizes = params.layer_sizes
    flat = params.flatten()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(sizes)))
        fh.write(struct.pack(f"<{len(sizes)}I", *sizes))
        fh.write(flat.astype("<f8").tobytes())


def load_params(path: str | os.PathLike) -> MlpParams:
    """Read a checkpoint written by :func:`save_params`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise ValueError("checkpoint truncated: missing layer count")
    (count,) = struct.unpack_from("<I", raw, 0)
    header_end = 4 + 4 * count
    if len(raw) < header_end:
        raise ValueError("checkpoint truncated: missing layer sizes")
    sizes = struct.unpack_from(f"<{count}I", raw, 4)
    arch = Architecture(sizes)
    flat = np.frombuffer(raw, dtype="<f8", offset=header_end)
    if flat.shape[0] != arch.param_count:
        raise ValueError(
            f"checkpoint holds {flat.shape[0]} parameters, architecture "
            f"{sizes} needs {arch.param_count}"
        )
    return MlpParams.from_flat(arch, flat)
