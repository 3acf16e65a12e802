"""Small differentiable models over flat parameter vectors.

Two model families are supported: an affine map (``linear``) and a network
with one tanh hidden layer (``one-hidden-layer``). Parameters always live in a
single 1-D float64 array with the layout

    linear:            W (out x in, row-major), b (out)
    one-hidden-layer:  W1 (hidden x in), b1 (hidden), W2 (out x hidden), b2 (out)

so that aggregation, clipping and noise addition never need to know the
architecture. Losses are means over the batch, so a client's loss scale does
not depend on how many examples it holds.

Gradients are analytic. Hessian-vector products are exact for linear models
and fall back to a central difference of gradients for the hidden-layer model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

import numpy as np

from .errors import ConfigError, ShapeError

ModelKind = Literal["linear", "one-hidden-layer"]
LossKind = Literal["squared-error", "softmax-cross-entropy"]

MODEL_KINDS = ("linear", "one-hidden-layer")
LOSS_KINDS = ("squared-error", "softmax-cross-entropy")


@dataclass(frozen=True)
class ModelSpec:
    kind: ModelKind = "linear"
    input_dim: int = 1
    hidden_dim: int = 0
    output_dim: int = 1
    loss: LossKind = "squared-error"

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}")
        if self.loss not in LOSS_KINDS:
            raise ConfigError(f"unknown loss {self.loss!r}")
        if self.input_dim < 1 or self.output_dim < 1:
            raise ConfigError("input_dim and output_dim must be >= 1")
        if self.kind == "one-hidden-layer" and self.hidden_dim < 1:
            raise ConfigError("one-hidden-layer model requires hidden_dim >= 1")
        if self.kind == "linear" and self.hidden_dim != 0:
            raise ConfigError("linear model requires hidden_dim == 0")
        if self.loss == "softmax-cross-entropy" and self.output_dim < 2:
            raise ConfigError("softmax-cross-entropy needs output_dim >= 2")

    @property
    def is_classifier(self) -> bool:
        return self.loss == "softmax-cross-entropy"


@dataclass(frozen=True)
class Batch:
    """Labeled examples.

    ``targets`` is an ``(n, output_dim)`` float array for regression and an
    ``(n,)`` integer array of class indices for classification.
    """

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=np.float64)
        if inputs.ndim == 1:
            inputs = inputs[:, None]
        targets = np.asarray(self.targets)
        if targets.dtype.kind == "f":
            targets = targets.astype(np.float64)
            if targets.ndim == 1:
                targets = targets[:, None]
        elif targets.dtype.kind in "iu":
            # integer targets are class indices; accept (n,) or (n, 1)
            targets = targets.astype(np.int64).reshape(-1)
        else:
            raise ShapeError(f"unsupported target dtype {targets.dtype}")
        if inputs.ndim != 2:
            raise ShapeError("inputs must be a matrix")
        if inputs.shape[0] < 1 or inputs.shape[0] != targets.shape[0]:
            raise ShapeError(
                f"inputs/targets row counts differ or are empty: "
                f"{inputs.shape[0]} vs {targets.shape[0]}")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def has_class_labels(self) -> bool:
        return self.targets.ndim == 1

    def take(self, index) -> "Batch":
        return Batch(self.inputs[index], self.targets[index])

    @staticmethod
    def concat(batches: list["Batch"]) -> "Batch":
        return Batch(np.concatenate([b.inputs for b in batches]),
                     np.concatenate([b.targets for b in batches]))


def param_count(spec: ModelSpec) -> int:
    if spec.kind == "linear":
        return spec.output_dim * (spec.input_dim + 1)
    return (spec.hidden_dim * (spec.input_dim + 1)
            + spec.output_dim * (spec.hidden_dim + 1))


@lru_cache(maxsize=None)
def _layout(spec: ModelSpec) -> tuple:
    out, offset = [], 0
    for shape in _layer_shapes(spec):
        size = math.prod(shape)
        out.append((offset, offset + size, shape))
        offset += size
    return tuple(out)


def unpack(spec: ModelSpec, theta: np.ndarray) -> list[np.ndarray]:
    """Views of ``theta`` as ``[W, b]`` or ``[W1, b1, W2, b2]``."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 1 or theta.shape[0] != param_count(spec):
        raise ShapeError(
            f"parameter vector has shape {theta.shape}, expected ({param_count(spec)},)")
    return [theta[a:b].reshape(shape) for a, b, shape in _layout(spec)]


def pack(parts: list[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.ravel(p) for p in parts])


def _layer_shapes(spec: ModelSpec) -> list[tuple[int, ...]]:
    if spec.kind == "linear":
        return [(spec.output_dim, spec.input_dim), (spec.output_dim,)]
    return [(spec.hidden_dim, spec.input_dim), (spec.hidden_dim,),
            (spec.output_dim, spec.hidden_dim), (spec.output_dim,)]


def init_params(spec: ModelSpec, seed) -> np.ndarray:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias."""
    rng = np.random.default_rng(seed)
    theta = []
    for shape, fan_in in zip(_layer_shapes(spec), _fan_ins(spec)):
        bound = 1.0 / np.sqrt(fan_in)
        theta.append(rng.uniform(-bound, bound, size=shape))
    return pack(theta)


def _fan_ins(spec: ModelSpec) -> list[int]:
    if spec.kind == "linear":
        return [spec.input_dim, spec.input_dim]
    return [spec.input_dim, spec.input_dim, spec.hidden_dim, spec.hidden_dim]


def _check_batch(spec: ModelSpec, batch: Batch) -> None:
    if batch.inputs.shape[1] != spec.input_dim:
        raise ShapeError(
            f"batch has {batch.inputs.shape[1]} input columns, model expects {spec.input_dim}")
    if spec.is_classifier:
        if not batch.has_class_labels:
            raise ShapeError("classification loss needs integer class-index targets")
        if batch.targets.min() < 0 or batch.targets.max() >= spec.output_dim:
            raise ShapeError("class index out of range")
    else:
        if batch.has_class_labels or batch.targets.shape[1] != spec.output_dim:
            raise ShapeError(
                f"regression targets must have shape (n, {spec.output_dim})")


def _forward(spec: ModelSpec, theta: np.ndarray, x: np.ndarray):
    parts = unpack(spec, theta)
    if spec.kind == "linear":
        w, b = parts
        return x @ w.T + b, None
    w1, b1, w2, b2 = parts
    h = np.tanh(x @ w1.T + b1)
    return h @ w2.T + b2, h


def predict(spec: ModelSpec, theta: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    """Raw model outputs (logits for classifiers)."""
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    return _forward(spec, theta, x)[0]


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _loss_and_dz(spec: ModelSpec, z: np.ndarray, batch: Batch):
    n = z.shape[0]
    if spec.loss == "squared-error":
        r = z - batch.targets
        return 0.5 * float(np.sum(r * r)) / n, r / n
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.sum(np.exp(shifted), axis=1))
    rows = np.arange(n)
    nll = log_norm - shifted[rows, batch.targets]
    p = np.exp(shifted - log_norm[:, None])
    p[rows, batch.targets] -= 1.0
    return float(np.mean(nll)), p / n


def loss(spec: ModelSpec, theta: np.ndarray, batch: Batch) -> float:
    """Mean loss; squared error is 0.5 * mean ||prediction - target||^2."""
    _check_batch(spec, batch)
    z, _ = _forward(spec, theta, batch.inputs)
    return _loss_and_dz(spec, z, batch)[0]


def loss_and_grad(spec: ModelSpec, theta: np.ndarray, batch: Batch) -> tuple[float, np.ndarray]:
    _check_batch(spec, batch)
    x = batch.inputs
    z, h = _forward(spec, theta, x)
    value, dz = _loss_and_dz(spec, z, batch)
    if spec.kind == "linear":
        return value, pack([dz.T @ x, dz.sum(axis=0)])
    w2 = unpack(spec, theta)[2]
    da = (dz @ w2) * (1.0 - h * h)
    return value, pack([da.T @ x, da.sum(axis=0), dz.T @ h, dz.sum(axis=0)])


def grad(spec: ModelSpec, theta: np.ndarray, batch: Batch) -> np.ndarray:
    return loss_and_grad(spec, theta, batch)[1]


def hvp(spec: ModelSpec, theta: np.ndarray, batch: Batch, v: np.ndarray,
        h: float = 1e-5) -> np.ndarray:
    """Hessian of the batch loss at ``theta`` applied to direction ``v``.

    Exact for linear models. For the hidden-layer model a central difference
    of analytic gradients is used with step ``h / ||v||`` along ``v``.
    """
    _check_batch(spec, batch)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (param_count(spec),):
        raise ShapeError(f"direction has shape {v.shape}, expected ({param_count(spec)},)")
    if spec.kind == "linear":
        x = batch.inputs
        n = x.shape[0]
        dw, db = unpack(spec, v)
        dz = x @ dw.T + db
        if spec.loss == "softmax-cross-entropy":
            z, _ = _forward(spec, theta, x)
            p = _softmax(z)
            dz = p * dz - p * np.sum(p * dz, axis=1, keepdims=True)
        dz = dz / n
        return pack([dz.T @ x, dz.sum(axis=0)])
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        return np.zeros_like(v)
    step = h / norm
    theta = np.asarray(theta, dtype=np.float64)
    g_plus = grad(spec, theta + step * v, batch)
    g_minus = grad(spec, theta - step * v, batch)
    return (g_plus - g_minus) / (2.0 * step)
