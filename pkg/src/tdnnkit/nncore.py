"""Dense network kernels shared by the TDNN stack and the FFNN baseline.

Affine layers, ReLU, softmax cross-entropy and a central-difference gradient
checker.  Everything is float64; forward/backward functions are pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericError, ShapeError


@dataclass
class AffineParams:
    """Weights (out_dim x in_dim) and bias (out_dim) of one affine layer."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise ShapeError("weights must be 2-D and bias 1-D")
        if self.weights.shape[0] != self.bias.shape[0]:
            raise ShapeError(
                f"bias length {self.bias.shape[0]} does not match "
                f"output dim {self.weights.shape[0]}"
            )
        if min(self.weights.shape) == 0:
            raise ShapeError("affine dimensions must be positive")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise NumericError("affine parameters contain non-finite values")

    @property
    def out_dim(self) -> int:
        return int(self.weights.shape[0])

    @property
    def in_dim(self) -> int:
        return int(self.weights.shape[1])

    def copy(self) -> "AffineParams":
        return AffineParams(self.weights.copy(), self.bias.copy())

    def size(self) -> int:
        return self.weights.size + self.bias.size


@dataclass
class Batch:
    """A block of input rows with one integer class label per row."""

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2 or self.inputs.shape[0] < 1:
            raise ShapeError("batch inputs must be a non-empty 2-D matrix")
        if self.labels.shape != (self.inputs.shape[0],):
            raise ShapeError("labels must be one id per input row")
        if self.labels.min(initial=0) < 0:
            raise DataError("labels must be non-negative class ids")


def glorot_uniform(rng: np.random.Generator, out_dim: int, in_dim: int) -> AffineParams:
    """Uniform init in +/- sqrt(6 / (fan_in + fan_out)), zero bias."""
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    weights = rng.uniform(-limit, limit, size=(out_dim, in_dim))
    return AffineParams(weights, np.zeros(out_dim))


def affine_forward(p: AffineParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != p.in_dim:
        raise ShapeError(
            f"input of shape {x.shape} does not match affine in_dim {p.in_dim}"
        )
    return x @ p.weights.T + p.bias


def affine_backward(p: AffineParams, x: np.ndarray, upstream: np.ndarray):
    """Gradients of an affine layer.

    Returns (grad_weights, grad_bias, grad_input) for upstream d(loss)/d(y).
    """
    grad_w = upstream.T @ x
    grad_b = upstream.sum(axis=0)
    grad_x = upstream @ p.weights
    return grad_w, grad_b, grad_x


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    # Closed at zero: gradient is 0 where x == 0.
    return np.where(x > 0, upstream, 0.0)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def softmax_xent(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over rows and its gradient wrt the logits.

    Returns (loss, grad) with grad = (softmax - one_hot) / n.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {labels.shape}")
    if labels.min() < 0 or labels.max() >= k:
        raise DataError(f"label ids must lie in [0, {k})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(log_z - shifted[rows, labels]))
    grad = softmax(logits)
    grad[rows, labels] -= 1.0
    return loss, grad / n


def grad_check(f, point: np.ndarray, epsilon: float = 1e-5) -> float:
    """Max relative disagreement between analytic and central-difference grads.

    ``f(x)`` must return ``(value, grad)`` where grad has the shape of x.
    The per-coordinate error is |analytic - cd| / max(|analytic|, |cd|, 1e-8).
    """
    point = np.asarray(point, dtype=np.float64)
    value, analytic = f(point)
    analytic = np.asarray(analytic, dtype=np.float64)
    if not np.isfinite(value) or not np.all(np.isfinite(analytic)):
        raise NumericError("function returned non-finite value or gradient")
    flat = point.ravel()
    worst = 0.0
    for i in range(flat.shape[0]):
        orig = flat[i]
        flat[i] = orig + epsilon
        up, _ = f(point)
        flat[i] = orig - epsilon
        down, _ = f(point)
        flat[i] = orig
        if not (np.isfinite(up) and np.isfinite(down)):
            raise NumericError(f"non-finite evaluation at coordinate {i}")
        cd = (up - down) / (2.0 * epsilon)
        a = analytic.ravel()[i]
        err = abs(a - cd) / max(abs(a), abs(cd), 1e-8)
        worst = max(worst, err)
    return worst
