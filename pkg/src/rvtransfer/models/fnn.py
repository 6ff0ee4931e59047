"""Three-hidden-layer feedforward network trained by backprop + ADAM.

Architecture is fixed at d -> 8 -> 4 -> 2 -> 1 with ReLU hidden activations
and an identity output. Inputs are z-scored with statistics from the training
portion. Training minimizes mean squared error with mini-batch ADAM and
early-stops on a chronological 10% validation split; the epoch count of the
best validation loss is recorded so later re-estimations can train for exactly
that many epochs without a holdout.

For speed, all parameters live in one flat vector with per-layer views, so
the ADAM update is a handful of vectorized operations; the backward pass is
shared between training and the finite-difference gradient checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data import SupervisedDataSet
from ..errors import FitError, ValidationError

HIDDEN_WIDTHS = (8, 4, 2)
MIN_ROWS_FOR_VALIDATION = 10


@dataclass(frozen=True)
class AdamParams:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


@dataclass(frozen=True)
class FitConfig:
    batch_size: int = 4  # 4 target-only, 512 transfer-selected, 1024 pooled
    max_epochs: int = 500
    patience: int = 100
    validation_fraction: float = 0.10
    seed: int = 0
    adam: AdamParams = field(default_factory=AdamParams)

    def __post_init__(self) -> None:
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValidationError("validation_fraction must lie in (0, 1)")
        if min(self.batch_size, self.max_epochs, self.patience) < 1:
            raise ValidationError("batch_size, max_epochs and patience must be >= 1")


@dataclass
class FnnModel:
    layer_weights: list[np.ndarray]  # W^l, shapes (8,d), (4,8), (2,4), (1,2)
    layer_biases: list[np.ndarray]
    norm_mean: np.ndarray
    norm_std: np.ndarray
    trained_epochs: int

    def predict(self, x: np.ndarray) -> float:
        return predict_fnn(self, x)

    def to_snapshot(self) -> dict:
        return {
            "kind": "fnn",
            "weights": [w.tolist() for w in self.layer_weights],
            "biases": [b.tolist() for b in self.layer_biases],
            "norm_mean": self.norm_mean.tolist(),
            "norm_std": self.norm_std.tolist(),
            "trained_epochs": self.trained_epochs,
        }

    @classmethod
    def from_snapshot(cls, snap: dict) -> "FnnModel":
        return cls(
            layer_weights=[np.asarray(w, dtype=float) for w in snap["weights"]],
            layer_biases=[np.asarray(b, dtype=float) for b in snap["biases"]],
            norm_mean=np.asarray(snap["norm_mean"], dtype=float),
            norm_std=np.asarray(snap["norm_std"], dtype=float),
            trained_epochs=int(snap["trained_epochs"]),
        )


def _layer_shapes(n_features: int) -> list[tuple[int, int]]:
    widths = (n_features,) + HIDDEN_WIDTHS + (1,)
    return [(fan_out, fan_in) for fan_in, fan_out in zip(widths, widths[1:])]


def _views(flat: np.ndarray, shapes: list[tuple[int, int]]):
    """Per-layer weight/bias views into one flat parameter vector."""
    weights, biases = [], []
    pos = 0
    for fan_out, fan_in in shapes:
        weights.append(flat[pos : pos + fan_out * fan_in].reshape(fan_out, fan_in))
        pos += fan_out * fan_in
        biases.append(flat[pos : pos + fan_out])
        pos += fan_out
    return weights, biases


def _init_flat(
    n_features: int, rng: np.random.Generator
) -> tuple[np.ndarray, list[np.ndarray], list[np.ndarray]]:
    shapes = _layer_shapes(n_features)
    total = sum(o * i + o for o, i in shapes)
    flat = np.zeros(total)
    weights, biases = _views(flat, shapes)
    for w in weights:
        bound = np.sqrt(3.0 / w.shape[1])
        w[:] = rng.uniform(-bound, bound, size=w.shape)
    return flat, weights, biases


def init_params(n_features: int, rng: np.random.Generator) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Scaled-uniform weights with variance 1/fan_in; zero biases."""
    _, weights, biases = _init_flat(n_features, rng)
    return weights, biases


def forward(
    weights: list[np.ndarray], biases: list[np.ndarray], x: np.ndarray
) -> list[np.ndarray]:
    """Activations [a^0 .. a^L] for a batch of normalized inputs (n, d)."""
    acts = [np.asarray(x, dtype=float)]
    last = len(weights) - 1
    for l, (w, b) in enumerate(zip(weights, biases)):
        z = acts[-1] @ w.T + b
        acts.append(z if l == last else np.maximum(z, 0.0))
    return acts


def _backward(
    weights: list[np.ndarray],
    acts: list[np.ndarray],
    y: np.ndarray,
    grads_w: list[np.ndarray],
    grads_b: list[np.ndarray],
) -> float:
    """MSE loss; writes its gradients into the provided per-layer arrays."""
    pred = acts[-1][:, 0]
    resid = pred - y
    n = y.size
    with np.errstate(over="ignore", invalid="ignore"):
        loss = float(np.mean(resid * resid))
    delta = (2.0 / n) * resid[:, None]  # dC/dz at the identity output
    for l in range(len(weights) - 1, -1, -1):
        np.matmul(delta.T, acts[l], out=grads_w[l])
        np.sum(delta, axis=0, out=grads_b[l])
        if l > 0:
            delta = (delta @ weights[l]) * (acts[l] > 0.0)
    return loss


def loss_and_gradients(
    weights: list[np.ndarray],
    biases: list[np.ndarray],
    x: np.ndarray,
    y: np.ndarray,
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Mean-squared-error loss and its gradients for every weight and bias."""
    acts = forward(weights, biases, x)
    grads_w = [np.empty_like(w) for w in weights]
    grads_b = [np.empty_like(b) for b in biases]
    loss = _backward(weights, acts, y, grads_w, grads_b)
    return loss, grads_w, grads_b


def _mse(weights, biases, x, y) -> float:
    pred = forward(weights, biases, x)[-1][:, 0]
    resid = pred - y
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.mean(resid * resid))


class _FlatAdam:
    """ADAM over the flat parameter vector: one fused update per step."""

    def __init__(self, params: AdamParams, size: int):
        self.p = params
        self.t = 0
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self._step_buf = np.empty(size)
        self._denom_buf = np.empty(size)

    def step(self, theta: np.ndarray, grad: np.ndarray) -> None:
        p = self.p
        self.t += 1
        self.m *= p.beta1
        self.m += (1.0 - p.beta1) * grad
        self.v *= p.beta2
        self.v += (1.0 - p.beta2) * grad * grad
        np.divide(self.m, 1.0 - p.beta1**self.t, out=self._step_buf)
        np.divide(self.v, 1.0 - p.beta2**self.t, out=self._denom_buf)
        np.sqrt(self._denom_buf, out=self._denom_buf)
        self._denom_buf += p.epsilon
        self._step_buf /= self._denom_buf
        theta -= p.learning_rate * self._step_buf


def fit_fnn(
    data: SupervisedDataSet,
    cfg: FitConfig,
    epochs_override: int | None = None,
) -> FnnModel:
    """Train the network on one supervised dataset.

    With `epochs_override` (epoch-count reuse at re-estimation points) early
    stopping and the validation split are disabled and training runs exactly
    that many epochs on all rows. Below 10 rows the validation split
    degenerates, so the same fixed-epoch path is taken with max_epochs.
    """
    n = data.n_rows
    if n == 0:
        raise FitError("cannot fit FNN on an empty dataset")

    order = np.argsort(data.dates, kind="stable")
    feats = data.features[order]
    labels = data.labels[order]

    if epochs_override is not None:
        fixed_epochs: int | None = int(epochs_override)
    elif n < MIN_ROWS_FOR_VALIDATION:
        fixed_epochs = cfg.max_epochs
    else:
        fixed_epochs = None

    if fixed_epochs is None:
        n_val = max(1, int(np.floor(cfg.validation_fraction * n)))
        x_train, y_train = feats[:-n_val], labels[:-n_val]
        x_val, y_val = feats[-n_val:], labels[-n_val:]
    else:
        x_train, y_train = feats, labels
        x_val = y_val = None

    mean = x_train.mean(axis=0)
    std = x_train.std(axis=0)
    std = np.where(std > 0.0, std, 1.0)
    x_train = (x_train - mean) / std
    if x_val is not None:
        x_val = (x_val - mean) / std

    rng = np.random.default_rng(cfg.seed)
    shapes = _layer_shapes(feats.shape[1])
    theta, weights, biases = _init_flat(feats.shape[1], rng)
    grad = np.zeros_like(theta)
    grads_w, grads_b = _views(grad, shapes)
    adam = _FlatAdam(cfg.adam, theta.size)

    n_train = len(y_train)
    best_val = np.inf
    best_epoch = 0
    best_theta: np.ndarray | None = None
    total_epochs = fixed_epochs if fixed_epochs is not None else cfg.max_epochs

    for epoch in range(1, total_epochs + 1):
        perm = rng.permutation(n_train)
        for start in range(0, n_train, cfg.batch_size):
            batch = perm[start : start + cfg.batch_size]
            acts = forward(weights, biases, x_train[batch])
            loss = _backward(weights, acts, y_train[batch], grads_w, grads_b)
            if not np.isfinite(loss):
                raise FitError(f"FNN training diverged (non-finite loss, seed={cfg.seed})")
            adam.step(theta, grad)

        if fixed_epochs is None:
            val = _mse(weights, biases, x_val, y_val)
            if not np.isfinite(val):
                raise FitError(f"FNN validation diverged (non-finite loss, seed={cfg.seed})")
            if val < best_val:
                best_val = val
                best_epoch = epoch
                best_theta = theta.copy()
            elif epoch - best_epoch >= cfg.patience:
                break

    if fixed_epochs is None and best_theta is not None:
        theta[:] = best_theta
        trained_epochs = best_epoch
    else:
        trained_epochs = total_epochs

    return FnnModel(
        layer_weights=[w.copy() for w in weights],
        layer_biases=[b.copy() for b in biases],
        norm_mean=mean,
        norm_std=std,
        trained_epochs=trained_epochs,
    )


def predict_fnn(model: FnnModel, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float).ravel()
    if x.size != model.norm_mean.size:
        raise ValidationError(f"expected {model.norm_mean.size} features, got {x.size}")
    z = (x - model.norm_mean) / model.norm_std
    out = forward(model.layer_weights, model.layer_biases, z[None, :])[-1]
    return float(out[0, 0])
