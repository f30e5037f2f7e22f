"""Multilayer perceptron regressor trained by mini-batch backpropagation.

Hidden layers use ReLU, the output layer is affine with identity
activation. The objective is squared error with an L2 penalty on the
weight matrices (biases are not penalized):

    loss = 1/2 * ||y_hat - y||^2 + alpha/2 * ||W||^2

Training normalizes the data term by the batch size; the penalty is
added once per batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .validation import check_feature_matrix, check_fitted, check_labels

_PATIENCE = 5  # consecutive low-improvement epochs before early stop
_VALIDATION_FRACTION = 0.1


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during training; lower the learning rate."""


@dataclass(frozen=True)
class MlpConfig:
    hidden_layer_sizes: tuple[int, ...] = (64,)
    l2_alpha: float = 1e-4
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 200
    seed: int = 0
    early_stop_tolerance: float = 1e-4

    def __post_init__(self) -> None:
        sizes = tuple(int(h) for h in self.hidden_layer_sizes)
        object.__setattr__(self, "hidden_layer_sizes", sizes)
        if len(sizes) < 1:
            raise ValueError("at least one hidden layer is required")
        if any(h < 1 for h in sizes):
            raise ValueError(f"hidden layer sizes must be positive, got {sizes}")
        if self.l2_alpha <= 0:
            raise ValueError(f"l2_alpha must be > 0, got {self.l2_alpha}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.early_stop_tolerance < 0:
            raise ValueError("early_stop_tolerance must be >= 0")

    def label(self) -> str:
        depth = len(self.hidden_layer_sizes)
        noun = "hidden layer" if depth == 1 else "hidden layers"
        return f"{depth} {noun}"


def mlp_variants() -> list[MlpConfig]:
    """Depth sweep: one, two and three hidden layers of width 64."""
    return [
        replace(MlpConfig(), hidden_layer_sizes=(64,) * depth)
        for depth in (1, 2, 3)
    ]


@dataclass
class MlpWeights:
    """Per-layer weight matrices (fan_in, fan_out) and bias vectors."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return tuple(w.shape[0] for w in self.weights) + (self.weights[-1].shape[1],)

    def copy(self) -> "MlpWeights":
        return MlpWeights(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    def l2_norm_squared(self) -> float:
        return float(sum(np.sum(w * w) for w in self.weights))


def init_weights(
    layer_sizes: Sequence[int], rng: np.random.Generator
) -> MlpWeights:
    """Glorot-uniform weights, zero biases.

    Each layer draws from U(-b, b) with b = sqrt(6 / (fan_in + fan_out)).
    """
    weights = []
    biases = []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpWeights(weights=weights, biases=biases)


def init_mlp(config: MlpConfig, n_features: int = 7) -> MlpWeights:
    rng = np.random.default_rng(config.seed)
    sizes = (n_features, *config.hidden_layer_sizes, 1)
    return init_weights(sizes, rng)


def _forward_cached(weights: MlpWeights, X: np.ndarray):
    """Forward pass keeping pre-activations for backprop.

    Returns (y_hat, activations, pre_activations): activations[0] is the
    input, activations[i] the ReLU output of hidden layer i.
    """
    activations = [X]
    pre_activations = []
    a = X
    last = len(weights.weights) - 1
    for i, (W, b) in enumerate(zip(weights.weights, weights.biases)):
        z = a @ W + b
        pre_activations.append(z)
        a = z if i == last else np.maximum(0.0, z)
        activations.append(a)
    return a[:, 0], activations, pre_activations


def forward(weights: MlpWeights, features) -> np.ndarray:
    """Network output for one feature vector or a feature matrix."""
    X = check_feature_matrix(features, n_features=weights.weights[0].shape[0])
    y_hat, _, _ = _forward_cached(weights, X)
    return y_hat


def loss_value(y_hat, y, weights: MlpWeights, l2_alpha: float) -> float:
    """Squared-error-plus-penalty objective over a vector (or scalar) pair."""
    y_hat = np.atleast_1d(np.asarray(y_hat, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    data = 0.5 * float(np.sum((y_hat - y) ** 2))
    return data + 0.5 * l2_alpha * weights.l2_norm_squared()


def loss_and_gradients(
    weights: MlpWeights, X, y, l2_alpha: float, normalize: bool = False
) -> tuple[float, MlpWeights]:
    """Loss and its exact gradients with respect to every weight and bias.

    With normalize=True the data term (and its gradients) are divided by
    the number of rows, which is the per-batch objective used in training.
    """
    X = check_feature_matrix(X, n_features=weights.weights[0].shape[0])
    y = check_labels(y, n_samples=X.shape[0])
    y_hat, activations, pre_activations = _forward_cached(weights, X)
    scale = 1.0 / X.shape[0] if normalize else 1.0

    data = 0.5 * scale * float(np.sum((y_hat - y) ** 2))
    loss = data + 0.5 * l2_alpha * weights.l2_norm_squared()

    grad_w = [np.empty_like(w) for w in weights.weights]
    grad_b = [np.empty_like(b) for b in weights.biases]

    delta = scale * (y_hat - y)[:, None]  # (n, 1) at the output layer
    for layer in range(len(weights.weights) - 1, -1, -1):
        a_prev = activations[layer]
        grad_w[layer] = a_prev.T @ delta + l2_alpha * weights.weights[layer]
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ weights.weights[layer].T) * (
                pre_activations[layer - 1] > 0.0
            )
    return loss, MlpWeights(weights=grad_w, biases=grad_b)


def _epoch_loss(weights: MlpWeights, X, y, l2_alpha: float) -> float:
    y_hat, _, _ = _forward_cached(weights, X)
    return 0.5 * float(np.mean((y_hat - y) ** 2)) + 0.5 * l2_alpha * weights.l2_norm_squared()


def train_weights(
    X: np.ndarray, y: np.ndarray, config: MlpConfig
) -> tuple[MlpWeights, list[float], int]:
    """Mini-batch SGD with backpropagation on (already scaled) inputs.

    Returns (weights, per-epoch training-loss history, epochs run). A
    held-out slice of the training data is monitored; training stops
    early once its loss has improved by less than early_stop_tolerance
    for 5 consecutive epochs.
    """
    n = X.shape[0]
    rng = np.random.default_rng(config.seed)
    weights = init_weights((X.shape[1], *config.hidden_layer_sizes, 1), rng)

    n_val = int(n * _VALIDATION_FRACTION) if n >= 10 else 0
    order = rng.permutation(n)
    val_idx, train_idx = order[:n_val], order[n_val:]
    X_train, y_train = X[train_idx], y[train_idx]
    X_val, y_val = X[val_idx], y[val_idx]

    history: list[float] = []
    best_monitor = math.inf
    stall = 0
    epochs_run = 0
    n_train = X_train.shape[0]

    for epoch in range(config.max_epochs):
        epochs_run = epoch + 1
        perm = rng.permutation(n_train)
        for start in range(0, n_train, config.batch_size):
            batch = perm[start : start + config.batch_size]
            loss, grads = loss_and_gradients(
                weights, X_train[batch], y_train[batch], config.l2_alpha, normalize=True
            )
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch + 1}; learning_rate "
                    f"{config.learning_rate} is too high for this data"
                )
            for W, gW in zip(weights.weights, grads.weights):
                W -= config.learning_rate * gW
            for b, gb in zip(weights.biases, grads.biases):
                b -= config.learning_rate * gb

        history.append(_epoch_loss(weights, X_train, y_train, config.l2_alpha))
        if not math.isfinite(history[-1]):
            raise TrainingDivergedError(
                f"non-finite epoch loss at epoch {epoch + 1}"
            )

        monitor = (
            _epoch_loss(weights, X_val, y_val, config.l2_alpha)
            if n_val
            else history[-1]
        )
        if best_monitor - monitor < config.early_stop_tolerance:
            stall += 1
            if stall >= _PATIENCE:
                break
        else:
            stall = 0
        best_monitor = min(best_monitor, monitor)

    return weights, history, epochs_run


class MlpRegressor(BaseEstimator, RegressorMixin):
    """MLP regressor over standardized inputs, clamped to >= 1 block.

    Feature means and scales are estimated on the training split and
    stored on the estimator so that serialized snapshots reproduce
    predictions exactly.
    """

    def __init__(
        self,
        hidden_layer_sizes: tuple[int, ...] = (64,),
        l2_alpha: float = 1e-4,
        learning_rate: float = 1e-3,
        batch_size: int = 32,
        max_epochs: int = 200,
        seed: int = 0,
        early_stop_tolerance: float = 1e-4,
    ):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.l2_alpha = l2_alpha
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.seed = seed
        self.early_stop_tolerance = early_stop_tolerance

    @classmethod
    def from_config(cls, config: MlpConfig) -> "MlpRegressor":
        return cls(
            hidden_layer_sizes=config.hidden_layer_sizes,
            l2_alpha=config.l2_alpha,
            learning_rate=config.learning_rate,
            batch_size=config.batch_size,
            max_epochs=config.max_epochs,
            seed=config.seed,
            early_stop_tolerance=config.early_stop_tolerance,
        )

    @property
    def config(self) -> MlpConfig:
        return MlpConfig(
            hidden_layer_sizes=tuple(self.hidden_layer_sizes),
            l2_alpha=self.l2_alpha,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            seed=self.seed,
            early_stop_tolerance=self.early_stop_tolerance,
        )

    def fit(self, X, y) -> "MlpRegressor":
        config = self.config
        X = check_feature_matrix(X)
        y = check_labels(y, n_samples=X.shape[0])
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0.0] = 1.0
        weights, history, epochs = train_weights((X - mean) / scale, y, config)
        self.feature_mean_ = mean
        self.feature_scale_ = scale
        self.weights_ = weights
        self.loss_history_ = history
        self.n_iter_ = epochs
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X) -> np.ndarray:
        check_fitted(self, "weights_")
        X = check_feature_matrix(X, n_features=self.n_features_in_)
        raw = forward(self.weights_, (X - self.feature_mean_) / self.feature_scale_)
        return np.maximum(1.0, raw)


def mlp_to_payload(est: MlpRegressor) -> dict:
    check_fitted(est, "weights_")
    return {
        "params": {
            **est.get_params(),
            "hidden_layer_sizes": list(est.config.hidden_layer_sizes),
        },
        "feature_mean": est.feature_mean_.tolist(),
        "feature_scale": est.feature_scale_.tolist(),
        "weights": [w.tolist() for w in est.weights_.weights],
        "biases": [b.tolist() for b in est.weights_.biases],
        "n_iter": est.n_iter_,
    }


def mlp_from_payload(payload: dict) -> MlpRegressor:
    params = dict(payload["params"])
    params["hidden_layer_sizes"] = tuple(params["hidden_layer_sizes"])
    est = MlpRegressor(**params)
    est.feature_mean_ = np.asarray(payload["feature_mean"], dtype=np.float64)
    est.feature_scale_ = np.asarray(payload["feature_scale"], dtype=np.float64)
    est.weights_ = MlpWeights(
        weights=[np.asarray(w, dtype=np.float64) for w in payload["weights"]],
        biases=[np.asarray(b, dtype=np.float64) for b in payload["biases"]],
    )
    est.loss_history_ = []
    est.n_iter_ = int(payload["n_iter"])
    est.n_features_in_ = est.weights_.weights[0].shape[0]
    return est
