"""Input validation helpers shared by the estimators."""

from __future__ import annotations

import numpy as np


class NotFittedError(RuntimeError):
    """predict() was called on an estimator that has not been fitted."""


def check_feature_matrix(X, n_features: int | None = None) -> np.ndarray:
    """Coerce X to a 2-D float64 array with finite entries."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D feature matrix, got ndim={X.ndim}")
    if X.shape[0] == 0:
        raise ValueError("feature matrix is empty")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix contains non-finite entries")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(
            f"expected {n_features} features, got {X.shape[1]}"
        )
    return X


def check_labels(y, n_samples: int | None = None, min_value: float | None = None) -> np.ndarray:
    """Coerce y to a 1-D float64 array with finite entries."""
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size == 0:
        raise ValueError("label vector is empty")
    if not np.all(np.isfinite(y)):
        raise ValueError("label vector contains non-finite entries")
    if n_samples is not None and y.shape[0] != n_samples:
        raise ValueError(f"expected {n_samples} labels, got {y.shape[0]}")
    if min_value is not None and np.any(y < min_value):
        raise ValueError(f"labels must be >= {min_value}")
    return y


def check_fitted(estimator, attribute: str) -> None:
    if getattr(estimator, attribute, None) is None:
        raise NotFittedError(
            f"{type(estimator).__name__} must be fitted before calling predict"
        )
