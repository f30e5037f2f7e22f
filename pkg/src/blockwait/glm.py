"""Poisson regression baseline: expected confirmation blocks as a
log-linear function of gas price and gas limit.

Fitted by iteratively reweighted least squares with step halving, so the
log-likelihood never decreases across iterations. Gas limit stands in
for gas used, which is unknown until after confirmation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .validation import check_feature_matrix, check_fitted, check_labels

_MAX_HALVINGS = 30


class GlmConvergenceError(RuntimeError):
    """IRLS did not converge; carries the last iterate in .coefficients."""

    def __init__(self, message: str, coefficients: np.ndarray):
        super().__init__(message)
        self.coefficients = coefficients


class GlmSingularError(RuntimeError):
    """The weighted least-squares system is singular (degenerate design)."""


def _log_likelihood(y: np.ndarray, eta: np.ndarray) -> float:
    mu = np.exp(eta)
    return float(np.sum(y * eta - mu) - sum(math.lgamma(v + 1.0) for v in y))


class PoissonGlmRegressor(BaseEstimator, RegressorMixin):
    """Poisson GLM with log link over standardized (gas price, gas limit).

    feature_indices selects which input columns feed the model; the
    default (0, 1) matches the package-wide feature layout. Labels are
    rounded to the nearest integer count before fitting. Zero-variance
    columns are excluded from the solve and get a zero slope.
    """

    def __init__(
        self,
        feature_indices: tuple[int, ...] = (0, 1),
        max_iterations: int = 100,
        tolerance: float = 1e-8,
    ):
        self.feature_indices = feature_indices
        self.max_iterations = max_iterations
        self.tolerance = tolerance

    def fit(self, X, y) -> "PoissonGlmRegressor":
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")
        X = check_feature_matrix(X)
        y = check_labels(y, n_samples=X.shape[0])
        idx = tuple(self.feature_indices)
        if max(idx) >= X.shape[1]:
            raise ValueError(
                f"feature_indices {idx} out of range for {X.shape[1]} columns"
            )
        if X.shape[0] < 3:
            raise ValueError("need at least 3 examples to fit the GLM")
        counts = np.rint(y)
        if np.any(counts < 0):
            raise ValueError("labels must be non-negative counts")

        raw = X[:, idx]
        mean = raw.mean(axis=0)
        scale = raw.std(axis=0)
        active = scale > 0.0
        scale_safe = np.where(active, scale, 1.0)
        Z = (raw - mean) / scale_safe
        Z[:, ~active] = 0.0

        design = np.column_stack([np.ones(X.shape[0]), Z])
        solve_cols = np.concatenate(([True], active))

        beta = np.zeros(design.shape[1])
        beta[0] = math.log(max(counts.mean(), 1e-12))
        ll = _log_likelihood(counts, design @ beta)
        ll_history = [ll]
        converged = False
        iterations = 0

        for iterations in range(1, self.max_iterations + 1):
            eta = design @ beta
            mu = np.clip(np.exp(eta), 1e-12, None)
            z = eta + (counts - mu) / mu
            A = design[:, solve_cols]
            wa = A * mu[:, None]
            try:
                step_target = np.linalg.solve(wa.T @ A, wa.T @ z)
            except np.linalg.LinAlgError as exc:
                raise GlmSingularError(
                    f"singular IRLS system at iteration {iterations}: {exc}"
                ) from exc

            # Step halving keeps the log-likelihood non-decreasing.
            new_beta = beta.copy()
            direction = step_target - beta[solve_cols]
            frac = 1.0
            for _ in range(_MAX_HALVINGS + 1):
                new_beta[solve_cols] = beta[solve_cols] + frac * direction
                new_ll = _log_likelihood(counts, design @ new_beta)
                if math.isfinite(new_ll) and new_ll >= ll - 1e-10:
                    break
                frac *= 0.5
            else:
                raise GlmConvergenceError(
                    f"step halving failed at iteration {iterations}",
                    coefficients=beta,
                )

            delta = np.max(np.abs(new_beta - beta))
            beta = new_beta
            ll = new_ll
            ll_history.append(ll)
            if delta < self.tolerance:
                converged = True
                break

        if not converged:
            raise GlmConvergenceError(
                f"IRLS did not converge within {self.max_iterations} iterations "
                "(degenerate design matrix?)",
                coefficients=beta,
            )

        self.coef_ = beta
        self.feature_mean_ = mean
        self.feature_scale_ = scale_safe
        self.active_ = active
        self.n_iter_ = iterations
        self.converged_ = True
        self.ll_history_ = ll_history
        self.n_features_in_ = X.shape[1]
        return self

    def linear_predictor(self, X) -> np.ndarray:
        check_fitted(self, "coef_")
        X = check_feature_matrix(X)
        raw = X[:, tuple(self.feature_indices)]
        Z = (raw - self.feature_mean_) / self.feature_scale_
        Z[:, ~self.active_] = 0.0
        return self.coef_[0] + Z @ self.coef_[1:]

    def predict(self, X) -> np.ndarray:
        return np.maximum(1.0, np.exp(self.linear_predictor(X)))

    def score_residuals(self, X, y) -> np.ndarray:
        """Per-coefficient score sum_i (y_i - mu_i) x_ij at the fitted optimum."""
        check_fitted(self, "coef_")
        X = check_feature_matrix(X)
        y = check_labels(y, n_samples=X.shape[0])
        counts = np.rint(y)
        raw = X[:, tuple(self.feature_indices)]
        Z = (raw - self.feature_mean_) / self.feature_scale_
        Z[:, ~self.active_] = 0.0
        design = np.column_stack([np.ones(X.shape[0]), Z])
        mu = np.exp(design @ self.coef_)
        return design.T @ (counts - mu)


def glm_to_payload(est: PoissonGlmRegressor) -> dict:
    check_fitted(est, "coef_")
    return {
        "params": {
            **est.get_params(),
            "feature_indices": list(est.feature_indices),
        },
        "coef": est.coef_.tolist(),
        "feature_mean": est.feature_mean_.tolist(),
        "feature_scale": est.feature_scale_.tolist(),
        "active": [bool(a) for a in est.active_],
        "n_iter": est.n_iter_,
        "n_features_in": est.n_features_in_,
    }


def glm_from_payload(payload: dict) -> PoissonGlmRegressor:
    params = dict(payload["params"])
    params["feature_indices"] = tuple(params["feature_indices"])
    est = PoissonGlmRegressor(**params)
    est.coef_ = np.asarray(payload["coef"], dtype=np.float64)
    est.feature_mean_ = np.asarray(payload["feature_mean"], dtype=np.float64)
    est.feature_scale_ = np.asarray(payload["feature_scale"], dtype=np.float64)
    est.active_ = np.asarray(payload["active"], dtype=bool)
    est.n_iter_ = int(payload["n_iter"])
    est.converged_ = True
    est.ll_history_ = []
    est.n_features_in_ = int(payload["n_features_in"])
    return est
