"""HAR-style linear forecaster estimated by OLS on the normal equations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import SupervisedDataSet
from ..errors import FitError, ValidationError

RIDGE_FALLBACK = 1e-8


@dataclass
class HarModel:
    """Intercept followed by one weight per feature column."""

    coefficients: np.ndarray

    def predict(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.coefficients.size - 1:
            raise ValidationError(
                f"expected {self.coefficients.size - 1} features, got {x.size}"
            )
        return float(self.coefficients[0] + self.coefficients[1:] @ x)

    def to_snapshot(self) -> dict:
        return {"kind": "har", "coefficients": self.coefficients.tolist()}

    @classmethod
    def from_snapshot(cls, snap: dict) -> "HarModel":
        return cls(coefficients=np.asarray(snap["coefficients"], dtype=float))


def fit_har(data: SupervisedDataSet) -> HarModel:
    """Least-squares fit via Cholesky on X'X, with a tiny ridge fallback.

    Rank deficiency that survives the fallback raises FitError; the harness
    records and skips the model at that origin.
    """
    n, d = data.features.shape
    if n < d + 1:
        raise FitError(f"need at least {d + 1} rows for {d} features, got {n}")
    design = np.column_stack([np.ones(n), data.features])
    gram = design.T @ design
    rhs = design.T @ data.labels

    coef = _solve_pd(gram, rhs)
    if coef is None:
        coef = _solve_pd(gram + RIDGE_FALLBACK * np.eye(d + 1), rhs)
    if coef is None or not np.isfinite(coef).all():
        raise FitError("normal equations singular even after ridge fallback")
    return HarModel(coefficients=coef)


def _solve_pd(gram: np.ndarray, rhs: np.ndarray) -> np.ndarray | None:
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        return None
    y = np.linalg.solve(chol, rhs)
    return np.linalg.solve(chol.T, y)
