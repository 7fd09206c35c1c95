"""Regression losses and their first/second derivatives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch

LOSSES = ("squared", "absolute", "rmse")

# |y - yhat| has zero curvature; the Newton step degenerates to a plain
# gradient step with this floor.
HESS_FLOOR = 1.0


@dataclass(frozen=True)
class GradHess:
    g: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        if len(self.g) != len(self.h):
            raise LengthMismatch("gradient and hessian lengths differ")

    def __len__(self) -> int:
        return len(self.g)

    @property
    def residuals(self) -> np.ndarray:
        """Pseudo-residuals, the negative gradient."""
        return -self.g

    def weighted(self, rows: np.ndarray, weights: np.ndarray) -> "GradHess":
        """Scale the given rows' g and h by ``weights``; other rows zeroed."""
        g = np.zeros_like(self.g)
        h = np.zeros_like(self.h)
        g[rows] = self.g[rows] * weights
        h[rows] = self.h[rows] * weights
        return GradHess(g, h)


def compute_grad_hess(loss: str, y, y_hat) -> GradHess:
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise LengthMismatch(f"targets {y.shape} vs predictions {y_hat.shape}")
    if loss in ("squared", "rmse"):
        # L = (y - yhat)^2 / 2; "rmse" objectives share its gradient direction
        return GradHess(y_hat - y, np.ones_like(y))
    if loss == "absolute":
        return GradHess(np.sign(y_hat - y), np.full_like(y, HESS_FLOOR))
    raise ValueError(f"unknown loss {loss!r}; expected one of {LOSSES}")


def loss_value(loss: str, y, y_hat) -> float:
    r = np.asarray(y, float) - np.asarray(y_hat, float)
    if loss in ("squared", "rmse"):
        return float(0.5 * np.mean(r * r))
    if loss == "absolute":
        return float(np.mean(np.abs(r)))
    raise ValueError(f"unknown loss {loss!r}")
