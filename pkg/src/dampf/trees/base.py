"""Strategy interface shared by the three tree learners."""

from __future__ import annotations

import numpy as np

from ..losses import GradHess, compute_grad_hess


def presort(X: np.ndarray, rows: np.ndarray | None = None) -> np.ndarray:
    """Row ids sorted ascending per feature, shape (features, rows).

    Stable, so equal values keep row-id order.
    """
    if rows is None:
        rows = np.arange(X.shape[0])
    rows = np.asarray(rows, np.int64)
    order = np.argsort(X[rows], axis=0, kind="stable")
    return np.ascontiguousarray(rows[order].T)


class Identity:
    kind = "identity"

    def transform(self, X):
        return np.asarray(X, dtype=np.float64)

    def to_dict(self) -> dict:
        return {"kind": self.kind}

    @classmethod
    def from_dict(cls, d):
        return cls()


class TreeLearner:
    """One boosting stage's tree builder.

    ``boost_fit`` calls ``prepare`` once, then per round ``gradients`` and
    ``grow``. ``preprocessor`` returns the feature transform a fitted
    ensemble must apply before evaluating its trees.
    """

    variant = ""

    def prepare(self, X, y, cfg, categorical_slots, rng) -> np.ndarray:
        self.X = np.ascontiguousarray(X, dtype=np.float64)
        return self.X

    def gradients(self, cfg, y, pred) -> GradHess:
        return compute_grad_hess(cfg.loss, y, pred)

    def grow(self, gh: GradHess, in_sample: np.ndarray, feat_ok: np.ndarray, cfg, rng):
        raise NotImplementedError

    def preprocessor(self):
        return Identity()
