"""Exact greedy split enumeration and level-wise (breadth-first) growth."""

from __future__ import annotations

import numpy as np

from ..losses import GradHess
from ._kernels import grow_levelwise
from .base import TreeLearner, presort
from .tree import DecisionTree, SplitCandidate


def _mask(n: int, rows) -> np.ndarray:
    if rows is None:
        return np.ones(n, np.bool_)
    m = np.zeros(n, np.bool_)
    m[np.asarray(rows, np.int64)] = True
    return m


def exact_best_split(X, grads: GradHess, lam: float = 0.0, gamma: float = 0.0,
                     rows=None) -> SplitCandidate | None:
    """Best single split over every midpoint between consecutive distinct
    values of every feature; ``None`` when no split has positive net gain."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    in_sample = _mask(X.shape[0], rows)
    order = presort(X, np.flatnonzero(in_sample))
    feat_ok = np.ones(X.shape[1], np.bool_)
    f, t, _, _, _, gain = grow_levelwise(X, grads.g, grads.h, in_sample, order, feat_ok,
                                         1, float(lam), float(gamma))
    if f[0] < 0:
        return None
    go_left = in_sample & (X[:, f[0]] <= t[0])
    go_right = in_sample & ~go_left
    return SplitCandidate(int(f[0]), float(t[0]), float(gain[0]),
                          float(grads.g[go_left].sum()), float(grads.g[go_right].sum()),
                          float(grads.h[go_left].sum()), float(grads.h[go_right].sum()))


def build_tree_levelwise(X, grads: GradHess, max_depth: int, lam: float = 1.0,
                         gamma: float = 0.0, rows=None, feat_ok=None,
                         order: np.ndarray | None = None) -> DecisionTree:
    X = np.ascontiguousarray(X, dtype=np.float64)
    in_sample = _mask(X.shape[0], rows)
    if order is None:
        order = presort(X, np.flatnonzero(in_sample))
    if feat_ok is None:
        feat_ok = np.ones(X.shape[1], np.bool_)
    f, t, l, r, v, gain = grow_levelwise(X, grads.g, grads.h, in_sample, order,
                                         np.asarray(feat_ok, np.bool_), int(max_depth),
                                         float(lam), float(gamma))
    return DecisionTree(f, t, l, r, v, gain)


class LevelwiseExact(TreeLearner):
    variant = "levelwise_exact"

    def prepare(self, X, y, cfg, categorical_slots, rng):
        super().prepare(X, y, cfg, categorical_slots, rng)
        # presorted once; subsampled rows are masked inside the kernel
        self.order = presort(self.X)
        return self.X

    def grow(self, gh, in_sample, feat_ok, cfg, rng):
        return build_tree_levelwise(self.X, gh, cfg.max_depth, cfg.lam, cfg.gamma,
                                    rows=np.flatnonzero(in_sample), feat_ok=feat_ok,
                                    order=self.order)
