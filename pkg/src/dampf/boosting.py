"""Additive gradient boosting over pluggable tree learners."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import SupervisedDataset
from .errors import EmptyDataset, FeatureCountMismatch, LearnerFailure, ModelFormatError
from .losses import LOSSES, GradHess, compute_grad_hess
from .trees.base import Identity, TreeLearner
from .trees.exact import LevelwiseExact
from .trees.histogram import BundleMap, LeafwiseHistogram
from .trees.ordered import ObliviousOrdered, OrderedEncoding
from .trees.tree import tree_from_dict

LEARNERS = {
    "levelwise_exact": LevelwiseExact,
    "leafwise_histogram": LeafwiseHistogram,
    "oblivious_ordered": ObliviousOrdered,
}
_PREPROCESSORS = {c.kind: c for c in (Identity, BundleMap, OrderedEncoding)}


@dataclass(frozen=True)
class BoostConfig:
    learning_rate: float = 0.01
    n_trees: int = 300
    loss: str = "squared"
    lam: float = 1.0
    gamma: float = 0.0
    max_depth: int = 10
    subsample: float = 0.8
    colsample_bytree: float = 0.9
    seed: int = 42
    # leaf-wise histogram learner
    max_bins: int = 255
    max_leaves: int = 31
    goss_top: float | None = None
    goss_other: float | None = None
    bundle: bool = True
    # ordered learner
    ordered_prior: float = 0.5
    prior_strength: float = 1.0
    ordered_schedule: str = "exponential"

    def __post_init__(self):
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.n_trees < 0 or self.max_depth < 0:
            raise ValueError("n_trees and max_depth must be >= 0")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.lam < 0 or self.gamma < 0:
            raise ValueError("lam and gamma must be >= 0")
        for name in ("subsample", "colsample_bytree"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1]")
        if (self.goss_top is None) != (self.goss_other is None):
            raise ValueError("goss_top and goss_other must be set together")

    def with_overrides(self, **kw) -> "BoostConfig":
        return replace(self, **kw)


# Reference hyperparameters, one preset per variant.
PRESETS = {
    "levelwise_exact": BoostConfig(loss="squared", colsample_bytree=0.9, learning_rate=0.01,
                                   max_depth=10, n_trees=300, subsample=0.8),
    "leafwise_histogram": BoostConfig(loss="squared", colsample_bytree=0.9, learning_rate=0.01,
                                      max_depth=10, n_trees=300, subsample=0.8),
    "oblivious_ordered": BoostConfig(loss="rmse", colsample_bytree=1.0, learning_rate=0.01,
                                     max_depth=10, n_trees=500, subsample=0.8, seed=42),
}


def make_learner(variant: str) -> TreeLearner:
    try:
        return LEARNERS[variant]()
    except KeyError:
        raise ValueError(f"unknown variant {variant!r}; expected one of {sorted(LEARNERS)}") from None


@dataclass
class Ensemble:
    """``prediction = base_score + learning_rate * sum(tree(x))`` over the
    stored trees, after ``preprocess`` maps raw features to the trees' space."""

    base_score: float
    learning_rate: float
    trees: list
    variant: str
    n_features: int
    preprocess: object = field(default_factory=Identity)
    # the loop's own running predictions on the training rows
    train_predictions: np.ndarray | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {"base_score": self.base_score, "learning_rate": self.learning_rate,
                "variant": self.variant, "n_features": self.n_features,
                "preprocess": self.preprocess.to_dict(),
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "Ensemble":
        try:
            pre = _PREPROCESSORS[d["preprocess"]["kind"]].from_dict(d["preprocess"])
        except KeyError:
            raise ModelFormatError("unknown preprocess record") from None
        return cls(d["base_score"], d["learning_rate"], [tree_from_dict(t) for t in d["trees"]],
                   d["variant"], d["n_features"], pre)


def _fold(base: float, alpha: float, trees, Xt: np.ndarray) -> np.ndarray:
    pred = np.full(Xt.shape[0], base)
    for tree in trees:
        pred = pred + alpha * tree.predict(Xt)
    return pred


def ensemble_predict(model: Ensemble, X) -> np.ndarray:
    X = np.asarray(X, np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise FeatureCountMismatch(
            f"model expects {model.n_features} features, got {X.shape[-1] if X.ndim else 0}")
    return _fold(model.base_score, model.learning_rate, model.trees, model.preprocess.transform(X))


def _xy(train):
    if isinstance(train, SupervisedDataset):
        return train.X, train.y, train.categorical_slots
    X, y = train[:2]
    cats = tuple(train[2]) if len(train) > 2 else ()
    return X, y, cats


def boost_fit(train, learner: TreeLearner | str, cfg: BoostConfig) -> Ensemble:
    """Fit ``cfg.n_trees`` rounds starting from ``mean(y)``.

    ``train`` is a SupervisedDataset or an ``(X, y[, categorical_slots])``
    tuple. Each round draws a row subsample (without replacement) and a
    column subsample from one seeded generator, so a fixed seed reproduces
    the ensemble exactly.
    """
    if isinstance(learner, str):
        learner = make_learner(learner)
    X, y, cats = _xy(train)
    X = np.asarray(X, np.float64)
    y = np.asarray(y, np.float64)
    n = len(y)
    if n == 0:
        raise EmptyDataset("cannot boost on an empty training set")
    rng = np.random.default_rng(cfg.seed)
    try:
        Xt = learner.prepare(X, y, cfg, cats, rng)
    except (ValueError, FloatingPointError) as exc:
        raise LearnerFailure(str(exc)) from exc
    F = Xt.shape[1]
    n_rows = max(1, int(cfg.subsample * n))
    n_cols = max(1, int(cfg.colsample_bytree * F))
    base = float(np.mean(y))
    pred = np.full(n, base)
    trees = []
    for _ in range(cfg.n_trees):
        gh = learner.gradients(cfg, y, pred)
        in_sample = np.ones(n, np.bool_)
        if n_rows < n:
            in_sample[:] = False
            in_sample[rng.choice(n, n_rows, replace=False)] = True
        feat_ok = np.ones(F, np.bool_)
        if n_cols < F:
            feat_ok[:] = False
            feat_ok[rng.choice(F, n_cols, replace=False)] = True
        tree = learner.grow(gh, in_sample, feat_ok, cfg, rng)
        pred = pred + cfg.learning_rate * tree.predict(Xt)
        trees.append(tree)
    return Ensemble(base, cfg.learning_rate, trees, learner.variant, X.shape[1],
                    learner.preprocessor(), pred)


__all__ = ["BoostConfig", "Ensemble", "GradHess", "LEARNERS", "PRESETS", "boost_fit",
           "compute_grad_hess", "ensemble_predict", "make_learner"]
