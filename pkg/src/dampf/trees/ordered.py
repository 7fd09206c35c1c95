"""Ordered boosting: leak-free target encoding, prefix-model residuals and
oblivious (symmetric) trees."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ScheduleEmpty
from ..losses import GradHess, compute_grad_hess
from ._kernels import grow_oblivious
from .base import TreeLearner, presort
from .tree import ObliviousTree


@dataclass(frozen=True)
class OrderedContext:
    """A fixed permutation of the training rows.

    ``order[p]`` is the row at position ``p``; ``position[i]`` is the
    position of row ``i``. ``schedule`` lists the prefix lengths at which
    prefix models are kept; it must start at 0.
    """

    order: np.ndarray
    prior: float = 0.5
    strength: float = 1.0
    schedule: tuple[int, ...] = (0,)

    @property
    def position(self) -> np.ndarray:
        pos = np.empty_like(self.order)
        pos[self.order] = np.arange(len(self.order))
        return pos

    def prefix_for(self, p: int) -> int:
        """Largest scheduled prefix length not exceeding position ``p``."""
        i = int(np.searchsorted(self.schedule, p, side="right")) - 1
        return self.schedule[i]


def make_schedule(n: int, kind: str = "exponential") -> tuple[int, ...]:
    if kind == "stride1":
        return tuple(range(n))
    if kind != "exponential":
        raise ValueError(f"unknown schedule {kind!r}")
    sched = [0]
    s = 1
    while s < n:
        sched.append(s)
        s *= 2
    return tuple(sched)


def make_context(n: int, rng, prior: float = 0.5, strength: float = 1.0,
                 schedule: str = "exponential") -> OrderedContext:
    rng = np.random.default_rng(rng)
    return OrderedContext(rng.permutation(n), float(prior), float(strength),
                          make_schedule(n, schedule))


def ordered_target_encode(values, y, ctx: OrderedContext) -> np.ndarray:
    """Running smoothed category mean over rows that precede each row in the
    permutation; a row's own target is never read for its encoding."""
    values = np.asarray(values)
    y = np.asarray(y, np.float64)
    a, p = ctx.strength, ctx.prior
    sums: dict = {}
    counts: dict = {}
    out = np.empty(len(values))
    for i in ctx.order:
        c = values[i].item()
        s, k = sums.get(c, 0.0), counts.get(c, 0)
        out[i] = (s + a * p) / (k + a)
        sums[c] = s + y[i]
        counts[c] = k + 1
    return out


def category_table(values, y, prior: float, strength: float) -> dict:
    """Encoding for unseen (test) rows: smoothed mean over all training rows."""
    values = np.asarray(values)
    y = np.asarray(y, np.float64)
    table = {}
    for c in np.unique(values):
        sel = values == c
        table[c.item()] = (float(y[sel].sum()) + strength * prior) / (int(sel.sum()) + strength)
    return table


class OrderedEncoding:
    kind = "ordered_encoding"

    def __init__(self, slots: list[int], tables: list[dict], prior: float):
        self.slots = [int(s) for s in slots]
        self.tables = tables
        self.prior = float(prior)

    def transform(self, X) -> np.ndarray:
        X = np.array(X, dtype=np.float64)
        for slot, table in zip(self.slots, self.tables):
            uniq, inv = np.unique(X[:, slot], return_inverse=True)
            mapped = np.array([table.get(u.item(), self.prior) for u in uniq])
            X[:, slot] = mapped[inv] if len(uniq) else X[:, slot]
        return X

    def to_dict(self) -> dict:
        return {"kind": self.kind, "slots": self.slots, "prior": self.prior,
                "tables": [[[k, v] for k, v in sorted(t.items())] for t in self.tables]}

    @classmethod
    def from_dict(cls, d: dict) -> "OrderedEncoding":
        return cls(d["slots"], [{k: v for k, v in t} for t in d["tables"]], d["prior"])


def build_tree_oblivious(X, grads: GradHess, max_depth: int, lam: float = 1.0,
                         gamma: float = 0.0, rows=None, feat_ok=None,
                         order: np.ndarray | None = None) -> ObliviousTree:
    X = np.ascontiguousarray(X, np.float64)
    in_sample = np.zeros(X.shape[0], np.bool_)
    if rows is None:
        in_sample[:] = True
    else:
        in_sample[np.asarray(rows, np.int64)] = True
    if order is None:
        order = presort(X, np.flatnonzero(in_sample))
    if feat_ok is None:
        feat_ok = np.ones(X.shape[1], np.bool_)
    feats, thrs, gains, values = grow_oblivious(X, grads.g, grads.h, in_sample, order,
                                                np.asarray(feat_ok, np.bool_), int(max_depth),
                                                float(lam), float(gamma))
    return ObliviousTree(feats, thrs, values, gains)


def refit_leaves(tree: ObliviousTree, X, g, h, lam: float) -> ObliviousTree:
    """Same structure, leaf weights -G/(H + lam) from the given gradients."""
    leaf = tree.leaf_index(X)
    G = np.bincount(leaf, weights=g, minlength=tree.n_leaves)
    H = np.bincount(leaf, weights=h, minlength=tree.n_leaves)
    d = H + lam
    values = np.divide(-G, d, out=np.zeros_like(G), where=d > 0)
    return ObliviousTree(tree.features, tree.thresholds, values, tree.gains)


class OrderedBooster:
    """Prefix models for ordered residuals.

    The model for prefix length ``s`` is boosted only on the first ``s``
    rows of the permutation and scores the rows at positions
    ``[s, next scheduled s)``. Every prefix model fits the same shared
    ordered gradients restricted to its own rows, so by induction it depends
    only on the targets of its prefix.
    """

    def __init__(self, X, y, ctx: OrderedContext):
        if not ctx.schedule or ctx.schedule[0] != 0:
            raise ScheduleEmpty("prefix schedule must be non-empty and start at 0")
        self.X = np.ascontiguousarray(X, np.float64)
        self.y = np.asarray(y, np.float64)
        self.ctx = ctx
        n = len(self.y)
        sched = [s for s in ctx.schedule if s < n]
        bounds = sched[1:] + [n]
        self.models = []  # (prefix length, presorted order, target rows)
        self.pred = np.empty(n)
        for s, e in zip(sched, bounds):
            targets = ctx.order[s:e]
            if s == 0:
                self.pred[targets] = ctx.prior
                continue
            prefix = ctx.order[:s]
            self.pred[targets] = self.y[prefix].mean()
            self.models.append((s, presort(self.X, np.sort(prefix)), targets))
        self.n_models = len(self.models)

    def residuals(self, loss: str) -> GradHess:
        """Gradients at each row's prefix-model prediction."""
        return compute_grad_hess(loss, self.y, self.pred)

    def step(self, gh: GradHess, in_sample, feat_ok, cfg) -> None:
        for s, order, targets in self.models:
            mask = np.zeros(len(self.y), np.bool_)
            mask[self.ctx.order[:s]] = True
            mask &= in_sample
            tree = build_tree_oblivious(self.X, gh, cfg.max_depth, cfg.lam, cfg.gamma,
                                        rows=np.flatnonzero(mask), feat_ok=feat_ok, order=order)
            self.pred[targets] = self.pred[targets] + cfg.learning_rate * tree.predict(self.X[targets])


def ordered_residuals(booster: OrderedBooster, loss: str = "squared") -> GradHess:
    return booster.residuals(loss)


class ObliviousOrdered(TreeLearner):
    variant = "oblivious_ordered"

    def prepare(self, X, y, cfg, categorical_slots, rng):
        X = np.array(X, dtype=np.float64)
        self.ctx = make_context(len(y), rng, cfg.ordered_prior, cfg.prior_strength,
                                cfg.ordered_schedule)
        tables = []
        for slot in categorical_slots:
            tables.append(category_table(X[:, slot], y, self.ctx.prior, self.ctx.strength))
            X[:, slot] = ordered_target_encode(X[:, slot], y, self.ctx)
        self.encoding = OrderedEncoding(list(categorical_slots), tables, self.ctx.prior)
        self.X = np.ascontiguousarray(X)
        self.order = presort(self.X)
        self.booster = OrderedBooster(self.X, y, self.ctx)
        return self.X

    def gradients(self, cfg, y, pred):
        # plain gradients at the loop's own predictions set the final leaf values
        self.plain = compute_grad_hess(cfg.loss, y, pred)
        return self.booster.residuals(cfg.loss)

    def grow(self, gh, in_sample, feat_ok, cfg, rng):
        rows = np.flatnonzero(in_sample)
        tree = build_tree_oblivious(self.X, gh, cfg.max_depth, cfg.lam, cfg.gamma,
                                    rows=rows, feat_ok=feat_ok, order=self.order)
        tree = refit_leaves(tree, self.X[rows], self.plain.g[rows], self.plain.h[rows], cfg.lam)
        self.booster.step(gh, in_sample, feat_ok, cfg)
        return tree

    def preprocessor(self):
        return self.encoding
