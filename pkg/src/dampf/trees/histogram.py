"""Histogram split finding, leaf-wise growth, gradient-based one-side
sampling and exclusive feature bundling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import EmptySample, ModelFormatError
from ..losses import GradHess
from ._kernels import best_hist_split, build_hist, leaf_weight
from .base import TreeLearner
from .tree import DecisionTree, SplitCandidate


def _midpoints(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # same arithmetic as the scalar kernel so exact and binned thresholds agree bitwise
    m = a + (b - a) * 0.5
    return np.where(m >= b, a, m)


def bin_thresholds(values, max_bins: int = 255) -> np.ndarray:
    """Upper bin boundaries for one feature.

    With at most ``max_bins`` distinct values every value gets its own bin;
    otherwise boundaries sit at count quantiles of the sorted values.
    """
    if max_bins < 2:
        raise ValueError("max_bins must be >= 2")
    u, counts = np.unique(np.asarray(values, np.float64), return_counts=True)
    if len(u) <= 1:
        return np.empty(0)
    if len(u) <= max_bins:
        return _midpoints(u[:-1], u[1:])
    cum = np.cumsum(counts)
    targets = np.arange(1, max_bins) * (cum[-1] / max_bins)
    cut = np.unique(np.searchsorted(cum, targets, side="left"))
    cut = cut[cut < len(u) - 1]
    return _midpoints(u[cut], u[cut + 1])


def apply_bins(X: np.ndarray, thresholds: list[np.ndarray]) -> np.ndarray:
    binned = np.zeros(X.shape, np.int64)
    for f, thr in enumerate(thresholds):
        if len(thr):
            binned[:, f] = np.searchsorted(thr, X[:, f], side="left")
    return binned


@dataclass
class FeatureHistogram:
    """Per-bin gradient/hessian sums and counts for one feature.

    Bin ``b`` holds values in ``(thresholds[b-1], thresholds[b]]``.
    """

    thresholds: np.ndarray
    G: np.ndarray
    H: np.ndarray
    count: np.ndarray

    def __sub__(self, other: "FeatureHistogram") -> "FeatureHistogram":
        return FeatureHistogram(self.thresholds, self.G - other.G, self.H - other.H,
                                self.count - other.count)


def build_histograms(X, grads: GradHess, max_bins: int = 255, rows=None,
                     thresholds: list[np.ndarray] | None = None) -> list[FeatureHistogram]:
    """Histograms of ``rows`` (default all). Bin edges come from those same
    rows unless ``thresholds`` fixes them (e.g. root edges reused by children)."""
    X = np.asarray(X, np.float64)
    rows = np.arange(X.shape[0]) if rows is None else np.asarray(rows, np.int64)
    if thresholds is None:
        thresholds = [bin_thresholds(X[rows, f], max_bins) for f in range(X.shape[1])]
    B = max(len(t) for t in thresholds) + 1
    binned = apply_bins(X, thresholds)
    Gb, Hb, Cb = build_hist(binned, grads.g, grads.h, rows, np.ones(X.shape[1], np.bool_), B)
    return [FeatureHistogram(t, Gb[f, :len(t) + 1], Hb[f, :len(t) + 1], Cb[f, :len(t) + 1])
            for f, t in enumerate(thresholds)]


def _best_from_arrays(Gb, Hb, Cb, n_bins, lam, gamma, feat_ok):
    """(feature, boundary, gain, GL, GR, HL, HR) of the best bin boundary, or None."""
    best = best_hist_split(Gb, Hb, Cb, n_bins, float(lam), float(gamma), feat_ok)
    return None if best[0] < 0 else best


def best_split_histogram(hists: list[FeatureHistogram], lam: float = 0.0, gamma: float = 0.0,
                         feat_ok=None) -> SplitCandidate | None:
    F = len(hists)
    B = max(len(h.G) for h in hists)
    Gb, Hb = np.zeros((F, B)), np.zeros((F, B))
    Cb = np.zeros((F, B), np.int64)
    for f, h in enumerate(hists):
        Gb[f, :len(h.G)] = h.G
        Hb[f, :len(h.H)] = h.H
        Cb[f, :len(h.count)] = h.count
    n_bins = np.array([len(h.G) for h in hists], np.int64)
    feat_ok = np.ones(F, np.bool_) if feat_ok is None else np.asarray(feat_ok, np.bool_)
    best = _best_from_arrays(Gb, Hb, Cb, n_bins, lam, gamma, feat_ok)
    if best is None:
        return None
    f, j, gain, gl, gr, hl, hr = best
    return SplitCandidate(f, float(hists[f].thresholds[j]), gain, gl, gr, hl, hr)


# ---- gradient-based one-side sampling ------------------------------------

@dataclass(frozen=True)
class GossSample:
    rows: np.ndarray
    weights: np.ndarray


def goss_sample(grads: GradHess, a: float, b: float, seed=None, rows=None) -> GossSample:
    """Keep the top ``floor(a n)`` rows by |g| and ``floor(b n)`` uniform rows
    from the rest; the latter carry weight ``(1 - a) / b``."""
    if not (0.0 <= a <= 1.0 and 0.0 <= b <= 1.0):
        raise ValueError("a and b must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    rows = np.arange(len(grads)) if rows is None else np.asarray(rows, np.int64)
    n = len(rows)
    n_top = int(math.floor(a * n + 1e-9))
    n_rand = int(math.floor(b * n + 1e-9))
    n_rand = min(n_rand, n - n_top)
    if n_top + n_rand == 0:
        raise EmptySample(f"a={a}, b={b} keep no rows out of {n}")
    by_mag = rows[np.argsort(-np.abs(grads.g[rows]), kind="stable")]
    top = by_mag[:n_top]
    picked = rng.choice(by_mag[n_top:], size=n_rand, replace=False) if n_rand else by_mag[:0]
    kept = np.concatenate([top, picked])
    weights = np.concatenate([np.ones(n_top), np.full(n_rand, (1.0 - a) / b if n_rand else 1.0)])
    order = np.argsort(kept, kind="stable")
    return GossSample(kept[order], weights[order])


# ---- exclusive feature bundling ------------------------------------------

class BundleMap:
    """Groups of mutually exclusive features merged into single columns.

    A multi-feature bundle encodes each row by its (first) nonzero member:
    ``offset[f] + rank of x among f's training nonzeros``; all-zero rows get 0.
    Single-feature bundles pass the raw column through.
    """

    kind = "bundles"

    def __init__(self, n_features: int, bundles: list[list[int]], values: dict[int, np.ndarray]):
        self.n_features = n_features
        self.bundles = [list(map(int, b)) for b in bundles]
        self.values = {int(k): np.asarray(v, np.float64) for k, v in values.items()}
        self.offsets: dict[int, int] = {}
        for b in self.bundles:
            if len(b) > 1:
                off = 1
                for f in b:
                    self.offsets[f] = off
                    off += len(self.values[f]) + 1

    @property
    def is_identity(self) -> bool:
        return all(len(b) == 1 for b in self.bundles)

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, np.float64)
        if X.shape[1] != self.n_features:
            raise ModelFormatError(f"expected {self.n_features} features, got {X.shape[1]}")
        if self.is_identity:
            return X
        cols = []
        for b in self.bundles:
            if len(b) == 1:
                cols.append(X[:, b[0]])
                continue
            code = np.zeros(X.shape[0])
            taken = np.zeros(X.shape[0], np.bool_)
            for f in b:
                nz = (X[:, f] != 0) & ~taken
                code[nz] = self.offsets[f] + np.searchsorted(self.values[f], X[nz, f], side="left")
                taken |= nz
            cols.append(code)
        return np.column_stack(cols)

    def unbundle_split(self, column: int, threshold: float) -> "UnbundledSplit":
        b = self.bundles[column]
        if len(b) == 1:
            return UnbundledSplit(b, 0, float(threshold))
        owner, raw = -1, np.inf
        for pos, f in enumerate(b):
            if self.offsets[f] <= threshold:
                owner = pos
                r = int(math.floor(threshold - self.offsets[f]))
                raw = float(self.values[f][r]) if r < len(self.values[f]) else np.inf
        return UnbundledSplit(b, owner, raw)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n_features": self.n_features, "bundles": self.bundles,
                "values": {str(k): v.tolist() for k, v in sorted(self.values.items())}}

    @classmethod
    def from_dict(cls, d: dict) -> "BundleMap":
        return cls(d["n_features"], d["bundles"], {int(k): v for k, v in d["values"].items()})


@dataclass(frozen=True)
class UnbundledSplit:
    """A bundled-column split restated on raw features.

    Rows whose active member precedes ``owner`` in the bundle go left, rows
    whose active member follows it go right, and the owner itself splits at
    ``x <= raw_threshold``. Rows with no nonzero member always go left.
    """

    features: list[int]
    owner: int
    raw_threshold: float

    def goes_left(self, X) -> np.ndarray:
        X = np.asarray(X, np.float64)
        if len(self.features) == 1:
            return X[:, self.features[0]] <= self.raw_threshold
        left = np.ones(X.shape[0], np.bool_)
        taken = np.zeros(X.shape[0], np.bool_)
        for pos, f in enumerate(self.features):
            nz = (X[:, f] != 0) & ~taken
            if pos < self.owner:
                left[nz] = True
            elif pos == self.owner:
                left[nz] = X[nz, f] <= self.raw_threshold
            else:
                left[nz] = False
            taken |= nz
        return left


def bundle_exclusive_features(X) -> tuple[np.ndarray, BundleMap]:
    """Greedy conflict-free bundling: features are visited by descending
    nonzero count and join the first bundle whose support they don't touch."""
    X = np.asarray(X, np.float64)
    nz = X != 0
    counts = nz.sum(axis=0)
    visit = sorted(range(X.shape[1]), key=lambda f: (-counts[f], f))
    bundles: list[list[int]] = []
    support: list[np.ndarray] = []
    for f in visit:
        for k, used in enumerate(support):
            if not np.any(used & nz[:, f]):
                bundles[k].append(f)
                used |= nz[:, f]
                break
        else:
            bundles.append([f])
            support.append(nz[:, f].copy())
    bundles = sorted((sorted(b) for b in bundles), key=lambda b: b[0])
    values = {f: np.unique(X[nz[:, f], f]) for b in bundles if len(b) > 1 for f in b}
    bmap = BundleMap(X.shape[1], bundles, values)
    return bmap.transform(X), bmap


# ---- leaf-wise growth ----------------------------------------------------

class _Leaf:
    __slots__ = ("id", "rows", "depth", "hist", "best")

    def __init__(self, id, rows, depth, hist):
        self.id, self.rows, self.depth, self.hist = id, rows, depth, hist
        self.best = None


def build_tree_leafwise(X, grads: GradHess, max_leaves: int = 31, max_depth: int = 10,
                        lam: float = 1.0, gamma: float = 0.0, max_bins: int = 255,
                        rows=None, feat_ok=None) -> DecisionTree:
    """Best-first growth on root-fixed histogram bins.

    The leaf whose best split gains most is split next (earliest-created
    leaf on ties). The smaller child's histogram is built from its rows and
    the larger child's is the parent minus the smaller.
    """
    X = np.ascontiguousarray(X, np.float64)
    n, F = X.shape
    rows = np.arange(n) if rows is None else np.sort(np.asarray(rows, np.int64))
    feat_ok = np.ones(F, np.bool_) if feat_ok is None else np.asarray(feat_ok, np.bool_)
    g, h = grads.g, grads.h
    thresholds = [bin_thresholds(X[rows, f], max_bins) if feat_ok[f] else np.empty(0)
                  for f in range(F)]
    n_bins = np.array([len(t) + 1 for t in thresholds], np.int64)
    B = int(n_bins.max())
    binned = apply_bins(X, thresholds)

    def hist_of(r):
        return build_hist(binned, g, h, r, feat_ok, B)

    def find(leaf):
        if leaf.depth < max_depth and len(leaf.rows) >= 2:
            leaf.best = _best_from_arrays(*leaf.hist, n_bins, lam, gamma, feat_ok)

    # node arrays in creation order; DecisionTree reorders to preorder
    feature, threshold, left, right = [-1], [0.0], [-1], [-1]
    root = _Leaf(0, rows, 0, hist_of(rows))
    find(root)
    leaves = [root]
    while len(leaves) < max_leaves:
        pick = None
        for leaf in leaves:  # ascending creation id
            if leaf.best is not None and (pick is None or leaf.best[2] > pick.best[2]):
                pick = leaf
        if pick is None:
            break
        f, j = pick.best[0], pick.best[1]
        mask = binned[pick.rows, f] <= j
        rows_l, rows_r = pick.rows[mask], pick.rows[~mask]
        if len(rows_l) <= len(rows_r):
            hl = hist_of(rows_l)
            hr = tuple(p - c for p, c in zip(pick.hist, hl))
        else:
            hr = hist_of(rows_r)
            hl = tuple(p - c for p, c in zip(pick.hist, hr))
        ids = []
        for child_rows, hist in ((rows_l, hl), (rows_r, hr)):
            cid = len(feature)
            feature.append(-1); threshold.append(0.0); left.append(-1); right.append(-1)
            child = _Leaf(cid, child_rows, pick.depth + 1, hist)
            find(child)
            leaves.append(child)
            ids.append(cid)
        feature[pick.id] = f
        threshold[pick.id] = float(thresholds[f][j])
        left[pick.id], right[pick.id] = ids
        leaves.remove(pick)
    value = [0.0] * len(feature)
    for leaf in leaves:
        value[leaf.id] = leaf_weight(float(g[leaf.rows].sum()), float(h[leaf.rows].sum()), lam)
    return DecisionTree(feature, threshold, left, right, value)


class LeafwiseHistogram(TreeLearner):
    variant = "leafwise_histogram"

    def prepare(self, X, y, cfg, categorical_slots, rng):
        X = np.ascontiguousarray(X, np.float64)
        if cfg.bundle:
            Xb, self.bundle_map = bundle_exclusive_features(X)
        else:
            Xb, self.bundle_map = X, BundleMap(X.shape[1], [[f] for f in range(X.shape[1])], {})
        self.X = np.ascontiguousarray(Xb)
        return self.X

    def grow(self, gh, in_sample, feat_ok, cfg, rng):
        rows = np.flatnonzero(in_sample)
        if cfg.goss_top is not None:
            s = goss_sample(gh, cfg.goss_top, cfg.goss_other, rng, rows=rows)
            rows, gh = s.rows, gh.weighted(s.rows, s.weights)
        return build_tree_leafwise(self.X, gh, cfg.max_leaves, cfg.max_depth, cfg.lam,
                                   cfg.gamma, cfg.max_bins, rows=rows, feat_ok=feat_ok)

    def preprocessor(self):
        return self.bundle_map
