"""Fitted regression trees."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ModelFormatError
from ._kernels import predict_nodes, preorder_permutation


@dataclass(frozen=True)
class SplitCandidate:
    feature: int
    threshold: float
    gain: float
    G_L: float
    G_R: float
    H_L: float
    H_R: float


class DecisionTree:
    """Binary tree stored as a preorder node list.

    Internal nodes route ``x[feature] <= threshold`` left. Leaves carry
    ``feature == -1`` and a weight in ``value``.
    """

    kind = "node_list"

    def __init__(self, feature, threshold, left, right, value, gain=None):
        feature = np.asarray(feature, np.int64)
        left = np.asarray(left, np.int64)
        right = np.asarray(right, np.int64)
        perm = preorder_permutation(left, right)
        if len(perm) != len(feature):
            raise ModelFormatError("node list contains unreachable nodes")
        if np.array_equal(perm, np.arange(len(perm))):
            self.feature = feature
            self.threshold = np.asarray(threshold, np.float64)
            self.left, self.right = left, right
            self.value = np.asarray(value, np.float64)
            self.gain = None if gain is None else np.asarray(gain, np.float64)
        else:
            inv = np.empty_like(perm)
            inv[perm] = np.arange(len(perm))
            relabel = lambda a: np.where(a[perm] >= 0, inv[np.maximum(a[perm], 0)], -1)
            self.feature = feature[perm]
            self.threshold = np.asarray(threshold, np.float64)[perm]
            self.left, self.right = relabel(left), relabel(right)
            self.value = np.asarray(value, np.float64)[perm]
            self.gain = None if gain is None else np.asarray(gain, np.float64)[perm]

    @classmethod
    def leaf(cls, weight: float) -> "DecisionTree":
        return cls([-1], [0.0], [-1], [-1], [weight])

    def __len__(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    @property
    def depth(self) -> int:
        depth = np.zeros(len(self), np.int64)
        for k in range(len(self)):
            if self.feature[k] >= 0:
                depth[self.left[k]] = depth[self.right[k]] = depth[k] + 1
        return int(depth.max())

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return predict_nodes(X, self.feature, self.threshold, self.left, self.right, self.value)

    def to_dict(self) -> dict:
        nodes = [[int(f), float(t), int(l), int(r), float(v)]
                 for f, t, l, r, v in zip(self.feature, self.threshold, self.left,
                                          self.right, self.value)]
        return {"kind": self.kind, "nodes": nodes}

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        f, t, l, r, v = zip(*d["nodes"])
        return cls(f, t, l, r, v)


class ObliviousTree:
    """Symmetric tree: level ``d`` tests ``x[features[d]] > thresholds[d]``
    everywhere, so a row's leaf index is the bit string of its answers."""

    kind = "oblivious"

    def __init__(self, features, thresholds, leaf_values, gains=None):
        self.features = np.asarray(features, np.int64)
        self.thresholds = np.asarray(thresholds, np.float64)
        self.leaf_values = np.asarray(leaf_values, np.float64)
        self.gains = None if gains is None else np.asarray(gains, np.float64)
        if len(self.leaf_values) != 1 << len(self.features):
            raise ModelFormatError("oblivious tree needs 2**depth leaf values")

    @property
    def depth(self) -> int:
        return len(self.features)

    @property
    def n_leaves(self) -> int:
        return len(self.leaf_values)

    def leaf_index(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        idx = np.zeros(X.shape[0], np.int64)
        for f, t in zip(self.features, self.thresholds):
            idx = 2 * idx + (X[:, f] > t)
        return idx

    def predict(self, X) -> np.ndarray:
        return self.leaf_values[self.leaf_index(X)]

    def to_node_tree(self) -> DecisionTree:
        """Expand into an equivalent general tree (2**(depth+1) - 1 nodes)."""
        feature, threshold, left, right, value = [], [], [], [], []

        def emit(level: int, leaf: int) -> int:
            k = len(feature)
            feature.append(-1); threshold.append(0.0); left.append(-1); right.append(-1)
            value.append(0.0)
            if level == self.depth:
                value[k] = self.leaf_values[leaf]
                return k
            feature[k] = int(self.features[level])
            threshold[k] = float(self.thresholds[level])
            left[k] = emit(level + 1, 2 * leaf)
            right[k] = emit(level + 1, 2 * leaf + 1)
            return k

        emit(0, 0)
        return DecisionTree(feature, threshold, left, right, value)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "features": self.features.tolist(),
                "thresholds": self.thresholds.tolist(), "leaf_values": self.leaf_values.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ObliviousTree":
        return cls(d["features"], d["thresholds"], d["leaf_values"])


def tree_from_dict(d: dict):
    kinds = {DecisionTree.kind: DecisionTree, ObliviousTree.kind: ObliviousTree}
    try:
        return kinds[d["kind"]].from_dict(d)
    except KeyError:
        raise ModelFormatError(f"unknown tree record {d.get('kind')!r}") from None
