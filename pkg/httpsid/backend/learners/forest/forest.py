import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .... import config
from ..api import Classifier
from .config import ForestConfig

log = logging.getLogger(__name__)

LEAF = -1


@dataclass
class Tree:
    """Axis-aligned binary tree stored as parallel node arrays.

    Internal nodes send x[feature] <= threshold left; leaves have
    feature == LEAF and keep the class histogram of their training rows.
    """
    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    counts: list[list[int]] = field(default_factory=list)

    def add(self, counts: np.ndarray) -> int:
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.counts.append(counts.astype(int).tolist())
        return len(self.feature) - 1

    def apply(self, X: np.ndarray) -> np.ndarray:
        """leaf index reached by every row"""
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold)
        left, right = np.asarray(self.left), np.asarray(self.right)
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            f = feature[node]
            inner = f != LEAF
            if not inner.any():
                return node
            r, n = rows[inner], node[inner]
            go_left = X[r, f[inner]] <= threshold[n]
            node[inner] = np.where(go_left, left[n], right[n])

    def predict(self, X: np.ndarray) -> np.ndarray:
        """majority class of the reached leaf, ties to the lowest class index"""
        leaf_class = np.argmax(np.asarray(self.counts), axis=1)
        return leaf_class[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left,
            "right": self.right,
            "counts": self.counts,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            feature=[int(v) for v in d["feature"]],
            threshold=[float(v) for v in d["threshold"]],
            left=[int(v) for v in d["left"]],
            right=[int(v) for v in d["right"]],
            counts=[[int(c) for c in row] for row in d["counts"]],
        )


def _best_threshold(x: np.ndarray, onehot: np.ndarray) -> tuple[float, float] | None:
    """(weighted child gini * n, threshold) of the best cut of one feature,
    lowest threshold on ties; None for a constant feature"""
    order = np.argsort(x, kind="stable")
    xs = x[order]
    cut = np.flatnonzero(xs[:-1] < xs[1:])
    if cut.size == 0:
        return None

    left = np.cumsum(onehot[order], axis=0)[cut]
    total = onehot.sum(axis=0)
    right = total - left
    n_left = (cut + 1).astype(np.float64)
    n_right = len(x) - n_left
    impurity = (n_left - (left * left).sum(axis=1) / n_left) + (n_right - (right * right).sum(axis=1) / n_right)

    best = int(np.argmin(impurity))
    lo, hi = xs[cut[best]], xs[cut[best] + 1]
    threshold = (lo + hi) / 2
    if not lo <= threshold < hi:
        threshold = lo
    return float(impurity[best]), float(threshold)


def grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    rng: np.random.Generator,
    max_features: int,
    max_depth: int = config.RF_MAX_DEPTH,
) -> Tree:
    """Grow one tree on (X, y), y holding class indices.

    At each node ``max_features`` features are drawn; if none of them can
    split the node, further features are taken in the same random order.
    The split with the largest Gini gain wins, ties to the lowest feature
    index and then the lowest threshold.
    """
    tree = Tree()
    d = X.shape[1]
    root = tree.add(np.bincount(y, minlength=n_classes))
    stack = [(root, np.arange(len(y)), 0)]

    while stack:
        node, idx, depth = stack.pop()
        counts = np.asarray(tree.counts[node])
        if depth >= max_depth or len(idx) < 2 or np.count_nonzero(counts) <= 1:
            continue

        onehot = np.eye(n_classes)[y[idx]]
        n = len(idx)
        parent = n - float((counts * counts).sum()) / n

        perm = rng.permutation(d)
        best = None
        drawn = 0
        while best is None and drawn < d:
            batch = np.sort(perm[drawn:drawn + (max_features if drawn == 0 else 1)])
            drawn += len(batch)
            for f in batch:
                found = _best_threshold(X[idx, f], onehot)
                if found is None:
                    continue
                gain = parent - found[0]
                if best is None or gain > best[0]:
                    best = (gain, int(f), found[1])
        if best is None:
            continue

        _, f, threshold = best
        go_left = X[idx, f] <= threshold
        left_idx, right_idx = idx[go_left], idx[~go_left]
        left = tree.add(np.bincount(y[left_idx], minlength=n_classes))
        right = tree.add(np.bincount(y[right_idx], minlength=n_classes))
        tree.feature[node], tree.threshold[node] = f, threshold
        tree.left[node], tree.right[node] = left, right
        stack.append((right, right_idx, depth + 1))
        stack.append((left, left_idx, depth + 1))
    return tree


def bootstrap(rng: np.random.Generator, y: np.ndarray, n_classes: int) -> np.ndarray:
    """n row indices drawn with replacement; a class missing from the draw
    takes the slot of a row whose class is drawn more than once"""
    sample = rng.integers(0, len(y), size=len(y))
    for c in range(n_classes):
        if np.any(y[sample] == c):
            continue
        counts = np.bincount(y[sample], minlength=n_classes)
        spare = np.flatnonzero(counts[y[sample]] > 1)
        sample[spare[0]] = rng.choice(np.flatnonzero(y == c))
    return sample


class RandomForest(Classifier):
    """Bagged Gini trees over random feature subspaces, plurality vote.

    Tree t draws its bootstrap sample and feature subsets from the t-th child
    of SeedSequence(seed), so a forest is reproducible from its seed. Every
    bag holds at least one row of each class.
    """

    config_cls = ForestConfig

    def __init__(self, config: ForestConfig, seed: int = 0):
        super().__init__(config, seed)
        self.trees: list[Tree] = []

    def _fit(self, X: np.ndarray, y: np.ndarray):
        d = X.shape[1]
        max_features = max(1, math.ceil(math.sqrt(d)))
        self.trees = []
        for child in np.random.SeedSequence(self.seed).spawn(self.config.n_trees):
            rng = np.random.default_rng(child)
            sample = bootstrap(rng, y, len(self.classes))
            self.trees.append(grow_tree(X[sample], y[sample], len(self.classes), rng, max_features))
        log.debug(f"forest of {len(self.trees)} trees, {sum(len(t.feature) for t in self.trees)} nodes")

    def _votes(self, X: np.ndarray) -> np.ndarray:
        votes = np.zeros((len(X), len(self.classes)))
        rows = np.arange(len(X))
        for t in self.trees:
            np.add.at(votes, (rows, t.predict(X)), 1.0)
        return votes

    def _decide(self, X: np.ndarray) -> np.ndarray:
        # argmax returns the first maximum, i.e. the smallest label
        return np.argmax(self._votes(X), axis=1)

    def params_dict(self) -> dict:
        return {"trees": [t.to_dict() for t in self.trees]}

    def load_params(self, params: dict):
        self.trees = [Tree.from_dict(t) for t in params["trees"]]
