"""Regression tree and bootstrap-aggregated random forest.

Trees are grown greedily: every node draws a random feature subset,
scans all midpoints between consecutive distinct sorted values, and
keeps the split with the smallest total sum of squared errors of the
two children. A forest averages the predictions of trees fitted on
independent bootstrap resamples.

The growth and traversal loops are compiled with numba; a pure-python
fit of a 500-tree forest on a 16k-row window would take minutes, the
compiled kernel takes seconds.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator, RegressorMixin

from .core import FEATURE_COUNT
from .validation import check_feature_matrix, check_fitted, check_labels

# Tie between equal-SSE splits is broken toward the lowest feature index
# and lowest threshold: feature subsets are scanned in ascending order and
# only a strictly smaller SSE replaces the incumbent.


@njit(cache=True)
def _grow(X, y, min_leaf, feat_subsets):  # pragma: no cover - compiled
    n = y.shape[0]
    k = feat_subsets.shape[1]
    max_nodes = feat_subsets.shape[0]

    feature = np.full(max_nodes, -1, dtype=np.int64)
    threshold = np.zeros(max_nodes, dtype=np.float64)
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    value = np.zeros(max_nodes, dtype=np.float64)
    count = np.zeros(max_nodes, dtype=np.int64)

    indices = np.arange(n)
    stack_node = np.empty(max_nodes, dtype=np.int64)
    stack_lo = np.empty(max_nodes, dtype=np.int64)
    stack_hi = np.empty(max_nodes, dtype=np.int64)
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = n
    top = 1
    n_nodes = 1

    vals = np.empty(n, dtype=np.float64)

    while top > 0:
        top -= 1
        node = stack_node[top]
        lo = stack_lo[top]
        hi = stack_hi[top]
        m = hi - lo

        s = 0.0
        s2 = 0.0
        for i in range(lo, hi):
            yi = y[indices[i]]
            s += yi
            s2 += yi * yi
        mean = s / m
        value[node] = mean
        count[node] = m
        node_sse = s2 - s * s / m

        if m < 2 * min_leaf or node_sse <= 0.0:
            continue

        best_sse = np.inf
        best_f = -1
        best_thr = 0.0
        for kk in range(k):
            f = feat_subsets[node, kk]
            for i in range(m):
                vals[i] = X[indices[lo + i], f]
            order = np.argsort(vals[:m])
            ls = 0.0
            ls2 = 0.0
            for pos in range(m - min_leaf):
                yi = y[indices[lo + order[pos]]]
                ls += yi
                ls2 += yi * yi
                if pos + 1 < min_leaf:
                    continue
                v_here = vals[order[pos]]
                v_next = vals[order[pos + 1]]
                if v_here >= v_next:
                    continue
                nl = pos + 1.0
                nr = m - nl
                rs = s - ls
                rs2 = s2 - ls2
                sse = (ls2 - ls * ls / nl) + (rs2 - rs * rs / nr)
                if sse < best_sse:
                    best_sse = sse
                    best_f = f
                    best_thr = 0.5 * (v_here + v_next)
        if best_f < 0 or not (best_sse < node_sse - 1e-12):
            continue

        buf = np.empty(m, dtype=np.int64)
        nl_count = 0
        for i in range(lo, hi):
            if X[indices[i], best_f] <= best_thr:
                buf[nl_count] = indices[i]
                nl_count += 1
        pos_r = nl_count
        for i in range(lo, hi):
            if X[indices[i], best_f] > best_thr:
                buf[pos_r] = indices[i]
                pos_r += 1
        for i in range(m):
            indices[lo + i] = buf[i]

        feature[node] = best_f
        threshold[node] = best_thr
        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        left[node] = lid
        right[node] = rid
        stack_node[top] = lid
        stack_lo[top] = lo
        stack_hi[top] = lo + nl_count
        top += 1
        stack_node[top] = rid
        stack_lo[top] = lo + nl_count
        stack_hi[top] = hi
        top += 1

    return (
        feature[:n_nodes],
        threshold[:n_nodes],
        left[:n_nodes],
        right[:n_nodes],
        value[:n_nodes],
        count[:n_nodes],
    )


@njit(cache=True)
def _traverse(feature, threshold, left, right, value, X, out):  # pragma: no cover
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]


@dataclass(frozen=True)
class Tree:
    """A fitted regression tree in flat-array form.

    feature[i] >= 0 marks an internal node split on that feature at
    threshold[i]; feature[i] == -1 marks a leaf predicting value[i] from
    count[i] training samples.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    @property
    def root_split(self) -> Optional[tuple[int, float]]:
        """(feature, threshold) of the root, or None for a single leaf."""
        if self.feature[0] < 0:
            return None
        return int(self.feature[0]), float(self.threshold[0])

    @property
    def leaf_values(self) -> np.ndarray:
        return self.value[self.feature < 0]

    def predict(self, X) -> np.ndarray:
        X = check_feature_matrix(X)
        out = np.empty(X.shape[0], dtype=np.float64)
        _traverse(self.feature, self.threshold, self.left, self.right, self.value, X, out)
        return out

    def split_sse(self, X, y) -> float:
        """Total SSE of the two root children on (X, y); inf for a leaf."""
        if self.root_split is None:
            return float("inf")
        f, thr = self.root_split
        X = check_feature_matrix(X)
        y = check_labels(y, n_samples=X.shape[0])
        mask = X[:, f] <= thr
        sse = 0.0
        for side in (y[mask], y[~mask]):
            if side.size:
                sse += float(np.sum((side - side.mean()) ** 2))
        return sse


def bootstrap_indices(rng: np.random.Generator, n: int, size: int) -> np.ndarray:
    """Draw a with-replacement bootstrap sample of row indices.

    Module-level so tests can patch it, e.g. with an identity sample to
    disable bagging.
    """
    return rng.integers(0, n, size=size)


def _feature_subsets(rng: np.random.Generator, n_nodes: int, n_features: int, k: int) -> np.ndarray:
    if k >= n_features:
        subsets = np.tile(np.arange(n_features, dtype=np.int64), (n_nodes, 1))
    else:
        subsets = np.argsort(rng.random((n_nodes, n_features)), axis=1)[:, :k]
        subsets = np.ascontiguousarray(np.sort(subsets, axis=1), dtype=np.int64)
    return subsets


def fit_tree(
    X,
    y,
    min_samples_leaf: int = 1,
    max_features: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> Tree:
    """Grow one CART regression tree by greedy SSE minimization.

    Stops splitting a node when it is pure, when either child would fall
    below min_samples_leaf, or when no candidate split reduces the SSE.
    """
    X = check_feature_matrix(X)
    y = check_labels(y, n_samples=X.shape[0])
    if min_samples_leaf < 1:
        raise ValueError(f"min_samples_leaf must be >= 1, got {min_samples_leaf}")
    n, n_features = X.shape
    k = n_features if max_features is None else min(max_features, n_features)
    if k < 1:
        raise ValueError(f"max_features must be >= 1, got {max_features}")
    rng = rng or np.random.default_rng(0)
    max_nodes = 2 * max(1, n // min_samples_leaf) + 3
    subsets = _feature_subsets(rng, max_nodes, n_features, k)
    arrays = _grow(X, y, min_samples_leaf, subsets)
    return Tree(*arrays)


@dataclass(frozen=True)
class ForestConfig:
    """Hyperparameters of a bagged forest.

    bootstrap_size None means "use the training-set size", the standard
    bagging choice.
    """

    tree_count: int = 500
    min_samples_leaf: int = 5
    max_features: int = 2  # max(1, floor(7 features / 3))
    seed: int = 0
    bootstrap_size: Optional[int] = None

    def __post_init__(self) -> None:
        if self.tree_count < 1:
            raise ValueError(f"tree_count must be >= 1, got {self.tree_count}")
        if self.min_samples_leaf < 1:
            raise ValueError(
                f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}"
            )
        if not 1 <= self.max_features <= FEATURE_COUNT:
            raise ValueError(
                f"max_features must be in [1, {FEATURE_COUNT}], got {self.max_features}"
            )
        if self.bootstrap_size is not None and self.bootstrap_size < 1:
            raise ValueError("bootstrap_size must be >= 1 when given")

    def label(self) -> str:
        return f"{self.tree_count} trees/{self.min_samples_leaf} samples"


def forest_variants() -> list[ForestConfig]:
    """The five (tree count, leaf size) variants used in the comparison sweep."""
    pairs = [(250, 5), (500, 5), (1000, 10), (1500, 15), (2000, 20)]
    return [
        replace(ForestConfig(), tree_count=t, min_samples_leaf=m) for t, m in pairs
    ]


class ForestRegressor(BaseEstimator, RegressorMixin):
    """Random forest regressor: the mean prediction of bagged CART trees.

    Each tree is fitted on a bootstrap resample drawn from a per-tree
    seed derived from `seed`, so fitting is deterministic and trees could
    be fitted in any order (or in parallel) with identical results.
    """

    def __init__(
        self,
        tree_count: int = 500,
        min_samples_leaf: int = 5,
        max_features: int = 2,
        seed: int = 0,
        bootstrap_size: Optional[int] = None,
    ):
        self.tree_count = tree_count
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.seed = seed
        self.bootstrap_size = bootstrap_size

    @classmethod
    def from_config(cls, config: ForestConfig) -> "ForestRegressor":
        return cls(
            tree_count=config.tree_count,
            min_samples_leaf=config.min_samples_leaf,
            max_features=config.max_features,
            seed=config.seed,
            bootstrap_size=config.bootstrap_size,
        )

    @property
    def config(self) -> ForestConfig:
        return ForestConfig(
            tree_count=self.tree_count,
            min_samples_leaf=self.min_samples_leaf,
            max_features=self.max_features,
            seed=self.seed,
            bootstrap_size=self.bootstrap_size,
        )

    def fit(self, X, y) -> "ForestRegressor":
        config = self.config  # validates hyperparameters
        X = check_feature_matrix(X)
        y = check_labels(y, n_samples=X.shape[0])
        n = X.shape[0]
        size = config.bootstrap_size or n
        children = np.random.SeedSequence(config.seed).spawn(config.tree_count)
        trees = []
        for child in children:
            rng = np.random.default_rng(child)
            idx = bootstrap_indices(rng, n, size)
            trees.append(
                fit_tree(
                    X[idx],
                    y[idx],
                    min_samples_leaf=config.min_samples_leaf,
                    max_features=config.max_features,
                    rng=rng,
                )
            )
        self.trees_ = trees
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X) -> np.ndarray:
        check_fitted(self, "trees_")
        X = check_feature_matrix(X, n_features=self.n_features_in_)
        total = np.zeros(X.shape[0], dtype=np.float64)
        out = np.empty(X.shape[0], dtype=np.float64)
        for tree in self.trees_:
            _traverse(tree.feature, tree.threshold, tree.left, tree.right, tree.value, X, out)
            total += out
        return total / len(self.trees_)

    def tree_predictions(self, X) -> np.ndarray:
        """(tree_count, n) matrix of per-tree predictions."""
        check_fitted(self, "trees_")
        X = check_feature_matrix(X, n_features=self.n_features_in_)
        return np.stack([tree.predict(X) for tree in self.trees_])


def forest_to_arrays(est: ForestRegressor) -> dict[str, np.ndarray]:
    """Flatten a fitted forest into named arrays for binary serialization."""
    check_fitted(est, "trees_")
    offsets = np.cumsum([0] + [t.n_nodes for t in est.trees_]).astype(np.int64)
    return {
        "tree_offsets": offsets,
        "feature": np.concatenate([t.feature for t in est.trees_]),
        "threshold": np.concatenate([t.threshold for t in est.trees_]),
        "left": np.concatenate([t.left for t in est.trees_]),
        "right": np.concatenate([t.right for t in est.trees_]),
        "value": np.concatenate([t.value for t in est.trees_]),
        "count": np.concatenate([t.count for t in est.trees_]),
        "n_features_in": np.int64(est.n_features_in_),
    }


def forest_from_arrays(params: dict, arrays: dict) -> ForestRegressor:
    est = ForestRegressor(**params)
    offsets = arrays["tree_offsets"]
    trees = []
    for i in range(len(offsets) - 1):
        lo, hi = int(offsets[i]), int(offsets[i + 1])
        trees.append(
            Tree(
                feature=np.asarray(arrays["feature"][lo:hi], dtype=np.int64),
                threshold=np.asarray(arrays["threshold"][lo:hi], dtype=np.float64),
                left=np.asarray(arrays["left"][lo:hi], dtype=np.int64),
                right=np.asarray(arrays["right"][lo:hi], dtype=np.int64),
                value=np.asarray(arrays["value"][lo:hi], dtype=np.float64),
                count=np.asarray(arrays["count"][lo:hi], dtype=np.int64),
            )
        )
    est.trees_ = trees
    est.n_features_in_ = int(arrays["n_features_in"])
    return est
