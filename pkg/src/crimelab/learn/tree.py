"""CART decision trees on exact per-feature value ranks."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from . import _backend
from ._backend import GINI, VARIANCE


@dataclass(frozen=True)
class Leaf:
    score: float


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"


TreeNode = Union[Leaf, Split]


@dataclass
class TreeParams:
    max_depth: int = 20
    min_leaf: float = 1.0
    max_features: int | None = None
    criterion: str | None = None  # "gini", "variance"; None picks from y

    def __post_init__(self):
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.min_leaf <= 0:
            raise ValueError("min_leaf must be positive")
        if self.max_features is not None and self.max_features < 1:
            raise ValueError("max_features must be >= 1")


def bin_columns(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rank-code every column against its sorted unique values.

    Returns codes of shape (d, n) and the unique values padded to (d, max_bins).
    Splitting between adjacent codes is exactly splitting between adjacent
    distinct values, so no precision is lost.
    """
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    uniq = [np.unique(X[:, j]) for j in range(d)]
    width = max((len(u) for u in uniq), default=1)
    table = np.zeros((d, width))
    codes = np.empty((d, n), dtype=np.int32)
    for j, u in enumerate(uniq):
        table[j, :len(u)] = u
        codes[j] = np.searchsorted(u, X[:, j])
    return codes, table


@dataclass
class Tree:
    feature: np.ndarray    # int32, -1 at leaves
    threshold: np.ndarray  # go left when x <= threshold
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray      # leaf score
    weight: np.ndarray     # training weight reaching each node

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        return _backend.kernels.apply(np.ascontiguousarray(X, dtype=np.float64),
                                      self.feature, self.threshold, self.left, self.right)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def node(self, i: int = 0) -> TreeNode:
        if self.feature[i] < 0:
            return Leaf(float(self.value[i]))
        return Split(int(self.feature[i]), float(self.threshold[i]),
                     self.node(int(self.left[i])), self.node(int(self.right[i])))


def row_layout(codes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-major codes and per-feature bin counts, shared by every tree of an ensemble."""
    n_bins = (codes.max(axis=1) + 1 if codes.shape[1] else np.ones(codes.shape[0])).astype(np.int32)
    return np.ascontiguousarray(codes.T), n_bins


def grow(codes, uniq, y, w, params: TreeParams, seed: int, criterion: int,
         layout: tuple[np.ndarray, np.ndarray] | None = None) -> tuple[Tree, np.ndarray]:
    rows = np.flatnonzero(w > 0).astype(np.int32)
    if len(rows) == 0:
        raise ValueError("cannot fit a tree on zero rows")
    d = codes.shape[0]
    max_features = d if params.max_features is None else min(params.max_features, d)
    out = _backend.kernels.build_tree(codes, uniq, np.ascontiguousarray(y, dtype=np.float64),
                                      np.ascontiguousarray(w, dtype=np.float64), rows,
                                      int(params.max_depth), float(params.min_leaf),
                                      int(max_features), int(seed) & ((1 << 64) - 1), criterion,
                                      *(layout or row_layout(codes)))
    feature, threshold, left, right, value, weight, row_leaf = out
    return Tree(feature, threshold, left, right, value, weight), row_leaf


def _criterion(name: str | None, y: np.ndarray) -> int:
    if name is None:
        name = "gini" if np.isin(y, (0.0, 1.0)).all() else "variance"
    try:
        return {"gini": GINI, "variance": VARIANCE}[name]
    except KeyError:
        raise ValueError(f"unknown criterion {name!r}") from None


def fit_tree(X, y, weights=None, params: TreeParams | None = None, seed: int = 0) -> Tree:
    """Greedy CART: Gini for 0/1 targets, variance reduction otherwise.

    Thresholds are midpoints between adjacent distinct values present in the
    node; ties go to the lowest feature index, then the lowest threshold.
    """
    params = params or TreeParams()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("fit_tree needs a non-empty 2-D X")
    if len(y) != X.shape[0]:
        raise ValueError("X and y lengths differ")
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=np.float64)
    codes, uniq = bin_columns(X)
    tree, _ = grow(codes, uniq, y, w, params, seed, _criterion(params.criterion, y))
    return tree
