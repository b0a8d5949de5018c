from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from . import _backend
from ._backend import GINI, VOTE
from .tree import Tree, TreeParams, bin_columns, grow


@dataclass
class ForestParams:
    n_trees: int = 200
    max_depth: int = 20
    max_features: int | str | None = "sqrt"
    min_leaf: float = 1.0
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")

    def features_for(self, d: int) -> int:
        if self.max_features is None:
            return d
        if self.max_features == "sqrt":
            return max(1, math.ceil(math.sqrt(d)))
        if isinstance(self.max_features, str):
            raise ValueError(f"unknown max_features {self.max_features!r}")
        return max(1, min(int(self.max_features), d))


@dataclass
class ForestModel:
    trees: list[Tree]
    tree_seeds: list[int]
    n_features: int
    _packed: tuple | None = field(default=None, repr=False, compare=False)

    def _pack(self):
        if self._packed is None:
            self._packed = pack_trees(self.trees)
        return self._packed

    def predict_proba(self, X) -> np.ndarray:
        """Fraction of trees voting for class 1."""
        feature, threshold, left, right, value, roots = self._pack()
        votes = _backend.kernels.predict_sum(np.ascontiguousarray(X, dtype=np.float64), feature,
                                             threshold, left, right, value, roots, 0.0, VOTE)
        return votes / len(self.trees)


def pack_trees(trees: list[Tree]):
    roots = np.cumsum([0] + [t.n_nodes for t in trees[:-1]]).astype(np.int64)
    cat = lambda attr: np.ascontiguousarray(np.concatenate([getattr(t, attr) for t in trees]))
    return (cat("feature").astype(np.int32), cat("threshold"), cat("left").astype(np.int32),
            cat("right").astype(np.int32), cat("value"), roots)


def tree_seeds(seed: int, n: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(n)


def _fit_one(codes, uniq, y, params: ForestParams, ss: np.random.SeedSequence):
    n = len(y)
    if params.bootstrap:
        rng = np.random.default_rng(ss)
        w = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(np.float64)
    else:
        w = np.ones(n)
    kseed = int(ss.generate_state(1, dtype=np.uint64)[0])
    tp = TreeParams(params.max_depth, params.min_leaf, params.features_for(codes.shape[0]))
    tree, _ = grow(codes, uniq, y, w, tp, kseed, GINI)
    return tree, kseed


def fit_forest(X, y, params: ForestParams | None = None, seed: int = 0, jobs: int = 1) -> ForestModel:
    """Random forest of Gini trees on bootstrap samples.

    Every tree owns a seed spawned from ``seed``, so the model does not
    depend on ``jobs``.
    """
    params = params or ForestParams()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("cannot fit a forest on zero rows")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("forest labels must be 0/1")
    codes, uniq = bin_columns(X)
    seeds = tree_seeds(seed, params.n_trees)
    if jobs == 1:
        out = [_fit_one(codes, uniq, y, params, ss) for ss in seeds]
    else:
        out = Parallel(n_jobs=jobs, prefer="threads")(
            delayed(_fit_one)(codes, uniq, y, params, ss) for ss in seeds)
    return ForestModel([t for t, _ in out], [s for _, s in out], X.shape[1])
