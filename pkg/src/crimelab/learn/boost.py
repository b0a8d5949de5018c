from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import _backend
from ._backend import SUM, VARIANCE
from .forest import pack_trees
from .tree import Tree, TreeParams, bin_columns, grow, row_layout


@dataclass
class BoostParams:
    n_rounds: int = 200
    learning_rate: float = 0.1
    max_depth: int = 3
    subsample: float = 1.0
    min_leaf: float = 1.0

    def __post_init__(self):
        if self.n_rounds < 0:
            raise ValueError("n_rounds must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0 < self.subsample <= 1:
            raise ValueError("subsample must be in (0, 1]")


@dataclass
class BoostModel:
    init: float                       # log-odds of the training base rate
    trees: list[Tree]                 # leaf values are raw Newton steps
    learning_rates: list[float]
    train_loss: list[float] = field(default_factory=list)
    _packed: tuple | None = field(default=None, repr=False, compare=False)

    def _pack(self):
        if self._packed is None:
            if not self.trees:
                self._packed = ()
            else:
                scaled = [Tree(t.feature, t.threshold, t.left, t.right, t.value * lr, t.weight)
                          for t, lr in zip(self.trees, self.learning_rates)]
                self._packed = pack_trees(scaled)
        return self._packed

    def decision_function(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if not self.trees:
            return np.full(X.shape[0], self.init)
        feature, threshold, left, right, value, roots = self._pack()
        return _backend.kernels.predict_sum(X, feature, threshold, left, right, value, roots,
                                            self.init, SUM)

    def predict_proba(self, X) -> np.ndarray:
        return expit(self.decision_function(X))


def log_loss(y: np.ndarray, score: np.ndarray) -> float:
    """Mean logistic loss of raw scores."""
    return float(np.mean(np.logaddexp(0.0, score) - y * score))


def fit_gbm(X, y, params: BoostParams | None = None, seed: int = 0) -> BoostModel:
    """Gradient boosting on logistic loss.

    Each round fits a variance tree to the residuals y - p, then sets every
    leaf to one Newton step sum(y - p) / sum(p (1 - p)), shrunk by the
    learning rate.
    """
    params = params or BoostParams()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("cannot fit boosting on zero rows")
    base = y.mean()
    if not np.isin(y, (0.0, 1.0)).all() or base in (0.0, 1.0):
        raise ValueError("boosting needs 0/1 labels with both classes present")
    init = float(np.log(base / (1 - base)))
    n = len(y)
    codes, uniq = bin_columns(X)
    layout = row_layout(codes)
    rng = np.random.default_rng(seed)
    tp = TreeParams(params.max_depth, params.min_leaf, None)
    F = np.full(n, init)
    trees, rates, losses = [], [], [log_loss(y, F)]
    n_sub = max(1, int(round(params.subsample * n)))
    for _ in range(params.n_rounds):
        p = expit(F)
        resid = y - p
        if n_sub < n:
            w = np.zeros(n)
            w[rng.choice(n, size=n_sub, replace=False)] = 1.0
        else:
            w = np.ones(n)
        kseed = int(rng.integers(0, 2**63))
        tree, row_leaf = grow(codes, uniq, resid, w, tp, kseed, VARIANCE, layout)
        used = row_leaf >= 0
        num = np.bincount(row_leaf[used], weights=resid[used], minlength=tree.n_nodes)
        den = np.bincount(row_leaf[used], weights=(p * (1 - p))[used], minlength=tree.n_nodes)
        step = np.zeros(tree.n_nodes)
        np.divide(num, den, out=step, where=den > 1e-12)
        step[~tree.is_leaf] = 0.0
        tree.value = step
        # without subsampling every row already knows its leaf
        leaf = row_leaf if n_sub == n else tree.apply(X)
        F = F + params.learning_rate * step[leaf]
        trees.append(tree)
        rates.append(params.learning_rate)
        losses.append(log_loss(y, F))
    return BoostModel(init, trees, rates, losses)
