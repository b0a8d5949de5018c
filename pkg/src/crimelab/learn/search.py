from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Any, Callable, Mapping, Sequence

import numpy as np


@dataclass
class SearchResult:
    best: dict[str, Any]
    best_score: float
    scores: list[tuple[dict[str, Any], float]]


def expand_grid(grid: Mapping[str, Sequence[Any]] | Sequence[Mapping[str, Any]]) -> list[dict]:
    """All configurations of a grid, keys in sorted order.

    A grid is a mapping of name -> candidate values, or an explicit list of
    configurations.
    """
    if isinstance(grid, Mapping):
        keys = sorted(grid)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]
    return [dict(c) for c in grid]


def random_search(fit_fn: Callable[[dict], Any], grid, n_samples: int,
                  train: tuple[np.ndarray, np.ndarray], validation: tuple[np.ndarray, np.ndarray],
                  seed: int = 0, threshold: float = 0.5) -> SearchResult:
    """Sample configurations without replacement and keep the best validation F-score.

    ``fit_fn(config, X, y)`` must return a model with ``predict_proba``.
    Ties keep the configuration that comes first in grid order.
    """
    from ..eval.metrics import confusion, metrics

    configs = expand_grid(grid)
    if not configs:
        raise ValueError("search grid is empty")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    if n_samples >= len(configs):
        picks = list(range(len(configs)))
    else:
        picks = sorted(rng.choice(len(configs), size=n_samples, replace=False).tolist())
    X_val, y_val = validation
    scores = []
    for i in picks:
        model = fit_fn(configs[i], *train)
        pred = (model.predict_proba(X_val) >= threshold).astype(int)
        scores.append((configs[i], metrics(*confusion(y_val, pred))["f_score"]))
    best_cfg, best_score = scores[0]
    for cfg, s in scores[1:]:
        if s > best_score:
            best_cfg, best_score = cfg, s
    return SearchResult(best_cfg, best_score, scores)
