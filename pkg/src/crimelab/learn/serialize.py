"""JSON model files.

Layout (version 1)::

    {"format": "crimelab-model", "version": 1, "kind": "forest"|"gbm"|"mlp", ...}

Floats are written with repr, so loading gives back bit-identical arrays.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .boost import BoostModel
from .forest import ForestModel
from .mlp import MlpModel
from .tree import Tree

FORMAT = "crimelab-model"
VERSION = 1


def _tree_to_dict(t: Tree) -> dict:
    return {"feature": t.feature.tolist(), "threshold": t.threshold.tolist(),
            "left": t.left.tolist(), "right": t.right.tolist(),
            "value": t.value.tolist(), "weight": t.weight.tolist()}


def _tree_from_dict(d: dict) -> Tree:
    return Tree(np.array(d["feature"], dtype=np.int32), np.array(d["threshold"], dtype=np.float64),
                np.array(d["left"], dtype=np.int32), np.array(d["right"], dtype=np.int32),
                np.array(d["value"], dtype=np.float64), np.array(d["weight"], dtype=np.float64))


def model_to_dict(model) -> dict:
    head = {"format": FORMAT, "version": VERSION}
    if isinstance(model, ForestModel):
        return head | {"kind": "forest", "n_features": model.n_features,
                       "tree_seeds": [str(s) for s in model.tree_seeds],
                       "trees": [_tree_to_dict(t) for t in model.trees]}
    if isinstance(model, BoostModel):
        return head | {"kind": "gbm", "init": model.init, "learning_rates": model.learning_rates,
                       "train_loss": model.train_loss,
                       "trees": [_tree_to_dict(t) for t in model.trees]}
    if isinstance(model, MlpModel):
        return head | {"kind": "mlp", "groups": model.groups,
                       "group_columns": {g: c.tolist() for g, c in model.group_columns.items()},
                       "mean": model.mean.tolist(), "scale": model.scale.tolist(),
                       "best_epoch": model.best_epoch,
                       "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                                  for k, v in model.params.items()}}
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_from_dict(d: dict):
    if d.get("format") != FORMAT:
        raise ValueError("not a crimelab model file")
    if d.get("version") != VERSION:
        raise ValueError(f"unsupported model version {d.get('version')}")
    kind = d["kind"]
    if kind == "forest":
        return ForestModel([_tree_from_dict(t) for t in d["trees"]],
                           [int(s) for s in d["tree_seeds"]], d["n_features"])
    if kind == "gbm":
        return BoostModel(d["init"], [_tree_from_dict(t) for t in d["trees"]],
                          list(d["learning_rates"]), list(d["train_loss"]))
    if kind == "mlp":
        return MlpModel(list(d["groups"]),
                        {g: np.array(c, dtype=np.int64) for g, c in d["group_columns"].items()},
                        np.array(d["mean"]), np.array(d["scale"]),
                        {k: np.array(v["data"], dtype=np.float64).reshape(v["shape"])
                         for k, v in d["params"].items()},
                        d["best_epoch"])
    raise ValueError(f"unknown model kind {kind!r}")


def save_model(model, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)) + "\n", encoding="utf-8")


def load_model(path: str | Path):
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
