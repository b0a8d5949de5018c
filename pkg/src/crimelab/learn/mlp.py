"""Feature-level fusion network with sigmoid units.

Each feature group passes through its own encoder layer; the encodings are
concatenated and fed through two joint layers to a single sigmoid output.
Trained with mini-batch SGD plus momentum on binary cross-entropy.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Sequence

import numpy as np


def expit(x: np.ndarray) -> np.ndarray:
    """Logistic function, computed in place on a fresh array.

    Several times faster than scipy's ufunc on wide activations and within
    a few ulp of it; exp overflow for very negative inputs correctly gives 0.
    """
    out = np.negative(x)
    with np.errstate(over="ignore"):
        np.exp(out, out=out)
    out += 1.0
    np.reciprocal(out, out=out)
    return out


@dataclass
class MlpParams:
    encoder_width: int = 32
    joint_widths: tuple[int, ...] = (64, 32)
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 256
    epochs: int = 300

    def __post_init__(self):
        self.joint_widths = tuple(self.joint_widths)
        if self.encoder_width < 1 or any(w < 1 for w in self.joint_widths):
            raise ValueError("layer widths must be positive")
        if not self.learning_rate > 0 or not 0 <= self.momentum < 1:
            raise ValueError("bad learning rate or momentum")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("bad batch size or epoch count")


@dataclass
class MlpModel:
    groups: list[str]
    group_columns: dict[str, np.ndarray]
    mean: np.ndarray
    scale: np.ndarray
    params: dict[str, np.ndarray]
    best_epoch: int = 0

    def _layers(self) -> list[str]:
        names, k = [], 1
        while f"joint{k}_W" in self.params:
            names.append(f"joint{k}")
            k += 1
        return names + ["out"]

    def _forward(self, X: np.ndarray):
        Z = (X - self.mean) / self.scale
        enc = {}
        for g in self.groups:
            Xg = Z[:, self.group_columns[g]]
            enc[g] = (Xg, expit(Xg @ self.params[f"enc_{g}_W"] + self.params[f"enc_{g}_b"]))
        h = np.concatenate([enc[g][1] for g in self.groups], axis=1)
        acts = [h]
        layers = self._layers()
        for name in layers[:-1]:
            h = expit(h @ self.params[f"{name}_W"] + self.params[f"{name}_b"])
            acts.append(h)
        z = (h @ self.params["out_W"] + self.params["out_b"])[:, 0]
        return enc, acts, z

    def decision_function(self, X) -> np.ndarray:
        return self._forward(np.asarray(X, dtype=np.float64))[2]

    def predict_proba(self, X) -> np.ndarray:
        return expit(self.decision_function(X))

    def loss_and_grads(self, X, y) -> tuple[float, dict[str, np.ndarray]]:
        """Mean binary cross-entropy on a batch and its gradient for every weight."""
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        enc, acts, z = self._forward(X)
        n = len(y)
        loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
        grads: dict[str, np.ndarray] = {}
        delta = ((expit(z) - y) / n)[:, None]
        layers = self._layers()
        for k in range(len(layers) - 1, -1, -1):
            name = layers[k]
            a_in = acts[k]
            grads[f"{name}_W"] = a_in.T @ delta
            grads[f"{name}_b"] = delta.sum(axis=0)
            delta = (delta @ self.params[f"{name}_W"].T) * a_in * (1 - a_in)
        # delta is now the gradient at the encoder pre-activations
        off = 0
        for g in self.groups:
            Xg, hg = enc[g]
            width = hg.shape[1]
            dg = delta[:, off:off + width]
            grads[f"enc_{g}_W"] = Xg.T @ dg
            grads[f"enc_{g}_b"] = dg.sum(axis=0)
            off += width
        return loss, grads


class _GroupedScorer:
    """Scores one fixed matrix repeatedly as the weights change.

    Rows often repeat within a feature group (region-level groups take one
    value per region), so each encoder runs on the distinct rows of its group
    and its contribution to the first joint layer is gathered back per row.
    """

    def __init__(self, model: MlpModel, X: np.ndarray):
        Z = (np.asarray(X, dtype=np.float64) - model.mean) / model.scale
        self.model = model
        self.parts = []
        for g in model.groups:
            uniq, inverse = np.unique(Z[:, model.group_columns[g]], axis=0, return_inverse=True)
            self.parts.append((g, uniq, inverse.reshape(-1)))

    def predict_proba(self) -> np.ndarray:
        p = self.model.params
        layers = self.model._layers()
        first = layers[0]
        W = p[f"{first}_W"]
        h = np.broadcast_to(p[f"{first}_b"], (len(self.parts[0][2]), W.shape[1])).copy()
        off = 0
        for g, uniq, inverse in self.parts:
            enc = expit(uniq @ p[f"enc_{g}_W"] + p[f"enc_{g}_b"])
            width = enc.shape[1]
            h += (enc @ W[off:off + width])[inverse]
            off += width
        if first == "out":
            return expit(h[:, 0])
        h = expit(h)
        for name in layers[1:-1]:
            h = expit(h @ p[f"{name}_W"] + p[f"{name}_b"])
        return expit((h @ p["out_W"] + p["out_b"])[:, 0])


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_mlp(X, group_tags: Sequence[str], params: MlpParams, seed: int = 0) -> MlpModel:
    X = np.asarray(X, dtype=np.float64)
    tags = np.asarray(group_tags)
    groups = list(dict.fromkeys(group_tags))
    cols = {g: np.flatnonzero(tags == g) for g in groups}
    for g, c in cols.items():
        if len(c) == 0:
            raise ValueError(f"feature group {g!r} is empty")
    if not groups:
        raise ValueError("no feature groups")
    mean = X.mean(axis=0) if len(X) else np.zeros(X.shape[1])
    scale = X.std(axis=0) if len(X) else np.ones(X.shape[1])
    scale = np.where(scale > 0, scale, 1.0)
    rng = np.random.default_rng(seed)
    w: dict[str, np.ndarray] = {}
    for g in groups:
        w[f"enc_{g}_W"] = _glorot(rng, len(cols[g]), params.encoder_width)
        w[f"enc_{g}_b"] = np.zeros(params.encoder_width)
    fan = params.encoder_width * len(groups)
    for k, width in enumerate(params.joint_widths, start=1):
        w[f"joint{k}_W"] = _glorot(rng, fan, width)
        w[f"joint{k}_b"] = np.zeros(width)
        fan = width
    w["out_W"] = _glorot(rng, fan, 1)
    w["out_b"] = np.zeros(1)
    return MlpModel(groups, cols, mean, scale, w)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    accuracy: float
    precision: float
    recall: float
    f_score: float


def fit_mlp(X, group_tags: Sequence[str], y, params: MlpParams | None = None, seed: int = 0,
            test_set: tuple[np.ndarray, np.ndarray] | None = None, threshold: float = 0.5
            ) -> tuple[MlpModel, list[EpochStats]]:
    """Train the fusion network, scoring the test set after every epoch.

    The returned model carries the weights of the epoch with the best test
    accuracy (the final epoch when no test set is given); ``trace`` holds the
    per-epoch test metrics in percent.
    """
    from ..eval.metrics import confusion, metrics

    params = params or MlpParams()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    model = init_mlp(X, group_tags, params, seed)
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
    trace: list[EpochStats] = []
    best_acc, best_params = -1.0, None
    n = len(y)
    scorer = _GroupedScorer(model, test_set[0]) if test_set is not None else None
    for epoch in range(1, params.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, params.batch_size):
            idx = order[s:s + params.batch_size]
            loss, grads = model.loss_and_grads(X[idx], y[idx])
            total += loss * len(idx)
            for k, g in grads.items():
                velocity[k] = params.momentum * velocity[k] - params.learning_rate * g
                model.params[k] += velocity[k]
        if test_set is None:
            continue
        pred = (scorer.predict_proba() >= threshold).astype(int)
        m = metrics(*confusion(test_set[1], pred))
        trace.append(EpochStats(epoch, total / max(n, 1), m["accuracy"], m["precision"],
                                m["recall"], m["f_score"]))
        if m["accuracy"] > best_acc:
            best_acc = m["accuracy"]
            best_params = copy.deepcopy(model.params)
            model.best_epoch = epoch
    if best_params is not None:
        model.params = best_params
    elif params.epochs:
        model.best_epoch = params.epochs
    return model, trace

