"""NumPy implementation of the tree kernels.

Used when the compiled extension is unavailable. Floating-point sums are
accumulated in the same order as the compiled kernel, so both backends
build identical trees.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
EPS = 1e-12
GINI, VARIANCE = 0, 1
VOTE, SUM = 0, 1


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)


def _impurity(sw, swy, swy2, criterion):
    if criterion == GINI:
        return 2.0 * (swy - swy * swy / sw)
    return swy2 - swy * swy / sw


def build_tree(codes, uniq, y, w, rows, max_depth, min_leaf, max_features, seed, criterion,
               codes_rm=None, n_bins=None):
    """Grow one CART tree depth-first.

    codes     int32 (d, n) per-feature rank codes of the training rows
    uniq      float64 (d, max_bins) sorted unique values per feature (padded)
    y, w      float64 (n,) targets and positive weights
    rows      int32 rows taking part (weight > 0)

    Returns (feature, threshold, left, right, value, weight, row_leaf).
    """
    d, n = codes.shape
    wy = w * y
    wyy = w * y * y
    buf = np.array(rows, dtype=np.int32)
    rng = SplitMix64(seed)
    k_feat = min(max_features, d)

    feature, threshold, left, right, value, weight = [-1], [0.0], [-1], [-1], [0.0], [0.0]
    row_leaf = np.full(n, -1, dtype=np.int32)
    stack = [(0, 0, len(buf), 0)]
    while stack:
        node, start, end, depth = stack.pop()
        seg = buf[start:end]
        sw = np.cumsum(w[seg])[-1]
        swy = np.cumsum(wy[seg])[-1]
        swy2 = np.cumsum(wyy[seg])[-1]
        value[node] = float(swy / sw)
        weight[node] = float(sw)
        imp = _impurity(sw, swy, swy2, criterion)

        # a later candidate must beat the current best by more than tol, so
        # exact ties broken by rounding keep the first (lowest) split
        tol = EPS * sw
        best_gain, best = 0.0, None
        if depth < max_depth and sw >= 2.0 * min_leaf and imp > EPS * sw:
            if k_feat < d:
                perm = list(range(d))
                for i in range(k_feat):
                    j = i + rng.next() % (d - i)
                    perm[i], perm[j] = perm[j], perm[i]
                feats = sorted(perm[:k_feat])
            else:
                feats = range(d)
            for f in feats:
                c = codes[f, seg]
                lo = int(c.min())
                c = c - lo
                nb = int(c.max()) + 1
                cnt = np.bincount(c, minlength=nb)
                nz = np.flatnonzero(cnt)
                if len(nz) < 2:
                    continue
                hsw = np.bincount(c, weights=w[seg], minlength=nb)[nz]
                hwy = np.bincount(c, weights=wy[seg], minlength=nb)[nz]
                hwyy = np.bincount(c, weights=wyy[seg], minlength=nb)[nz]
                lsw = np.cumsum(hsw)[:-1]
                lwy = np.cumsum(hwy)[:-1]
                lwyy = np.cumsum(hwyy)[:-1]
                rsw = sw - lsw
                rwy = swy - lwy
                rwyy = swy2 - lwyy
                ok = (lsw >= min_leaf) & (rsw >= min_leaf)
                if not ok.any():
                    continue
                with np.errstate(divide="ignore", invalid="ignore"):
                    gain = imp - _impurity(lsw, lwy, lwyy, criterion) - _impurity(rsw, rwy, rwyy, criterion)
                gain = np.where(ok, gain, -np.inf)
                for i in np.flatnonzero(gain > best_gain + tol):
                    if gain[i] > best_gain + tol:
                        best_gain = gain[i]
                        best = (f, lo + int(nz[i]), lo + int(nz[i + 1]))

        if best is None:
            row_leaf[seg] = node
            continue
        f, b_lo, b_hi = best
        go_left = codes[f, seg] <= b_lo
        buf[start:end] = np.concatenate([seg[go_left], seg[~go_left]])
        mid = start + int(go_left.sum())
        l_id, r_id = len(feature), len(feature) + 1
        feature[node] = f
        thr = 0.5 * (uniq[f, b_lo] + uniq[f, b_hi])
        # the midpoint of adjacent floats can round up onto the upper value
        threshold[node] = float(thr if thr < uniq[f, b_hi] else uniq[f, b_lo])
        left[node], right[node] = l_id, r_id
        for _ in range(2):
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(0.0)
            weight.append(0.0)
        stack.append((r_id, mid, end, depth + 1))
        stack.append((l_id, start, mid, depth + 1))

    return (np.array(feature, dtype=np.int32), np.array(threshold), np.array(left, dtype=np.int32),
            np.array(right, dtype=np.int32), np.array(value), np.array(weight), row_leaf)


def apply(X, feature, threshold, left, right, root=0):
    """Leaf index reached by every row of X."""
    node = np.full(X.shape[0], root, dtype=np.int64)
    active = feature[node] >= 0
    while active.any():
        idx = np.flatnonzero(active)
        nd = node[idx]
        go_left = X[idx, feature[nd]] <= threshold[nd]
        node[idx] = np.where(go_left, left[nd], right[nd])
        active[idx] = feature[node[idx]] >= 0
    return node


def predict_sum(X, feature, threshold, left, right, value, roots, init, mode):
    """Sum over trees of leaf values (SUM) or of leaf votes value > 0.5 (VOTE).

    Node arrays hold all trees back to back; ``roots`` are the start offsets
    and child indices are relative to their tree's root.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    out = np.full(X.shape[0], float(init))
    ends = list(roots[1:]) + [len(feature)]
    for r0, r1 in zip(roots, ends):
        leaf = apply(X, feature[r0:r1], threshold[r0:r1], left[r0:r1], right[r0:r1])
        v = value[r0:r1][leaf]
        out += (v > 0.5).astype(np.float64) if mode == VOTE else v
    return out
