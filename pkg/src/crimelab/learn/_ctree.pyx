# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled tree kernels; same contract and arithmetic order as _pytree.

Per-bin sums are accumulated in node row order whichever histogram layout a
node uses, so both backends build identical trees.
"""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int32_t, int64_t

cnp.import_array()

cdef double EPS = 1e-12
DEF GINI = 0
DEF VOTE = 0


cdef inline uint64_t splitmix_next(uint64_t* state) noexcept nogil:
    state[0] += <uint64_t>0x9E3779B97F4A7C15ULL
    cdef uint64_t z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double impurity(double sw, double swy, double swy2, int criterion) noexcept nogil:
    if criterion == GINI:
        return 2.0 * (swy - swy * swy / sw)
    return swy2 - swy * swy / sw


def build_tree(int32_t[:, ::1] codes, double[:, ::1] uniq, double[::1] y, double[::1] w,
               rows, int max_depth, double min_leaf, int max_features, uint64_t seed,
               int criterion, codes_rm=None, n_bins=None):
    """``codes_rm`` is the (n, d) row-major copy of ``codes`` and ``n_bins``
    the distinct-value count per feature; both are derived when omitted."""
    cdef Py_ssize_t d = codes.shape[0]
    cdef Py_ssize_t n = codes.shape[1]
    cdef Py_ssize_t n_rows = len(rows)
    if codes_rm is None:
        codes_rm = np.ascontiguousarray(np.asarray(codes).T)
    if n_bins is None:
        n_bins = np.asarray(codes).max(axis=1) + 1 if n else np.ones(d)
    cdef int32_t[:, ::1] crm = np.ascontiguousarray(codes_rm, dtype=np.int32)
    cdef int32_t[::1] nbins = np.ascontiguousarray(n_bins, dtype=np.int32)
    cdef int32_t[::1] buf = np.array(rows, dtype=np.int32)
    cdef int32_t[::1] tmp = np.empty(max(n_rows, 1), dtype=np.int32)
    cdef double[::1] wy = np.empty(n)
    cdef double[::1] wyy = np.empty(n)
    cdef Py_ssize_t i, j, r, k
    for i in range(n):
        wy[i] = w[i] * y[i]
        wyy[i] = w[i] * y[i] * y[i]

    cdef Py_ssize_t max_bins = uniq.shape[1]
    # interleaved (sw, swy, swy2) per (chosen feature slot, bin)
    cdef double[::1] H = np.zeros(3 * max_bins * max(d, 1))

    cdef Py_ssize_t cap = 2 * n_rows + 1
    cdef int32_t[::1] feature = np.full(cap, -1, dtype=np.int32)
    cdef double[::1] threshold = np.zeros(cap)
    cdef int32_t[::1] left = np.full(cap, -1, dtype=np.int32)
    cdef int32_t[::1] right = np.full(cap, -1, dtype=np.int32)
    cdef double[::1] value = np.zeros(cap)
    cdef double[::1] weight = np.zeros(cap)
    cdef int32_t[::1] row_leaf = np.full(n, -1, dtype=np.int32)
    cdef Py_ssize_t n_nodes = 1

    cdef int32_t[::1] perm = np.empty(d, dtype=np.int32)
    cdef int32_t[::1] feats = np.empty(d, dtype=np.int32)
    cdef Py_ssize_t k_feat = min(max_features, d)
    cdef Py_ssize_t n_feats
    cdef uint64_t state = seed

    cdef double[::1] nw = np.empty(max(n_rows, 1))
    cdef double[::1] nwy = np.empty(max(n_rows, 1))
    cdef double[::1] nwyy = np.empty(max(n_rows, 1))

    # explicit stack of (node, start, end, depth)
    cdef int64_t[:, ::1] stack = np.empty((cap + 1, 4), dtype=np.int64)
    cdef Py_ssize_t sp = 1
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n_rows
    stack[0, 3] = 0

    cdef Py_ssize_t node, start, end, depth, f, lo, hi, b, prev, best_f, best_lo, best_hi
    cdef Py_ssize_t mid, nl, m, bins_total, base, idx
    cdef double sw, swy, swy2, imp, best_gain, tol, lsw, lwy, lwyy, rsw, rwy, rwyy, gain, a0, a1, a2
    cdef int32_t tval
    cdef int32_t* cf
    cdef int32_t* cr
    cdef bint found, rowwise
    cdef bint gini = criterion == GINI

    with nogil:
        while sp > 0:
            sp -= 1
            node = stack[sp, 0]
            start = stack[sp, 1]
            end = stack[sp, 2]
            depth = stack[sp, 3]
            m = end - start

            sw = 0.0
            swy = 0.0
            swy2 = 0.0
            for i in range(start, end):
                r = buf[i]
                sw += w[r]
                swy += wy[r]
                swy2 += wyy[r]
            value[node] = swy / sw
            weight[node] = sw
            imp = impurity(sw, swy, swy2, criterion)

            # a later candidate must beat the current best by more than tol, so
            # exact ties broken by rounding keep the first (lowest) split
            tol = EPS * sw
            best_gain = 0.0
            found = False
            best_f = -1
            best_lo = -1
            best_hi = -1
            if depth < max_depth and sw >= 2.0 * min_leaf and imp > EPS * sw:
                if k_feat < d:
                    for i in range(d):
                        perm[i] = <int32_t>i
                    for i in range(k_feat):
                        j = i + <Py_ssize_t>(splitmix_next(&state) % <uint64_t>(d - i))
                        tval = perm[i]
                        perm[i] = perm[j]
                        perm[j] = tval
                    # insertion sort of the chosen features
                    for i in range(k_feat):
                        tval = perm[i]
                        j = i - 1
                        while j >= 0 and feats[j] > tval:
                            feats[j + 1] = feats[j]
                            j -= 1
                        feats[j + 1] = tval
                    n_feats = k_feat
                else:
                    for i in range(d):
                        feats[i] = <int32_t>i
                    n_feats = d

                for i in range(start, end):
                    r = buf[i]
                    nw[i - start] = w[r]
                    nwy[i - start] = wy[r]
                    nwyy[i - start] = wyy[r]

                # With every feature in play, large nodes fill all histograms in
                # one row-major pass. Otherwise go feature by feature and scan
                # only the bins touched (random row access hurts row-major).
                bins_total = 0
                for k in range(n_feats):
                    bins_total += nbins[feats[k]]
                rowwise = n_feats == d and m * n_feats >= 2 * bins_total
                if rowwise:
                    for i in range(m):
                        cr = &crm[buf[start + i], 0]
                        a0 = nw[i]
                        a1 = nwy[i]
                        a2 = nwyy[i]
                        if gini:
                            for k in range(n_feats):
                                idx = 3 * (k * max_bins + cr[feats[k]])
                                H[idx] += a0
                                H[idx + 1] += a1
                        else:
                            for k in range(n_feats):
                                idx = 3 * (k * max_bins + cr[feats[k]])
                                H[idx] += a0
                                H[idx + 1] += a1
                                H[idx + 2] += a2

                for k in range(n_feats):
                    f = feats[k]
                    if rowwise:
                        base = 3 * k * max_bins
                        lo = 0
                        hi = nbins[f] - 1
                    else:
                        base = 0
                        cf = &codes[f, 0]
                        lo = cf[buf[start]]
                        hi = lo
                        for i in range(m):
                            b = cf[buf[start + i]]
                            if b < lo:
                                lo = b
                            if b > hi:
                                hi = b
                            idx = 3 * b
                            H[idx] += nw[i]
                            H[idx + 1] += nwy[i]
                            if not gini:
                                H[idx + 2] += nwyy[i]
                    lsw = 0.0
                    lwy = 0.0
                    lwyy = 0.0
                    prev = -1
                    for b in range(lo, hi + 1):
                        idx = base + 3 * b
                        # weights are positive, so an empty bin has zero weight
                        if H[idx] == 0.0:
                            continue
                        if prev >= 0:
                            rsw = sw - lsw
                            if lsw >= min_leaf and rsw >= min_leaf:
                                rwy = swy - lwy
                                rwyy = swy2 - lwyy
                                gain = imp - impurity(lsw, lwy, lwyy, criterion) - impurity(rsw, rwy, rwyy, criterion)
                                if gain > best_gain + tol:
                                    best_gain = gain
                                    best_f = f
                                    best_lo = prev
                                    best_hi = b
                                    found = True
                        lsw = lsw + H[idx]
                        lwy = lwy + H[idx + 1]
                        lwyy = lwyy + H[idx + 2]
                        prev = b
                        H[idx] = 0.0
                        H[idx + 1] = 0.0
                        H[idx + 2] = 0.0

            if not found:
                for i in range(start, end):
                    row_leaf[buf[i]] = <int32_t>node
                continue

            # stable partition
            nl = 0
            cf = &codes[best_f, 0]
            for i in range(start, end):
                r = buf[i]
                if cf[r] <= best_lo:
                    buf[start + nl] = <int32_t>r
                    nl += 1
                else:
                    tmp[i - start - nl] = <int32_t>r
            for i in range(end - start - nl):
                buf[start + nl + i] = tmp[i]
            mid = start + nl

            feature[node] = <int32_t>best_f
            threshold[node] = 0.5 * (uniq[best_f, best_lo] + uniq[best_f, best_hi])
            # the midpoint of adjacent floats can round up onto the upper value
            if threshold[node] >= uniq[best_f, best_hi]:
                threshold[node] = uniq[best_f, best_lo]
            left[node] = <int32_t>n_nodes
            right[node] = <int32_t>(n_nodes + 1)
            stack[sp, 0] = n_nodes + 1
            stack[sp, 1] = mid
            stack[sp, 2] = end
            stack[sp, 3] = depth + 1
            sp += 1
            stack[sp, 0] = n_nodes
            stack[sp, 1] = start
            stack[sp, 2] = mid
            stack[sp, 3] = depth + 1
            sp += 1
            n_nodes += 2

    return (np.asarray(feature[:n_nodes]).copy(), np.asarray(threshold[:n_nodes]).copy(),
            np.asarray(left[:n_nodes]).copy(), np.asarray(right[:n_nodes]).copy(),
            np.asarray(value[:n_nodes]).copy(), np.asarray(weight[:n_nodes]).copy(),
            np.asarray(row_leaf))


def apply(X, int32_t[::1] feature, double[::1] threshold, int32_t[::1] left,
          int32_t[::1] right, Py_ssize_t root=0):
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = Xv.shape[0]
    cdef int64_t[::1] out = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t i, nd
    with nogil:
        for i in range(n):
            nd = root
            while feature[nd] >= 0:
                if Xv[i, feature[nd]] <= threshold[nd]:
                    nd = left[nd]
                else:
                    nd = right[nd]
            out[i] = nd
    return np.asarray(out)


def predict_sum(X, int32_t[::1] feature, double[::1] threshold, int32_t[::1] left,
                int32_t[::1] right, double[::1] value, roots, double init, int mode):
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef int64_t[::1] rv = np.asarray(roots, dtype=np.int64)
    cdef Py_ssize_t n = Xv.shape[0]
    cdef Py_ssize_t n_trees = rv.shape[0]
    cdef double[::1] out = np.empty(n)
    cdef Py_ssize_t i, t, nd, r0
    cdef double v
    # tree-outer keeps one tree in cache; each row still sums trees in order
    with nogil:
        for i in range(n):
            out[i] = init
        for t in range(n_trees):
            r0 = rv[t]
            for i in range(n):
                nd = 0
                while feature[r0 + nd] >= 0:
                    if Xv[i, feature[r0 + nd]] <= threshold[r0 + nd]:
                        nd = left[r0 + nd]
                    else:
                        nd = right[r0 + nd]
                v = value[r0 + nd]
                if mode == VOTE:
                    if v > 0.5:
                        out[i] = out[i] + 1.0
                else:
                    out[i] = out[i] + v
    return np.asarray(out)
