"""Compiled kernels for best-first growth of weighted binary classification trees."""
import math

import numba
import numpy as np

GINI = 0
ENTROPY = 1

# relative tolerance under which two impurity decreases count as tied
GAIN_RTOL = 1e-12


@numba.njit(cache=True, nogil=True)
def impurity(w0, w1, criterion):
    total = w0 + w1
    p0 = w0 / total
    p1 = w1 / total
    if criterion == GINI:
        return 1.0 - p0 * p0 - p1 * p1
    h = 0.0
    if p0 > 0.0:
        h -= p0 * math.log2(p0)
    if p1 > 0.0:
        h -= p1 * math.log2(p1)
    return h


@numba.njit(cache=True, nogil=True)
def _splitmix64(state):
    state = (state + np.uint64(0x9E3779B97F4A7C15))
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return state, z ^ (z >> np.uint64(31))


@numba.njit(cache=True, nogil=True)
def _draw_features(seed, node, d, k, pool, out):
    # stream keyed by (seed, node id) so draws don't depend on which nodes were searched
    state = seed ^ (np.uint64(node) * np.uint64(0xD1B54A32D192ED03))
    state, _ = _splitmix64(state)
    # partial Fisher-Yates over a reset pool, then sort for deterministic tie order
    for j in range(d):
        pool[j] = j
    for j in range(k):
        state, r = _splitmix64(state)
        pick = j + np.int64(r % np.uint64(d - j))
        tmp = pool[j]
        pool[j] = pool[pick]
        pool[pick] = tmp
    out[:k] = np.sort(pool[:k])


@numba.njit(cache=True, nogil=True)
def _best_split(Xt, y, w, cnt, idx, start, end, feats, k, w0, w1, count,
                min_leaf, criterion):
    """Best (feature, threshold, gain) for one node; gain -1 when unsplittable."""
    m = end - start
    total = w0 + w1
    parent = total * impurity(w0, w1, criterion)
    tol = GAIN_RTOL * total
    best_gain = -1.0
    best_f = -1
    best_thr = 0.0
    vals = np.empty(m)
    for fi in range(k):
        f = feats[fi]
        for i in range(m):
            vals[i] = Xt[f, idx[start + i]]
        order = np.argsort(vals, kind="mergesort")
        lw0 = 0.0
        lw1 = 0.0
        lc = 0
        for i in range(m - 1):
            r = idx[start + order[i]]
            if y[r] == 1:
                lw1 += w[r]
            else:
                lw0 += w[r]
            lc += cnt[r]
            v = vals[order[i]]
            vn = vals[order[i + 1]]
            if not v < vn:
                continue
            rc = count - lc
            if lc < min_leaf or rc < min_leaf:
                continue
            rw0 = w0 - lw0
            rw1 = w1 - lw1
            lt = lw0 + lw1
            rt = rw0 + rw1
            if lt <= 0.0 or rt <= 0.0:
                continue
            gain = parent - lt * impurity(lw0, lw1, criterion) - rt * impurity(rw0, rw1, criterion)
            if gain > best_gain + tol:
                best_gain = gain
                best_f = f
                thr = v + (vn - v) * 0.5
                if not thr < vn:
                    thr = v
                best_thr = thr
    if best_gain <= tol:
        return -1, 0.0, -1.0
    return best_f, best_thr, best_gain


@numba.njit(cache=True, nogil=True)
def grow_tree(Xt, y, w, cnt, rows, max_leaves, max_depth, min_split, min_leaf,
              criterion, max_features, seed):
    """Grow one tree best-first over the examples listed in ``rows``.

    Returns node arrays (feature, threshold, left, right, p0, p1, depth,
    weight, count); leaves have feature -1.
    """
    d = Xt.shape[0]
    n_rows = rows.size
    max_nodes = min(2 * max_leaves - 1, 2 * n_rows - 1)
    if max_nodes < 1:
        max_nodes = 1
    idx = rows.copy()
    tmp = np.empty(n_rows, dtype=np.int64)

    feature = np.full(max_nodes, -1, dtype=np.int64)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    depth = np.zeros(max_nodes, dtype=np.int64)
    start = np.zeros(max_nodes, dtype=np.int64)
    end = np.zeros(max_nodes, dtype=np.int64)
    W0 = np.zeros(max_nodes)
    W1 = np.zeros(max_nodes)
    count = np.zeros(max_nodes, dtype=np.int64)
    cand_f = np.full(max_nodes, -1, dtype=np.int64)
    cand_thr = np.zeros(max_nodes)
    cand_gain = np.full(max_nodes, -1.0)
    frontier = np.zeros(max_nodes, dtype=np.bool_)

    k = max_features
    pool = np.empty(d, dtype=np.int64)
    feats = np.empty(k, dtype=np.int64)
    seed = np.uint64(seed)

    n_nodes = 1
    end[0] = n_rows
    for i in range(n_rows):
        r = idx[i]
        if y[r] == 1:
            W1[0] += w[r]
        else:
            W0[0] += w[r]
        count[0] += cnt[r]
    frontier[0] = True
    if count[0] >= min_split and max_depth > 0:
        _draw_features(seed, 0, d, k, pool, feats)
        cand_f[0], cand_thr[0], cand_gain[0] = _best_split(
            Xt, y, w, cnt, idx, 0, n_rows, feats, k, W0[0], W1[0], count[0], min_leaf, criterion)

    n_leaves = 1
    while n_leaves < max_leaves and n_nodes + 2 <= max_nodes:
        best = -1
        best_gain = -1.0
        for node in range(n_nodes):
            if frontier[node] and cand_f[node] >= 0:
                g = cand_gain[node]
                if best < 0 or g > best_gain + GAIN_RTOL * (W0[node] + W1[node]):
                    best = node
                    best_gain = g
        if best < 0:
            break
        f = cand_f[best]
        thr = cand_thr[best]
        s = start[best]
        e = end[best]
        nl = 0
        nr = 0
        for i in range(s, e):
            r = idx[i]
            if Xt[f, r] <= thr:
                idx[s + nl] = r
                nl += 1
            else:
                tmp[nr] = r
                nr += 1
        for i in range(nr):
            idx[s + nl + i] = tmp[i]

        feature[best] = f
        threshold[best] = thr
        frontier[best] = False
        for side in range(2):
            c = n_nodes
            n_nodes += 1
            if side == 0:
                left[best] = c
                start[c] = s
                end[c] = s + nl
            else:
                right[best] = c
                start[c] = s + nl
                end[c] = e
            depth[c] = depth[best] + 1
            for i in range(start[c], end[c]):
                r = idx[i]
                if y[r] == 1:
                    W1[c] += w[r]
                else:
                    W0[c] += w[r]
                count[c] += cnt[r]
            frontier[c] = True
            if count[c] >= min_split and depth[c] < max_depth:
                _draw_features(seed, c, d, k, pool, feats)
                cand_f[c], cand_thr[c], cand_gain[c] = _best_split(
                    Xt, y, w, cnt, idx, start[c], end[c], feats, k, W0[c], W1[c], count[c],
                    min_leaf, criterion)
        n_leaves += 1

    p0 = np.empty(n_nodes)
    p1 = np.empty(n_nodes)
    for node in range(n_nodes):
        tw = W0[node] + W1[node]
        p1[node] = W1[node] / tw
        p0[node] = 1.0 - p1[node]
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), p0, p1, depth[:n_nodes].copy(), (W0 + W1)[:n_nodes].copy(),
            count[:n_nodes].copy())


@numba.njit(cache=True, nogil=True)
def predict_tree(X, feature, threshold, left, right, p1):
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = p1[node]
    return out
