"""Compiled inner loops for histogram tree growth and tree traversal.

Binned features are uint8 with code 255 reserved for missing values, so a
feature has at most 255 real bins.  All loops run in a fixed order; results
do not depend on scheduling.
"""
import numpy as np
from numba import njit

MISSING_BIN = 255
N_HIST = 256


@njit(cache=True)
def bin_edges(values, max_bins, min_data_in_bin):
    """Upper bin edges for one feature from its finite training values.

    Equal-frequency bins, each holding at least ``min_data_in_bin`` samples
    (the last bin is merged into its neighbour when it falls short).  Edges
    sit halfway between consecutive distinct values.
    """
    x = np.sort(values[np.isfinite(values)])
    n = x.shape[0]
    if n == 0:
        return np.zeros(0)
    target = max(n / max_bins, float(min_data_in_bin))
    edges = np.empty(max_bins)
    n_edges = 0
    acc = 0
    last_count = 0
    i = 0
    while i < n:
        j = i
        while j + 1 < n and x[j + 1] == x[i]:
            j += 1
        acc += j - i + 1
        if j + 1 < n and acc >= target and n_edges < max_bins - 1:
            lo = x[j]
            hi = x[j + 1]
            e = lo + (hi - lo) / 2
            if e >= hi:
                e = lo
            edges[n_edges] = e
            n_edges += 1
            acc = 0
        i = j + 1
    last_count = acc
    if n_edges > 0 and last_count < min_data_in_bin:
        n_edges -= 1
    return edges[:n_edges].copy()


@njit(cache=True)
def apply_bins(column, edges, out, col):
    """Bin index of each value: edges[b-1] < x <= edges[b]; NaN -> MISSING_BIN."""
    for i in range(column.shape[0]):
        v = column[i]
        if np.isnan(v):
            out[i, col] = MISSING_BIN
        else:
            lo = 0
            hi = edges.shape[0]
            while lo < hi:
                mid = (lo + hi) // 2
                if edges[mid] < v:
                    lo = mid + 1
                else:
                    hi = mid
            out[i, col] = lo


@njit(cache=True)
def _histogram(Xb, idx, start, end, g, h, hist):
    """hist[f, b] <- (sum g, sum h, count) over rows idx[start:end]."""
    hist[:, :, :] = 0.0
    nf = Xb.shape[1]
    for p in range(start, end):
        i = idx[p]
        gi = g[i]
        hi = h[i]
        for f in range(nf):
            b = Xb[i, f]
            hist[f, b, 0] += gi
            hist[f, b, 1] += hi
            hist[f, b, 2] += 1.0


@njit(cache=True)
def _best_split(hist, nbins, G, H, C, min_child, min_hess):
    parent = G * G / H
    best_gain = 1e-9 * (1.0 + abs(parent))
    best_f = -1
    best_b = -1
    best_dl = True
    for f in range(hist.shape[0]):
        nb = nbins[f]
        if nb < 2:
            continue
        gm = hist[f, MISSING_BIN, 0]
        hm = hist[f, MISSING_BIN, 1]
        cm = hist[f, MISSING_BIN, 2]
        g_all = G - gm
        h_all = H - hm
        c_all = C - cm
        gl = 0.0
        hl = 0.0
        cl = 0.0
        for b in range(nb - 1):
            gl += hist[f, b, 0]
            hl += hist[f, b, 1]
            cl += hist[f, b, 2]
            cr = c_all - cl
            if cl == 0:
                continue
            if cr == 0:
                break
            # missing values follow the side with more training samples
            if cl >= cr:
                GL = gl + gm
                HL = hl + hm
                CL = cl + cm
                GR = g_all - gl
                HR = h_all - hl
                CR = cr
                dl = True
            else:
                GL = gl
                HL = hl
                CL = cl
                GR = g_all - gl + gm
                HR = h_all - hl + hm
                CR = cr + cm
                dl = False
            if CL < min_child or CR < min_child:
                continue
            if HL < min_hess or HR < min_hess:
                continue
            gain = GL * GL / HL + GR * GR / HR - parent
            if gain > best_gain:
                best_gain = gain
                best_f = f
                best_b = b
                best_dl = dl
    return best_gain, best_f, best_b, best_dl


@njit(cache=True)
def _subtract(hist, src, dst):
    """hist[dst] <- hist[dst] - hist[src], in place."""
    for f in range(hist.shape[1]):
        for b in range(hist.shape[2]):
            for k in range(3):
                hist[dst, f, b, k] -= hist[src, f, b, k]


@njit(cache=True)
def grow_tree(Xb, nbins, g, h, num_leaves, min_child, min_hess, learning_rate, scores, col, hist):
    """Leaf-wise growth of one regression tree on gradients ``g`` / hessians ``h``.

    ``hist`` is a (num_leaves + 1, n_features, 256, 3) workspace of
    (gradient, hessian, count) histograms.  Each open leaf owns one slot and
    one slot is always free: a split builds the smaller child's histogram in
    the free slot and turns the parent's slot into the larger child's by
    subtraction, so no histogram is ever copied.  Adds the leaf outputs of
    every training row to ``scores[:, col]`` and returns node arrays
    (feature, bin, left, right, default_left, value); leaves have feature
    -1.  Ties in split choice go to the lowest feature, then the lowest bin;
    ties between leaves go to the earliest leaf.
    """
    n = Xb.shape[0]
    max_nodes = 2 * num_leaves - 1
    feature = np.full(max_nodes, -1, np.int32)
    thr_bin = np.zeros(max_nodes, np.int32)
    left = np.full(max_nodes, -1, np.int32)
    right = np.full(max_nodes, -1, np.int32)
    dleft = np.zeros(max_nodes, np.bool_)
    value = np.zeros(max_nodes)

    start = np.zeros(max_nodes, np.int64)
    end = np.zeros(max_nodes, np.int64)
    Gs = np.zeros(max_nodes)
    Hs = np.zeros(max_nodes)
    sgain = np.full(max_nodes, -1.0)
    sf = np.full(max_nodes, -1, np.int32)
    sb = np.zeros(max_nodes, np.int32)
    sdl = np.zeros(max_nodes, np.bool_)
    slot_of = np.zeros(max_nodes, np.int64)

    idx = np.arange(n)
    tmp = np.empty(n, np.int64)
    leaves = np.zeros(num_leaves, np.int64)  # node id of each open leaf, in creation order
    free = 1

    G = 0.0
    H = 0.0
    for i in range(n):
        G += g[i]
        H += h[i]
    end[0] = n
    Gs[0] = G
    Hs[0] = H
    if n >= 2 * min_child and H > 0:
        _histogram(Xb, idx, 0, n, g, h, hist[0])
        gain, f, b, dl = _best_split(hist[0], nbins, G, H, n, min_child, min_hess)
        if f >= 0:
            sgain[0] = gain
            sf[0] = f
            sb[0] = b
            sdl[0] = dl
    n_leaves = 1
    n_nodes = 1

    while n_leaves < num_leaves:
        pick = -1
        pick_gain = 0.0
        for j in range(n_leaves):
            nd = leaves[j]
            if sf[nd] >= 0 and sgain[nd] > pick_gain:
                pick_gain = sgain[nd]
                pick = j
        if pick < 0:
            break
        nd = leaves[pick]
        f = sf[nd]
        b = sb[nd]
        dl = sdl[nd]
        s = start[nd]
        e = end[nd]
        nl = 0
        nr = 0
        for p in range(s, e):
            i = idx[p]
            v = Xb[i, f]
            if v == MISSING_BIN:
                go_left = dl
            else:
                go_left = v <= b
            if go_left:
                idx[s + nl] = i
                nl += 1
            else:
                tmp[nr] = i
                nr += 1
        for q in range(nr):
            idx[s + nl + q] = tmp[q]

        L = n_nodes
        R = n_nodes + 1
        n_nodes += 2
        feature[nd] = f
        thr_bin[nd] = b
        left[nd] = L
        right[nd] = R
        dleft[nd] = dl
        start[L] = s
        end[L] = s + nl
        start[R] = s + nl
        end[R] = e
        for child in (L, R):
            cg = 0.0
            ch = 0.0
            for p in range(start[child], end[child]):
                cg += g[idx[p]]
                ch += h[idx[p]]
            Gs[child] = cg
            Hs[child] = ch

        parent_slot = slot_of[nd]
        if nl <= nr:
            small, large = L, R
        else:
            small, large = R, L
        _histogram(Xb, idx, start[small], end[small], g, h, hist[free])
        _subtract(hist, free, parent_slot)
        slot_of[small] = free
        slot_of[large] = parent_slot
        free = n_leaves + 1  # slots 0..n_leaves are now owned by open leaves

        for child in (L, R):
            cc = end[child] - start[child]
            if cc >= 2 * min_child and Hs[child] > 0:
                sl = slot_of[child]
                gain, cf, cb, cdl = _best_split(hist[sl], nbins, Gs[child], Hs[child], cc, min_child, min_hess)
                if cf >= 0:
                    sgain[child] = gain
                    sf[child] = cf
                    sb[child] = cb
                    sdl[child] = cdl
        leaves[pick] = L
        leaves[n_leaves] = R
        n_leaves += 1

    for j in range(n_leaves):
        nd = leaves[j]
        v = 0.0
        if Hs[nd] > 0:
            v = -Gs[nd] / Hs[nd] * learning_rate
        value[nd] = v
        for p in range(start[nd], end[nd]):
            scores[idx[p], col] += v
    return (feature[:n_nodes].copy(), thr_bin[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), dleft[:n_nodes].copy(), value[:n_nodes].copy())


@njit(cache=True)
def predict_tree(X, feature, threshold, left, right, dleft, value, out, col):
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            x = X[i, feature[node]]
            if np.isnan(x):
                node = left[node] if dleft[node] else right[node]
            elif x <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i, col] += value[node]


@njit(cache=True)
def predict_packed(X, offsets, tree_class, feature, threshold, left, right, dleft, value, out):
    """Sum packed trees into ``out`` (n, K); child indices are tree-local."""
    for t in range(offsets.shape[0] - 1):
        base = offsets[t]
        k = tree_class[t]
        for i in range(X.shape[0]):
            node = 0
            while feature[base + node] >= 0:
                x = X[i, feature[base + node]]
                if np.isnan(x):
                    node = left[base + node] if dleft[base + node] else right[base + node]
                elif x <= threshold[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            out[i, k] += value[base + node]


@njit(cache=True)
def softmax_rows(scores):
    n, k = scores.shape
    out = np.empty((n, k))
    for i in range(n):
        m = scores[i, 0]
        for j in range(1, k):
            if scores[i, j] > m:
                m = scores[i, j]
        s = 0.0
        for j in range(k):
            e = np.exp(scores[i, j] - m)
            out[i, j] = e
            s += e
        for j in range(k):
            out[i, j] /= s
    return out
