"""Compiled inner loops for split search and tree evaluation.

All kernels take presorted per-feature row orders (``order[f]`` lists row ids
ascending by ``X[:, f]``) plus a per-row membership mask, so a tree never
re-sorts its data. Scan order is fixed (features ascending, thresholds
ascending) and only a strictly larger gain replaces the incumbent, which gives
the lowest-feature / lowest-threshold tie-break.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def split_term(G, H, lam):
    d = H + lam
    if d > 0.0:
        return G * G / d
    return 0.0


@njit(cache=True)
def midpoint(a, b):
    m = a + (b - a) * 0.5
    if m >= b:
        m = a
    return m


@njit(cache=True)
def leaf_weight(G, H, lam):
    d = H + lam
    if d > 0.0:
        return -G / d
    return 0.0


@njit(cache=True)
def grow_levelwise(X, g, h, in_sample, order, feat_ok, max_depth, lam, gamma):
    """Breadth-first exact greedy growth.

    Returns node arrays in creation order plus per-node split gain.
    """
    n, F = X.shape
    m = 0
    for r in range(n):
        if in_sample[r]:
            m += 1
    cap = max(1, 2 * m - 1)
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    gain_out = np.zeros(cap)
    G = np.zeros(cap)
    H = np.zeros(cap)
    cnt = np.zeros(cap, np.int64)
    node_of = np.full(n, -1, np.int64)
    for r in range(n):
        if in_sample[r]:
            node_of[r] = 0
            G[0] += g[r]
            H[0] += h[r]
            cnt[0] += 1
    n_nodes = 1
    lo, hi = 0, 1
    GL = np.zeros(cap)
    HL = np.zeros(cap)
    last = np.zeros(cap)
    seen = np.zeros(cap, np.bool_)
    best_gain = np.zeros(cap)
    best_f = np.full(cap, -1, np.int64)
    best_t = np.zeros(cap)
    for _ in range(max_depth):
        for k in range(lo, hi):
            best_gain[k] = 0.0
            best_f[k] = -1
        for f in range(F):
            if not feat_ok[f]:
                continue
            for k in range(lo, hi):
                GL[k] = 0.0
                HL[k] = 0.0
                seen[k] = False
            for idx in range(order.shape[1]):
                r = order[f, idx]
                k = node_of[r]
                if k < lo or cnt[k] < 2:
                    continue
                x = X[r, f]
                if seen[k] and x > last[k]:
                    gl = GL[k]
                    hl = HL[k]
                    gain = (split_term(gl, hl, lam) + split_term(G[k] - gl, H[k] - hl, lam)
                            - split_term(G[k], H[k], lam) - gamma)
                    if gain > best_gain[k]:
                        best_gain[k] = gain
                        best_f[k] = f
                        best_t[k] = midpoint(last[k], x)
                GL[k] += g[r]
                HL[k] += h[r]
                last[k] = x
                seen[k] = True
        start = n_nodes
        for k in range(lo, hi):
            if best_f[k] >= 0:
                feature[k] = best_f[k]
                threshold[k] = best_t[k]
                gain_out[k] = best_gain[k]
                left[k] = n_nodes
                right[k] = n_nodes + 1
                n_nodes += 2
        if n_nodes == start:
            break
        for r in range(n):
            k = node_of[r]
            if k >= lo and k < hi and feature[k] >= 0:
                if X[r, feature[k]] <= threshold[k]:
                    c = left[k]
                else:
                    c = right[k]
                node_of[r] = c
                G[c] += g[r]
                H[c] += h[r]
                cnt[c] += 1
        lo, hi = start, n_nodes
    for k in range(n_nodes):
        if feature[k] < 0:
            value[k] = leaf_weight(G[k], H[k], lam)
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], gain_out[:n_nodes])


@njit(cache=True)
def grow_oblivious(X, g, h, in_sample, order, feat_ok, max_depth, lam, gamma):
    """Symmetric growth: one (feature, threshold) per level, chosen by the
    gain summed over every node of the level.

    Sweeping a feature moves one row at a time from right to left, so only
    that row's node changes its contribution; the level total is kept as a
    running sum.
    """
    n, F = X.shape
    node_of = np.full(n, -1, np.int64)
    for r in range(n):
        if in_sample[r]:
            node_of[r] = 0
    feats = np.full(max_depth, -1, np.int64)
    thrs = np.zeros(max_depth)
    gains = np.zeros(max_depth)
    depth = 0
    for d in range(max_depth):
        m = 1 << d
        G = np.zeros(m)
        H = np.zeros(m)
        for r in range(n):
            k = node_of[r]
            if k >= 0:
                G[k] += g[r]
                H[k] += h[r]
        P = 0.0
        for k in range(m):
            P += split_term(G[k], H[k], lam)
        GL = np.zeros(m)
        HL = np.zeros(m)
        contrib = np.zeros(m)
        best = 0.0
        bf = -1
        bt = 0.0
        for f in range(F):
            if not feat_ok[f]:
                continue
            for k in range(m):
                GL[k] = 0.0
                HL[k] = 0.0
                contrib[k] = split_term(G[k], H[k], lam)
            S = P
            seen = False
            last = 0.0
            for idx in range(order.shape[1]):
                r = order[f, idx]
                k = node_of[r]
                if k < 0:
                    continue
                x = X[r, f]
                if seen and x > last:
                    gain = S - P - gamma * m
                    if gain > best:
                        best = gain
                        bf = f
                        bt = midpoint(last, x)
                old = contrib[k]
                GL[k] += g[r]
                HL[k] += h[r]
                new = split_term(GL[k], HL[k], lam) + split_term(G[k] - GL[k], H[k] - HL[k], lam)
                contrib[k] = new
                S += new - old
                last = x
                seen = True
        if bf < 0:
            break
        feats[d] = bf
        thrs[d] = bt
        gains[d] = best
        for r in range(n):
            k = node_of[r]
            if k >= 0:
                node_of[r] = 2 * k + (1 if X[r, bf] > bt else 0)
        depth = d + 1
    n_leaves = 1 << depth
    G = np.zeros(n_leaves)
    H = np.zeros(n_leaves)
    for r in range(n):
        k = node_of[r]
        if k >= 0:
            G[k] += g[r]
            H[k] += h[r]
    values = np.zeros(n_leaves)
    for k in range(n_leaves):
        values[k] = leaf_weight(G[k], H[k], lam)
    return feats[:depth], thrs[:depth], gains[:depth], values


@njit(cache=True)
def build_hist(binned, g, h, rows, feat_ok, n_bins):
    F = binned.shape[1]
    Gb = np.zeros((F, n_bins))
    Hb = np.zeros((F, n_bins))
    Cb = np.zeros((F, n_bins), np.int64)
    for i in range(rows.shape[0]):
        r = rows[i]
        for f in range(F):
            if feat_ok[f]:
                b = binned[r, f]
                Gb[f, b] += g[r]
                Hb[f, b] += h[r]
                Cb[f, b] += 1
    return Gb, Hb, Cb


@njit(cache=True)
def predict_nodes(X, feature, threshold, left, right, value):
    n = X.shape[0]
    out = np.empty(n)
    for i in range(n):
        k = 0
        while feature[k] >= 0:
            if X[i, feature[k]] <= threshold[k]:
                k = left[k]
            else:
                k = right[k]
        out[i] = value[k]
    return out


@njit(cache=True)
def preorder_permutation(left, right):
    """Node ids listed in preorder (root, left subtree, right subtree)."""
    n = left.shape[0]
    out = np.empty(n, np.int64)
    stack = np.empty(n, np.int64)
    top = 0
    stack[0] = 0
    top = 1
    pos = 0
    while top > 0:
        top -= 1
        k = stack[top]
        out[pos] = k
        pos += 1
        if left[k] >= 0:
            stack[top] = right[k]
            stack[top + 1] = left[k]
            top += 2
    return out[:pos]


@njit(cache=True)
def best_hist_split(Gb, Hb, Cb, n_bins, lam, gamma, feat_ok):
    """Best bin boundary over all features by cumulative sweep.

    Returns (feature, boundary, gain, GL, GR, HL, HR); feature -1 if no
    boundary has positive net gain.
    """
    F = Gb.shape[0]
    bf, bj = -1, -1
    best = 0.0
    bgl = bgr = bhl = bhr = 0.0
    for f in range(F):
        if not feat_ok[f]:
            continue
        nb = n_bins[f]
        G = 0.0
        H = 0.0
        C = 0
        for b in range(nb):
            G += Gb[f, b]
            H += Hb[f, b]
            C += Cb[f, b]
        parent = split_term(G, H, lam)
        gl = 0.0
        hl = 0.0
        cl = 0
        for j in range(nb - 1):
            gl += Gb[f, j]
            hl += Hb[f, j]
            cl += Cb[f, j]
            if cl == 0 or cl == C:
                continue
            gain = split_term(gl, hl, lam) + split_term(G - gl, H - hl, lam) - parent - gamma
            if gain > best:
                best = gain
                bf, bj = f, j
                bgl, bgr, bhl, bhr = gl, G - gl, hl, H - hl
    return bf, bj, best, bgl, bgr, bhl, bhr
