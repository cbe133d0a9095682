"""Array kernels for decision-tree ensembles.

Tree growth, leaf routing, and proximity accumulation are tight loops over
preallocated arrays, JIT-compiled with numba when available and run as
plain Python otherwise.  Both paths execute the same arithmetic in the
same order, so results do not depend on which path is active.
"""

from __future__ import annotations

import numpy as np


def _grow_tree_impl(
    x,
    y,
    idx,
    feat_rand,
    mtry,
    min_node_size,
    n_classes,
    feature,
    threshold,
    left,
    right,
    counts,
    importance,
):
    """Grow one classification tree depth-first over the sample indices
    in `idx` (permuted in place).

    Splits minimize the weighted Gini impurity of the two children among
    `mtry` candidate features drawn without replacement per node (consuming
    `feat_rand` sequentially); thresholds are midpoints between adjacent
    distinct sorted values.  Nodes stop at class purity, at fewer than
    2 * min_node_size samples, or when every candidate feature is constant.
    Returns the number of nodes written into the preallocated arrays.
    `importance` accumulates the node-weighted impurity decrease per
    feature, normalized by the root sample count.
    """
    n_total = idx.shape[0]
    p = x.shape[1]
    max_nodes = feature.shape[0]

    stack_node = np.empty(max_nodes, np.int64)
    stack_start = np.empty(max_nodes, np.int64)
    stack_end = np.empty(max_nodes, np.int64)
    tmp = np.empty(n_total, np.int64)
    vals = np.empty(n_total, np.float64)
    perm = np.empty(p, np.int64)
    cntl = np.empty(n_classes, np.int64)
    cntr = np.empty(n_classes, np.int64)

    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = n_total
    sp = 1
    node_count = 1
    fpos = 0

    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        start = stack_start[sp]
        end = stack_end[sp]
        m = end - start

        for c in range(n_classes):
            counts[node, c] = 0
        for i in range(start, end):
            counts[node, y[idx[i]]] += 1
        sumsq = 0.0
        cmax = 0
        for c in range(n_classes):
            cc = counts[node, c]
            sumsq += float(cc) * float(cc)
            if cc > cmax:
                cmax = cc
        feature[node] = -1
        threshold[node] = 0.0
        left[node] = -1
        right[node] = -1
        if cmax == m or m < 2 * min_node_size:
            continue
        g_node = m - sumsq / m

        for q in range(p):
            perm[q] = q
        best_score = np.inf
        best_f = -1
        best_thr = 0.0
        for j in range(mtry):
            r = feat_rand[fpos]
            fpos += 1
            k = j + r % (p - j)
            swap = perm[j]
            perm[j] = perm[k]
            perm[k] = swap
            f = perm[j]

            for i in range(m):
                vals[i] = x[idx[start + i], f]
            order = np.argsort(vals[:m])

            for c in range(n_classes):
                cntl[c] = 0
                cntr[c] = counts[node, c]
            sl = 0.0
            sr = sumsq
            for i in range(m - 1):
                o = order[i]
                c = y[idx[start + o]]
                sl += 2.0 * cntl[c] + 1.0
                cntl[c] += 1
                sr -= 2.0 * cntr[c] - 1.0
                cntr[c] -= 1
                v_here = vals[o]
                v_next = vals[order[i + 1]]
                if v_here < v_next:
                    ml = i + 1.0
                    mr = m - i - 1.0
                    if ml < min_node_size or mr < min_node_size:
                        continue
                    score = (ml - sl / ml) + (mr - sr / mr)
                    if score < best_score:
                        best_score = score
                        best_f = f
                        best_thr = 0.5 * (v_here + v_next)

        if best_f < 0:
            continue

        nl = 0
        for i in range(start, end):
            if x[idx[i], best_f] <= best_thr:
                tmp[nl] = idx[i]
                nl += 1
        nr = nl
        for i in range(start, end):
            if x[idx[i], best_f] > best_thr:
                tmp[nr] = idx[i]
                nr += 1
        for i in range(m):
            idx[start + i] = tmp[i]
        mid = start + nl

        lid = node_count
        rid = node_count + 1
        node_count += 2
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = lid
        right[node] = rid
        importance[best_f] += (g_node - best_score) / n_total

        stack_node[sp] = rid
        stack_start[sp] = mid
        stack_end[sp] = end
        sp += 1
        stack_node[sp] = lid
        stack_start[sp] = start
        stack_end[sp] = mid
        sp += 1

    return node_count


def _leaf_ids_impl(x, feature, threshold, left, right):
    """Route every row of x to its terminal node id."""
    n = x.shape[0]
    out = np.empty(n, np.int64)
    for r in range(n):
        node = 0
        while feature[node] >= 0:
            if x[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = node
    return out


def _prox_accumulate_impl(leaf_ids, prox):
    """Add 1 to prox[i, j] for every ordered pair of rows sharing a leaf
    (diagonal included, so each tree adds exactly 1 to every diagonal)."""
    n = leaf_ids.shape[0]
    order = np.argsort(leaf_ids)
    i = 0
    while i < n:
        lid = leaf_ids[order[i]]
        j = i
        while j < n and leaf_ids[order[j]] == lid:
            j += 1
        for a in range(i, j):
            ra = order[a]
            for b in range(i, j):
                prox[ra, order[b]] += 1
        i = j


try:  # pragma: no cover - exercised implicitly by every forest test
    from numba import njit

    grow_tree = njit(cache=True, nogil=True)(_grow_tree_impl)
    leaf_ids = njit(cache=True, nogil=True)(_leaf_ids_impl)
    prox_accumulate = njit(cache=True, nogil=True)(_prox_accumulate_impl)
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    grow_tree = _grow_tree_impl
    leaf_ids = _leaf_ids_impl
    prox_accumulate = _prox_accumulate_impl
    HAVE_NUMBA = False
