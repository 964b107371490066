"""Pure numpy fallback for the hot kernels.

The compiled backend (_core) mirrors these functions exactly. Both must
produce bit-identical results, which the arithmetic here is arranged to
guarantee:

  * split statistics are integer counts, so per-boundary Gini values come
    from one pinned float expression over exact integers;
  * candidate features are scanned in the given order and a split is
    only replaced on strictly greater gain, so within-feature first-max
    (np.argmax) plus a strict cross-feature comparison reproduces the
    compiled backend's sequential scan;
  * thresholds are midpoints of consecutive distinct values, clamped
    back to the lower value when rounding lands on the upper one;
  * forest probabilities accumulate leaf fractions in tree order.

Column arrays are CSC over the (bootstrap) matrix: `pos` maps row id to
its current position, node rows occupy positions [start, end).
"""

from __future__ import annotations

import numpy as np

NAME = "pure"


def _gini2(n, p):
    """2 * p * (n - p) / n^2 as float64; n, p exact integers."""
    return 2.0 * p * (n - p) / (n * n)


def best_split(indptr, indices, data, y, pos, start, end, node_pos, candidates):
    """Best Gini split over the candidate features for one node.

    Returns (feature, threshold, gain); feature is -1 when no candidate
    offers strictly positive gain.
    """
    n_node = int(end - start)
    node_pos = int(node_pos)
    parent = _gini2(n_node, node_pos)
    best_feat = -1
    best_thr = 0.0
    best_gain = 0.0
    for f in candidates:
        f = int(f)
        j0, j1 = indptr[f], indptr[f + 1]
        rows = indices[j0:j1]
        in_node = (pos[rows] >= start) & (pos[rows] < end)
        vals = data[j0:j1][in_node]
        g = vals.shape[0]
        if g == 0:
            continue  # feature constant (all zero) in this node
        labs = y[rows[in_node]]
        n_zero = n_node - g
        pos_zero = node_pos - int(labs.sum())

        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        sl = labs[order]
        if n_zero > 0:
            cut = int(np.searchsorted(sv, 0.0, side="left"))
            zero_labs = np.zeros(n_zero, dtype=y.dtype)
            zero_labs[:pos_zero] = 1
            sv = np.concatenate([sv[:cut], np.zeros(n_zero), sv[cut:]])
            sl = np.concatenate([sl[:cut], zero_labs, sl[cut:]])

        boundary = np.nonzero(sv[:-1] < sv[1:])[0]
        if boundary.shape[0] == 0:
            continue
        cum_pos = np.cumsum(sl, dtype=np.int64)
        nl = boundary + 1
        pl = cum_pos[boundary]
        nr = n_node - nl
        pr = node_pos - pl
        gains = parent - (nl * _gini2(nl, pl) + nr * _gini2(nr, pr)) / n_node
        k = int(np.argmax(gains))
        if gains[k] > best_gain:
            v1 = sv[boundary[k]]
            v2 = sv[boundary[k] + 1]
            thr = (v1 + v2) / 2.0
            if thr >= v2:
                thr = v1
            best_feat, best_thr, best_gain = f, float(thr), float(gains[k])
    return best_feat, best_thr, best_gain


def partition(indptr, indices, data, y, samples, pos, start, end, feature, threshold):
    """Stable-partition node rows on value <= threshold; updates samples
    and pos in place. Returns (n_left, n_pos_left)."""
    n_node = int(end - start)
    seg = samples[start:end].copy()
    vals = np.zeros(n_node, dtype=np.float64)
    j0, j1 = indptr[feature], indptr[feature + 1]
    rows = indices[j0:j1]
    p = pos[rows]
    in_node = (p >= start) & (p < end)
    vals[p[in_node] - start] = data[j0:j1][in_node]
    left = vals <= threshold
    new_seg = np.concatenate([seg[left], seg[~left]])
    samples[start:end] = new_seg
    pos[new_seg] = np.arange(start, end, dtype=pos.dtype)
    return int(left.sum()), int(y[seg[left]].sum())


def predict_rows(
    offsets, feature, threshold, left, right, frac,
    x_indptr, x_indices, x_data, n_rows, n_features,
):
    """Mean leaf fraction over all trees for each CSR row."""
    out = np.empty(n_rows, dtype=np.float64)
    scratch = np.zeros(n_features, dtype=np.float64)
    n_trees = offsets.shape[0] - 1
    for i in range(n_rows):
        j0, j1 = x_indptr[i], x_indptr[i + 1]
        cols = x_indices[j0:j1]
        scratch[cols] = x_data[j0:j1]
        acc = 0.0
        for t in range(n_trees):
            node = offsets[t]
            while feature[node] >= 0:
                if scratch[feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            acc += frac[node]
        out[i] = acc / n_trees
        scratch[cols] = 0.0
    return out
