# distutils: language = c++
"""Compiled kernels: Gini split search, node partition, forest prediction.

Must stay bit-identical to jitrisk._kernels._pure — the arithmetic over
integer counts, the strictly-greater replacement rule and the threshold
clamp are shared with the fallback; see _pure's module docstring for the
contract. tests/test_kernels.py cross-checks both backends.
"""

from libcpp.vector cimport vector
from libcpp.pair cimport pair
from libcpp.algorithm cimport sort as cpp_sort

import numpy as np

NAME = "compiled"

ctypedef pair[double, long] ValLab


cdef inline double _gini2(long n, long p) nogil:
    return 2.0 * p * (n - p) / (<double>(n * n))


def best_split(const long[::1] indptr, const long[::1] indices,
               const double[::1] data, const unsigned char[::1] y,
               const long[::1] pos, long start, long end, long node_pos,
               const long[::1] candidates):
    cdef long n_node = end - start
    cdef double parent = _gini2(n_node, node_pos)
    cdef long best_feat = -1
    cdef double best_thr = 0.0
    cdef double best_gain = 0.0

    cdef vector[ValLab] buf
    buf.reserve(n_node)

    cdef long ci, f, j, r, p, g, gpos, n_zero, pos_zero, i
    cdef long cum_n, cum_pos, cnt, cpos, nl, pl, nr, pr
    cdef double v, prev_val, gain, thr
    cdef bint have_prev, zero_done

    with nogil:
        for ci in range(candidates.shape[0]):
            f = candidates[ci]
            buf.clear()
            gpos = 0
            for j in range(indptr[f], indptr[f + 1]):
                r = indices[j]
                p = pos[r]
                if start <= p < end:
                    buf.push_back(ValLab(data[j], <long>y[r]))
                    gpos += y[r]
            g = <long>buf.size()
            if g == 0:
                continue
            n_zero = n_node - g
            pos_zero = node_pos - gpos
            cpp_sort(buf.begin(), buf.end())

            # walk value groups in ascending order, injecting the implicit
            # zero group after the negative entries
            have_prev = False
            zero_done = n_zero == 0
            cum_n = 0
            cum_pos = 0
            prev_val = 0.0
            i = 0
            while i < g or not zero_done:
                if not zero_done and (i >= g or buf[i].first > 0.0):
                    v = 0.0
                    cnt = n_zero
                    cpos = pos_zero
                    zero_done = True
                else:
                    v = buf[i].first
                    cnt = 0
                    cpos = 0
                    while i < g and buf[i].first == v:
                        cnt += 1
                        cpos += buf[i].second
                        i += 1
                if have_prev and v > prev_val:
                    nl = cum_n
                    pl = cum_pos
                    nr = n_node - nl
                    pr = node_pos - pl
                    gain = parent - (nl * _gini2(nl, pl) + nr * _gini2(nr, pr)) / (<double>n_node)
                    if gain > best_gain:
                        thr = (prev_val + v) / 2.0
                        if thr >= v:
                            thr = prev_val
                        best_feat = f
                        best_thr = thr
                        best_gain = gain
                cum_n += cnt
                cum_pos += cpos
                prev_val = v
                have_prev = True
    return best_feat, best_thr, best_gain


def partition(const long[::1] indptr, const long[::1] indices,
              const double[::1] data, const unsigned char[::1] y,
              long[::1] samples, long[::1] pos, long start, long end,
              long feature, double threshold):
    cdef long n_node = end - start
    cdef vector[double] vals = vector[double](n_node, 0.0)
    cdef vector[long] ordered
    ordered.reserve(n_node)

    cdef long j, r, p, k, n_left = 0, pos_left = 0

    with nogil:
        for j in range(indptr[feature], indptr[feature + 1]):
            r = indices[j]
            p = pos[r]
            if start <= p < end:
                vals[p - start] = data[j]
        for k in range(n_node):
            if vals[k] <= threshold:
                ordered.push_back(samples[start + k])
                n_left += 1
                pos_left += y[samples[start + k]]
        for k in range(n_node):
            if vals[k] > threshold:
                ordered.push_back(samples[start + k])
        for k in range(n_node):
            samples[start + k] = ordered[k]
            pos[ordered[k]] = start + k
    return n_left, pos_left


def predict_rows(const long[::1] offsets, const long[::1] feature,
                 const double[::1] threshold, const long[::1] left,
                 const long[::1] right, const double[::1] frac,
                 const long[::1] x_indptr, const long[::1] x_indices,
                 const double[::1] x_data, long n_rows, long n_features):
    out_arr = np.empty(n_rows, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef vector[double] scratch = vector[double](n_features, 0.0)
    cdef long n_trees = offsets.shape[0] - 1
    cdef long i, j, t, node
    cdef double acc

    with nogil:
        for i in range(n_rows):
            for j in range(x_indptr[i], x_indptr[i + 1]):
                scratch[x_indices[j]] = x_data[j]
            acc = 0.0
            for t in range(n_trees):
                node = offsets[t]
                while feature[node] >= 0:
                    if scratch[feature[node]] <= threshold[node]:
                        node = left[node]
                    else:
                        node = right[node]
                acc += frac[node]
            out[i] = acc / (<double>n_trees)
            for j in range(x_indptr[i], x_indptr[i + 1]):
                scratch[x_indices[j]] = 0.0
    return out_arr
