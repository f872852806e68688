# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: weighted selection fitness and regression-tree split search.

Semantics are defined by ``_kernels_py``; both must agree.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def batch_fitness(const unsigned char[:, ::1] masks,
                  const double[::1] samples,
                  const double[::1] pro,
                  const cnp.int64_t[::1] labels,
                  const double[::1] hist,
                  const double[::1] weights,
                  Py_ssize_t n_labels,
                  double total_samples,
                  double pro_var,
                  double total_hist):
    cdef Py_ssize_t m = masks.shape[0]
    cdef Py_ssize_t n = masks.shape[1]
    cdef Py_ssize_t r, j
    cdef Py_ssize_t cnt, uniq
    cdef double s_sum, p_sum, h_sum, mean, d, var, v_hat, h_hat, f
    cdef cnp.int64_t stamp
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] res = out
    seen_arr = np.zeros(max(n_labels, 1), dtype=np.int64)
    cdef cnp.int64_t[::1] seen = seen_arr

    for r in range(m):
        stamp = r + 1
        cnt = 0
        uniq = 0
        s_sum = 0.0
        p_sum = 0.0
        h_sum = 0.0
        for j in range(n):
            if masks[r, j]:
                cnt += 1
                s_sum += samples[j]
                p_sum += pro[j]
                h_sum += hist[j]
                if seen[labels[j]] != stamp:
                    seen[labels[j]] = stamp
                    uniq += 1
        if cnt == 0:
            res[r] = 0.0
            continue
        v_hat = 0.0
        if cnt > 1 and pro_var > 0.0:
            mean = p_sum / cnt
            var = 0.0
            for j in range(n):
                if masks[r, j]:
                    d = pro[j] - mean
                    var += d * d
            v_hat = (var / cnt) / pro_var
        h_hat = 0.0
        if total_hist > 0.0:
            h_hat = h_sum / total_hist
        f = weights[0] * (<double>cnt / n)
        f = f + weights[1] * (<double>uniq / n_labels)
        f = f + weights[2] * (s_sum / total_samples)
        f = f - weights[3] * v_hat
        f = f + weights[4] * h_hat
        res[r] = f
    return out


def best_split(const double[:, ::1] X, const double[::1] y, Py_ssize_t min_leaf):
    """Return (feature, threshold, sse_after, sse_before); feature -1 if no split."""
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t p = X.shape[1]
    cdef Py_ssize_t f, i, nl, nr, best_f = -1, best_i = -1
    cdef double tot = 0.0, tot2 = 0.0, sl, sl2, sr, sr2, yi, sse
    cdef double best_sse = np.inf
    cdef double parent
    cdef cnp.intp_t[::1] order
    cdef double a, b, thr = np.nan

    for i in range(n):
        tot += y[i]
        tot2 += y[i] * y[i]
    parent = tot2 - tot * tot / n

    xarr = np.asarray(X)
    for f in range(p):
        order = np.argsort(xarr[:, f], kind="stable")
        sl = 0.0
        sl2 = 0.0
        for i in range(n - 1):
            yi = y[order[i]]
            sl += yi
            sl2 += yi * yi
            nl = i + 1
            nr = n - nl
            if nl < min_leaf or nr < min_leaf:
                continue
            if not (X[order[i], f] < X[order[i + 1], f]):
                continue
            sr = tot - sl
            sr2 = tot2 - sl2
            sse = (sl2 - sl * sl / nl) + (sr2 - sr * sr / nr)
            if sse < best_sse:
                best_sse = sse
                best_f = f
                a = X[order[i], f]
                b = X[order[i + 1], f]
                thr = 0.5 * (a + b)
                if thr >= b:
                    thr = a
    return best_f, thr, best_sse, parent
