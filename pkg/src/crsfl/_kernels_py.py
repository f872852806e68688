"""Numpy reference implementation of the hot kernels.

``_kernels.pyx`` is the compiled twin. ``best_split`` here matches it bit
for bit (sequential prefix sums on both sides); ``batch_fitness`` may
differ in the last ulp of the variance term.
"""
from __future__ import annotations

import numpy as np


def batch_fitness(masks, samples, pro, labels, hist, weights, n_labels,
                  total_samples, pro_var, total_hist):
    m = np.asarray(masks, dtype=np.uint8)
    mf = m.astype(np.float64)
    cnt = m.sum(axis=1, dtype=np.int64)
    n = m.shape[1]

    onehot = np.zeros((n, max(n_labels, 1)), dtype=np.float64)
    onehot[np.arange(n), labels] = 1.0
    uniq = ((mf @ onehot) > 0).sum(axis=1)

    s_sum = mf @ samples
    h_sum = mf @ hist
    safe_cnt = np.maximum(cnt, 1)
    mean = (mf @ pro) / safe_cnt
    var = (mf * (pro[None, :] - mean[:, None]) ** 2).sum(axis=1) / safe_cnt
    v_hat = np.where((cnt > 1) & (pro_var > 0.0), var / pro_var if pro_var > 0.0 else 0.0, 0.0)
    h_hat = h_sum / total_hist if total_hist > 0.0 else np.zeros_like(h_sum)

    f = weights[0] * (cnt / n)
    f = f + weights[1] * (uniq / n_labels)
    f = f + weights[2] * (s_sum / total_samples)
    f = f - weights[3] * v_hat
    f = f + weights[4] * h_hat
    return np.where(cnt == 0, 0.0, f)


def best_split(X, y, min_leaf):
    """Return (feature, threshold, sse_after, sse_before); feature -1 if no split."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    tot = np.cumsum(y)[-1]
    tot2 = np.cumsum(y * y)[-1]
    parent = tot2 - tot * tot / n

    best_f, best_sse, thr = -1, np.inf, np.nan
    nl = np.arange(1, n, dtype=np.float64)
    nr = n - nl
    size_ok = (nl >= min_leaf) & (nr >= min_leaf)
    for f in range(p):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = y[order]
        sl = np.cumsum(ys)[:-1]
        sl2 = np.cumsum(ys * ys)[:-1]
        sr = tot - sl
        sr2 = tot2 - sl2
        sse = (sl2 - sl * sl / nl) + (sr2 - sr * sr / nr)
        valid = size_ok & (xs[:-1] < xs[1:])
        if not valid.any():
            continue
        sse = np.where(valid, sse, np.inf)
        i = int(np.argmin(sse))
        if sse[i] < best_sse:
            best_sse = float(sse[i])
            best_f = f
            a, b = xs[i], xs[i + 1]
            thr = 0.5 * (a + b)
            if thr >= b:
                thr = a
    return best_f, float(thr), float(best_sse), float(parent)
