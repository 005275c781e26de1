"""Pure numpy implementations of the hot kernels.

These are the reference versions; ``_kernels.pyx`` mirrors every function
here with the same signature and semantics. ``calibench.kernels`` picks one
of the two at import time.
"""

from __future__ import annotations

import numpy as np

SQRT1_2 = 0.7071067811865476


def _first_defined(errors: np.ndarray) -> int:
    defined = ~np.isnan(errors)
    if not defined.any():
        return len(errors)
    return int(np.argmax(defined))


def rolling_stats(errors, long_window, short_window, eps):
    """Trailing long-window mean/std and short-window mean.

    Windows end at (and include) ``t``. Entries before the first position
    with a full long window of defined errors are NaN. Undefined errors may
    only appear as a leading run.
    """
    errors = np.asarray(errors, dtype=np.float64)
    n = len(errors)
    mu = np.full(n, np.nan)
    sigma = np.full(n, np.nan)
    mu_short = np.full(n, np.nan)
    start = _first_defined(errors)
    m = n - start
    if m < long_window:
        return mu, sigma, mu_short

    seg = errors[start:]
    ref = seg.mean()
    x = seg - ref
    cs = np.concatenate(([0.0], np.cumsum(x)))
    cs2 = np.concatenate(([0.0], np.cumsum(x * x)))

    ends = np.arange(long_window, m + 1)
    s_long = cs[ends] - cs[ends - long_window]
    s2_long = cs2[ends] - cs2[ends - long_window]
    s_short = cs[ends] - cs[ends - short_window]

    var = (s2_long - s_long * s_long / long_window) / (long_window - 1)
    np.maximum(var, 0.0, out=var)
    out = slice(start + long_window - 1, n)
    mu[out] = s_long / long_window + ref
    sigma[out] = np.maximum(np.sqrt(var), eps)
    mu_short[out] = s_short / short_window + ref
    return mu, sigma, mu_short


def _normal_cdf(z: np.ndarray) -> np.ndarray:
    from scipy.special import erfc

    return 0.5 * erfc(-z * SQRT1_2)


def rolling_likelihood(errors, long_window, short_window, eps):
    """Gaussian-CDF likelihood of the short-vs-long window mean gap."""
    mu, sigma, mu_short = rolling_stats(errors, long_window, short_window, eps)
    return _normal_cdf((mu_short - mu) / sigma)


def scaled_sigmoid(y, steepness):
    return 2.0 / (1.0 + np.exp(steepness * np.asarray(y, dtype=np.float64))) - 1.0


def nab_window_scores(flags, starts, ends, tp_weight, fp_weight, steepness):
    """Per-window earliest detection/credit and per-detection FP penalties.

    ``starts``/``ends`` are inclusive index bounds of sorted, disjoint
    windows. Returns ``(earliest, credits, fp_index, fp_penalty)`` where
    ``earliest`` is -1 for missed windows and ``fp_penalty`` is already
    signed (negative).
    """
    flags = np.asarray(flags, dtype=bool)
    starts = np.asarray(starts, dtype=np.int64)
    ends = np.asarray(ends, dtype=np.int64)
    nw = len(starts)
    earliest = np.full(nw, -1, dtype=np.int64)
    credits = np.zeros(nw, dtype=np.float64)

    idx = np.flatnonzero(flags).astype(np.int64)
    if nw:
        w = np.searchsorted(starts, idx, side="right") - 1
        inside = (w >= 0) & (idx <= ends[np.maximum(w, 0)])
    else:
        w = np.full(len(idx), -1, dtype=np.int64)
        inside = np.zeros(len(idx), dtype=bool)

    if inside.any():
        win_hit = w[inside]
        pos_hit = idx[inside]
        uniq, first = np.unique(win_hit, return_index=True)
        earliest[uniq] = pos_hit[first]
        length = (ends[uniq] - starts[uniq] + 1).astype(np.float64)
        y = -(ends[uniq] - earliest[uniq] + 1) / length
        credits[uniq] = tp_weight * scaled_sigmoid(y, steepness)

    fp_index = idx[~inside]
    fp_win = w[~inside]
    fp_penalty = np.full(len(fp_index), -fp_weight, dtype=np.float64)
    has_prev = fp_win >= 0
    if has_prev.any():
        pw = fp_win[has_prev]
        length = (ends[pw] - starts[pw] + 1).astype(np.float64)
        y = (fp_index[has_prev] - ends[pw]) / length
        near = y <= 1.0
        pen = np.full(len(pw), -fp_weight)
        pen[near] = fp_weight * scaled_sigmoid(y[near], steepness)
        fp_penalty[has_prev] = pen
    return earliest, credits, fp_index, fp_penalty


def iforest_path_lengths(X, feature, threshold, left, right, leaf_value, roots):
    """Mean isolation path length of every row over all trees.

    Trees are stored as flat node arrays; ``feature == -1`` marks a leaf and
    ``leaf_value`` holds depth plus the unsuccessful-search correction.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    total = np.zeros(n, dtype=np.float64)
    rows = np.arange(n)
    for root in roots:
        node = np.full(n, root, dtype=np.int64)
        while True:
            f = feature[node]
            active = f >= 0
            if not active.any():
                break
            a = np.flatnonzero(active)
            na = node[a]
            go_left = X[rows[a], f[a]] < threshold[na]
            node[a] = np.where(go_left, left[na], right[na])
        total += leaf_value[node]
    return total / len(roots)
