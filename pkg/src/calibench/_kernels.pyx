# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_purepy``; same signatures."""

import numpy as np
cimport numpy as cnp
from libc.math cimport erfc, exp, sqrt, isnan, NAN

cnp.import_array()

cdef double SQRT1_2 = 0.7071067811865476


cdef Py_ssize_t _first_defined(const double[::1] e) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(e.shape[0]):
        if not isnan(e[i]):
            return i
    return e.shape[0]


cdef void _rolling(const double[::1] e, Py_ssize_t W, Py_ssize_t Ws, double eps,
                   double[::1] mu, double[::1] sigma, double[::1] mu_s) noexcept nogil:
    cdef Py_ssize_t n = e.shape[0]
    cdef Py_ssize_t start = _first_defined(e)
    cdef Py_ssize_t t, i, since
    cdef Py_ssize_t resync = W if W > 1024 else 1024
    cdef double mean = 0.0, m2 = 0.0, ssum = 0.0
    cdef double xn, xo, d, new_mean, var

    for t in range(n):
        mu[t] = NAN
        sigma[t] = NAN
        mu_s[t] = NAN
    if n - start < W:
        return

    since = 0
    t = start + W - 1
    while t < n:
        if since == 0:
            # exact two-pass recompute bounds drift of the sliding updates
            mean = 0.0
            for i in range(t - W + 1, t + 1):
                mean += e[i]
            mean /= W
            m2 = 0.0
            for i in range(t - W + 1, t + 1):
                d = e[i] - mean
                m2 += d * d
            ssum = 0.0
            for i in range(t - Ws + 1, t + 1):
                ssum += e[i]
        else:
            xn = e[t]
            xo = e[t - W]
            new_mean = mean + (xn - xo) / W
            m2 += (xn - xo) * (xn - new_mean + xo - mean)
            mean = new_mean
            ssum += xn - e[t - Ws]
        if m2 < 0.0:
            m2 = 0.0
        var = m2 / (W - 1)
        mu[t] = mean
        sigma[t] = sqrt(var)
        if sigma[t] < eps:
            sigma[t] = eps
        mu_s[t] = ssum / Ws
        since += 1
        if since >= resync:
            since = 0
        t += 1


def rolling_stats(errors, Py_ssize_t long_window, Py_ssize_t short_window, double eps):
    cdef const double[::1] e = np.ascontiguousarray(errors, dtype=np.float64)
    n = e.shape[0]
    mu = np.empty(n)
    sigma = np.empty(n)
    mu_s = np.empty(n)
    cdef double[::1] mv = mu, sv = sigma, msv = mu_s
    with nogil:
        _rolling(e, long_window, short_window, eps, mv, sv, msv)
    return mu, sigma, mu_s


def rolling_likelihood(errors, Py_ssize_t long_window, Py_ssize_t short_window, double eps):
    cdef const double[::1] e = np.ascontiguousarray(errors, dtype=np.float64)
    cdef Py_ssize_t n = e.shape[0], t
    mu = np.empty(n)
    sigma = np.empty(n)
    mu_s = np.empty(n)
    out = np.empty(n)
    cdef double[::1] mv = mu, sv = sigma, msv = mu_s, ov = out
    with nogil:
        _rolling(e, long_window, short_window, eps, mv, sv, msv)
        for t in range(n):
            if isnan(mv[t]):
                ov[t] = NAN
            else:
                ov[t] = 0.5 * erfc(-((msv[t] - mv[t]) / sv[t]) * SQRT1_2)
    return out


cdef inline double _sig(double y, double k) noexcept nogil:
    return 2.0 / (1.0 + exp(k * y)) - 1.0


def nab_window_scores(flags, starts, ends, double tp_weight, double fp_weight,
                      double steepness):
    cdef const unsigned char[::1] f = np.ascontiguousarray(flags, dtype=np.uint8)
    cdef const cnp.int64_t[::1] s = np.ascontiguousarray(starts, dtype=np.int64)
    cdef const cnp.int64_t[::1] en = np.ascontiguousarray(ends, dtype=np.int64)
    cdef Py_ssize_t n = f.shape[0], nw = s.shape[0]
    earliest = np.full(nw, -1, dtype=np.int64)
    credits = np.zeros(nw, dtype=np.float64)
    fp_index = np.empty(n, dtype=np.int64)
    fp_penalty = np.empty(n, dtype=np.float64)
    cdef cnp.int64_t[::1] ea = earliest, fi = fp_index
    cdef double[::1] cr = credits, fpp = fp_penalty
    cdef Py_ssize_t i, w = -1, nfp = 0
    cdef double length, y

    with nogil:
        for i in range(n):
            while w + 1 < nw and s[w + 1] <= i:
                w += 1
            if not f[i]:
                continue
            if w >= 0 and i <= en[w]:
                if ea[w] < 0:
                    ea[w] = i
                    length = <double>(en[w] - s[w] + 1)
                    cr[w] = tp_weight * _sig(-(en[w] - i + 1) / length, steepness)
            else:
                fi[nfp] = i
                if w < 0:
                    fpp[nfp] = -fp_weight
                else:
                    length = <double>(en[w] - s[w] + 1)
                    y = (i - en[w]) / length
                    if y <= 1.0:
                        fpp[nfp] = fp_weight * _sig(y, steepness)
                    else:
                        fpp[nfp] = -fp_weight
                nfp += 1
    return earliest, credits, fp_index[:nfp].copy(), fp_penalty[:nfp].copy()


def iforest_path_lengths(X, feature, threshold, left, right, leaf_value, roots):
    cdef const double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef const cnp.int64_t[::1] fe = np.ascontiguousarray(feature, dtype=np.int64)
    cdef const double[::1] th = np.ascontiguousarray(threshold, dtype=np.float64)
    cdef const cnp.int64_t[::1] lf = np.ascontiguousarray(left, dtype=np.int64)
    cdef const cnp.int64_t[::1] rt = np.ascontiguousarray(right, dtype=np.int64)
    cdef const double[::1] lv = np.ascontiguousarray(leaf_value, dtype=np.float64)
    cdef const cnp.int64_t[::1] rs = np.ascontiguousarray(roots, dtype=np.int64)
    cdef Py_ssize_t n = x.shape[0], nt = rs.shape[0], i, j
    cdef cnp.int64_t node
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            for j in range(nt):
                node = rs[j]
                while fe[node] >= 0:
                    if x[i, fe[node]] < th[node]:
                        node = lf[node]
                    else:
                        node = rt[node]
                o[i] += lv[node]
            o[i] /= nt
    return out
