# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels; see ``_pure`` for the reference."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, floor, log, pow, isfinite, fabs, sqrt

cnp.import_array()


cdef double _min(const double[::1] x) noexcept nogil:
    cdef Py_ssize_t i
    cdef double m = x[0]
    for i in range(1, x.shape[0]):
        if x[i] < m:
            m = x[i]
    return m


# above this size numpy's SIMD exp and BLAS dot outrun the scalar libm loop,
# so large inputs take the vectorized route (dispatched before any
# memoryview conversion, which has its own per-call cost)
cdef enum:
    VECTOR_EXP_MIN = 256


cdef double _kl_log_partition_small(const double[::1] weights, const double[::1] scaled) noexcept nogil:
    cdef Py_ssize_t i
    cdef double shift = _min(scaled), acc = 0.0
    for i in range(scaled.shape[0]):
        acc += weights[i] * exp(shift - scaled[i])
    return -shift + log(acc)


def kl_log_partition(weights, scaled):
    if scaled.shape[0] >= VECTOR_EXP_MIN:
        shift = scaled.min()
        return -shift + float(np.log(np.dot(weights, np.exp(-(scaled - shift)))))
    return _kl_log_partition_small(weights, scaled)


cdef _kl_ratio_small(const double[::1] scaled, double log_z):
    cdef Py_ssize_t i, n = scaled.shape[0]
    out = np.empty(n)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            o[i] = exp(-scaled[i] - log_z)
    return out


def kl_ratio(scaled, double log_z):
    if scaled.shape[0] >= VECTOR_EXP_MIN:
        return np.exp(-scaled - log_z)
    return _kl_ratio_small(scaled, log_z)


# exponent classes for x ** (2 / (alpha - 1)): small integers and half-integers
# (alpha = 1.5, 2, 3, 5, ...) avoid the general pow call
cdef enum:
    POW_GENERAL = 0
    POW_INT = 1
    POW_HALF = 2


cdef inline int _pow_kind(double expo, int* n) noexcept nogil:
    if expo <= 64.0 and expo == floor(expo):
        n[0] = <int>expo
        return POW_INT
    if expo <= 64.0 and 2.0 * expo == floor(2.0 * expo):
        n[0] = <int>floor(expo)
        return POW_HALF
    return POW_GENERAL


cdef inline double _pos(double x) noexcept nogil:
    # compare-select compiles to a single max instruction; inputs are finite
    return x if x > 0.0 else 0.0


cdef inline double _ipow(double x, int n) noexcept nogil:
    cdef double r = 1.0
    while n > 0:
        if n & 1:
            r *= x
        x *= x
        n >>= 1
    return r


cdef inline double _clip_pow(double s, double b, double half, double expo,
                             int kind, int n) noexcept nogil:
    # branchless clip; every exponent is positive, so 0 maps to 0
    cdef double base = _pos(half * (b - s))
    if kind == POW_INT:
        return _ipow(base, n)
    if kind == POW_HALF:
        return _ipow(base, n) * sqrt(base)
    return pow(base, expo)


cdef double _alpha_mean(const double[::1] w, const double[::1] s, double b,
                        double half, double expo) noexcept nogil:
    # the exponent dispatch is hoisted out of the loops so each one stays tight;
    # four independent partial sums keep them from serializing on one add
    cdef Py_ssize_t i, m = s.shape[0], m4 = m - m % 4
    cdef double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0
    cdef int n = 0
    cdef int kind = _pow_kind(expo, &n)
    if kind == POW_INT and n == 1:
        for i in range(0, m4, 4):
            a0 += w[i] * _pos(half * (b - s[i]))
            a1 += w[i + 1] * _pos(half * (b - s[i + 1]))
            a2 += w[i + 2] * _pos(half * (b - s[i + 2]))
            a3 += w[i + 3] * _pos(half * (b - s[i + 3]))
        for i in range(m4, m):
            a0 += w[i] * _pos(half * (b - s[i]))
    elif kind == POW_INT:
        for i in range(0, m4, 4):
            a0 += w[i] * _ipow(_pos(half * (b - s[i])), n)
            a1 += w[i + 1] * _ipow(_pos(half * (b - s[i + 1])), n)
            a2 += w[i + 2] * _ipow(_pos(half * (b - s[i + 2])), n)
            a3 += w[i + 3] * _ipow(_pos(half * (b - s[i + 3])), n)
        for i in range(m4, m):
            a0 += w[i] * _ipow(_pos(half * (b - s[i])), n)
    else:
        for i in range(m):
            a0 += w[i] * _clip_pow(s[i], b, half, expo, kind, n)
    return (a0 + a1) + (a2 + a3)


def alpha_ratio(const double[::1] scaled, double b, double alpha):
    cdef Py_ssize_t i, n = scaled.shape[0]
    cdef double half = 0.5 * (alpha - 1.0), expo = 2.0 / (alpha - 1.0)
    cdef int k = 0
    cdef int kind = _pow_kind(expo, &k)
    out = np.empty(n)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            o[i] = _clip_pow(scaled[i], b, half, expo, kind, k)
    return out


def alpha_mean(const double[::1] weights, const double[::1] scaled, double b, double alpha):
    return _alpha_mean(weights, scaled, b, 0.5 * (alpha - 1.0), 2.0 / (alpha - 1.0))


def solve_alpha_normalizer(const double[::1] weights, const double[::1] scaled, double alpha,
                           int max_iter=200, int max_doublings=1100):
    cdef double half = 0.5 * (alpha - 1.0), expo = 2.0 / (alpha - 1.0)
    cdef double lo, hi, step = 1.0, mid, res, best_b, best_res
    cdef int it = 0, k
    cdef bint bracketed = False
    with nogil:
        lo = _min(scaled)
        hi = lo + step
        for k in range(max_doublings):
            if _alpha_mean(weights, scaled, hi, half, expo) >= 1.0:
                bracketed = True
                break
            step *= 2.0
            hi = lo + step
            if not isfinite(hi):
                break
    if not bracketed:
        return hi, float("nan"), lo, hi, 0, False
    with nogil:
        best_b = hi
        best_res = _alpha_mean(weights, scaled, hi, half, expo) - 1.0
        while it < max_iter:
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            it += 1
            res = _alpha_mean(weights, scaled, mid, half, expo) - 1.0
            if fabs(res) < fabs(best_res):
                best_b = mid
                best_res = res
            if res == 0.0:
                break
            if res < 0.0:
                lo = mid
            else:
                hi = mid
    return best_b, best_res, lo, hi, it, True


def sweep_counts(const double[::1] ratios, const double[::1] correct,
                 const double[::1] loss, const double[::1] taus):
    cdef Py_ssize_t n = ratios.shape[0], m = taus.shape[0], i, k, j
    order_arr = np.argsort(np.asarray(ratios), kind="stable")
    cdef cnp.int64_t[::1] order = order_arr.astype(np.int64)
    sorted_arr = np.asarray(ratios)[order_arr]
    cdef const double[::1] r = sorted_arr
    suf_c_arr = np.zeros(n + 1)
    suf_l_arr = np.zeros(n + 1)
    cdef double[::1] suf_c = suf_c_arr, suf_l = suf_l_arr
    n_acc_arr = np.empty(m, dtype=np.int64)
    c_out_arr = np.empty(m)
    l_out_arr = np.empty(m)
    cdef cnp.int64_t[::1] n_acc = n_acc_arr
    cdef double[::1] c_out = c_out_arr, l_out = l_out_arr
    cdef double acc_c = 0.0, acc_l = 0.0
    cdef Py_ssize_t lo, hi, md
    with nogil:
        for k in range(n - 1, -1, -1):
            acc_c += correct[order[k]]
            acc_l += loss[order[k]]
            suf_c[k] = acc_c
            suf_l[k] = acc_l
        for j in range(m):
            # first index with r > tau (bisect_right)
            lo = 0
            hi = n
            while lo < hi:
                md = (lo + hi) >> 1
                if r[md] <= taus[j]:
                    lo = md + 1
                else:
                    hi = md
            n_acc[j] = n - lo
            c_out[j] = suf_c[lo]
            l_out[j] = suf_l[lo]
    return n_acc_arr, c_out_arr, l_out_arr
