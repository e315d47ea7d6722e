"""Numpy implementations of the hot kernels.

Same signatures and summation order as the compiled module, so both backends
return identical integer counts and agree on floats to rounding.
"""
import numpy as np


def kl_log_partition(weights, scaled):
    # log sum_i w_i exp(-s_i), shifted by min s for overflow safety
    shift = scaled.min()
    return -shift + float(np.log(np.dot(weights, np.exp(-(scaled - shift)))))


def kl_ratio(scaled, log_z):
    return np.exp(-scaled - log_z)


def alpha_ratio(scaled, b, alpha):
    base = 0.5 * (alpha - 1.0) * (b - scaled)
    return np.maximum(base, 0.0) ** (2.0 / (alpha - 1.0))


def alpha_mean(weights, scaled, b, alpha):
    return float(np.dot(weights, alpha_ratio(scaled, b, alpha)))


def solve_alpha_normalizer(weights, scaled, alpha, max_iter=200, max_doublings=1100):
    """Bracket and bisect the normalizer b of the clipped power ratio.

    Returns ``(b, residual, lo, hi, iterations, bracketed)``.
    """
    lo = float(scaled.min())
    step = 1.0
    hi = lo + step
    bracketed = False
    for _ in range(max_doublings):
        if alpha_mean(weights, scaled, hi, alpha) >= 1.0:
            bracketed = True
            break
        step *= 2.0
        hi = lo + step
        if not np.isfinite(hi):
            break
    if not bracketed:
        return hi, float("nan"), lo, hi, 0, False

    best_b, best_res = hi, alpha_mean(weights, scaled, hi, alpha) - 1.0
    it = 0
    while it < max_iter:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        it += 1
        res = alpha_mean(weights, scaled, mid, alpha) - 1.0
        if abs(res) < abs(best_res):
            best_b, best_res = mid, res
        if res == 0.0:
            break
        if res < 0.0:
            lo = mid
        else:
            hi = mid
    return best_b, best_res, lo, hi, it, True


def sweep_counts(ratios, correct, loss, taus):
    """Accepted count, correct sum and loss sum for each threshold.

    A point is accepted at threshold t iff its ratio is strictly above t.
    """
    order = np.argsort(ratios, kind="stable")
    r = ratios[order]
    n = r.shape[0]
    suf_correct = np.zeros(n + 1)
    suf_loss = np.zeros(n + 1)
    # suffix sums from the largest ratio downwards
    suf_correct[:n] = np.cumsum(correct[order][::-1])[::-1]
    suf_loss[:n] = np.cumsum(loss[order][::-1])[::-1]
    first = np.searchsorted(r, taus, side="right")
    n_acc = (n - first).astype(np.int64)
    return n_acc, suf_correct[first], suf_loss[first]
