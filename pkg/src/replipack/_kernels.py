"""Numeric kernels behind the hot inner loops.

Three kernels dominate the runtime of the package: the exact binomial
tail sum (called inside every replica binary search), the bounded-cardinality
knapsack table fill (called once per pricing round), and the conditional
Gibbs sweep of the rare-event estimator (called once per splitting level).

Every kernel is written as a plain function and JIT compiled with numba
when available.  Setting the environment variable ``REPLIPACK_NO_NUMBA=1``
(or numba being absent) selects the fallback path: the scalar kernels run
as ordinary Python and the knapsack fill switches to a vectorized NumPy
implementation that produces bit-identical tables.  The selection happens
once at import time; ``benchmarks/kernel_bench.py`` compares both paths.
"""

import math
import os

import numpy as np


def _numba_wanted() -> bool:
    flag = os.environ.get("REPLIPACK_NO_NUMBA", "").strip().lower()
    return flag not in ("1", "true", "yes")


NUMBA_ENABLED = False
if _numba_wanted():
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - depends on environment
        pass

# Terms more than ~45 nats below the running maximum contribute less than
# 3e-20 relative and are skipped by every log-space scan below.
_LOG_CUTOFF = 45.0


def binom_cdf(k, n, p):
    """P(X <= k) for X ~ Binomial(n, p), exact to ~1e-13 relative.

    Sums the smaller of the two tails in log space, accumulating terms in
    ascending magnitude, with a single exponentiation of the common scale
    at the end.  Accurate for probabilities down to the double range even
    at n ~ 1e6.
    """
    if k < 0:
        return 0.0
    if k >= n:
        return 1.0
    if p <= 0.0:
        return 1.0
    if p >= 1.0:
        return 0.0
    lp = math.log(p)
    lq = math.log1p(-p)
    lgn = math.lgamma(n + 1.0)
    mode = int(math.floor((n + 1) * p))
    if k < mode:
        # lower tail, terms increase with j up to j = k
        top = lgn - math.lgamma(k + 1.0) - math.lgamma(n - k + 1.0) + k * lp + (n - k) * lq
        j = k - 1
        j_stop = 0
        while j >= 0:
            lt = lgn - math.lgamma(j + 1.0) - math.lgamma(n - j + 1.0) + j * lp + (n - j) * lq
            if lt < top - _LOG_CUTOFF:
                j_stop = j + 1
                break
            j -= 1
        acc = 0.0
        for j in range(j_stop, k + 1):
            lt = lgn - math.lgamma(j + 1.0) - math.lgamma(n - j + 1.0) + j * lp + (n - j) * lq
            acc += math.exp(lt - top)
        return math.exp(top) * acc if top > -745.0 else 0.0
    # upper tail P(X >= k+1), terms decrease with j above the mode
    top = lgn - math.lgamma(k + 2.0) - math.lgamma(n - k) + (k + 1) * lp + (n - k - 1) * lq
    j = k + 2
    j_stop = n
    while j <= n:
        lt = lgn - math.lgamma(j + 1.0) - math.lgamma(n - j + 1.0) + j * lp + (n - j) * lq
        if lt < top - _LOG_CUTOFF:
            j_stop = j - 1
            break
        j += 1
    acc = 0.0
    for j in range(j_stop, k, -1):
        lt = lgn - math.lgamma(j + 1.0) - math.lgamma(n - j + 1.0) + j * lp + (n - j) * lq
        acc += math.exp(lt - top)
    tail = math.exp(top) * acc if top > -745.0 else 0.0
    out = 1.0 - tail
    return out if out > 0.0 else 0.0


def trunc_binom_draw(n, p, kmax, u01):
    """One draw of Binomial(n, p) conditioned on X <= kmax, by inverse CDF.

    Weights are carried relative to the in-support mode so that deeply
    truncated supports (total mass ~1e-300) stay representable.  The CDF
    scan runs from kmax downward, where the conditional mass concentrates.
    """
    if kmax >= n:
        kmax = n
    if kmax <= 0:
        return 0
    q = 1.0 - p
    mode = int(math.floor((n + 1) * p))
    if mode > kmax:
        mode = kmax
    # total weight relative to t(mode) = 1
    total = 1.0
    t = 1.0
    j = mode
    while j >= 1:
        # t(j-1)/t(j) = j q / ((n - j + 1) p)
        t *= (j * q) / ((n - j + 1) * p)
        if t < total * 1e-18:
            break
        total += t
        j -= 1
    t = 1.0
    t_hi = 1.0
    hi = mode
    j = mode + 1
    while j <= kmax:
        t *= ((n - j + 1) * p) / (j * q)
        if t < total * 1e-18:
            break
        total += t
        t_hi = t
        hi = j
        j += 1
    target = u01 * total
    acc = 0.0
    t = t_hi
    j = hi
    while j > 0:
        acc += t
        if acc >= target:
            return j
        t *= (j * q) / ((n - j + 1) * p)
        j -= 1
    return 0


def gibbs_sweep(counts, machine_counts, slices, threshold, fail, uniforms):
    """One in-place conditional Gibbs sweep over a sample of alive-count vectors.

    ``counts`` has shape (N, nc).  Each coordinate c of each vector is
    redrawn from Binomial(machine_counts[c], 1 - fail) conditioned on the
    weighted total staying strictly below ``threshold``.  Every input
    vector must already satisfy the threshold; the sweep preserves that.
    """
    n_vec, nc = counts.shape
    p = 1.0 - fail
    for s in range(n_vec):
        total = 0.0
        for c in range(nc):
            total += slices[c] * counts[s, c]
        for c in range(nc):
            d_cur = total - slices[c] * counts[s, c]
            bound = (threshold - d_cur) / slices[c]
            kmax = int(math.ceil(bound)) - 1
            if kmax > machine_counts[c]:
                kmax = machine_counts[c]
            k = trunc_binom_draw(machine_counts[c], p, kmax, uniforms[s, c])
            counts[s, c] = k
            total = d_cur + slices[c] * k
    return counts


def trunc_binom_batch(n, p, kmax, uniforms):
    """Vector of conditioned draws, one per uniform (test and bench helper)."""
    out = np.empty(uniforms.shape[0], dtype=np.int64)
    for i in range(uniforms.shape[0]):
        out[i] = trunc_binom_draw(n, p, kmax, uniforms[i])
    return out


def split_knapsack_fill(sizes, profits, cap, max_items):
    """Bounded-cardinality knapsack with one optional split item, loop form.

    Items must be pre-sorted by non-increasing profit/size ratio; sizes are
    integers on a grid of ``cap`` units.  Returns (profit, weights) where
    weights holds the per-item fractions in the sorted order.  The split
    candidate for item i is evaluated against the table of items 0..i-1 at
    cardinality max_items-1, at the integer capacities u where the split
    fraction (cap - u) / sizes[i] changes.
    """
    n = sizes.shape[0]
    value = np.zeros((max_items + 1, cap + 1), dtype=np.float64)
    take = np.zeros((n, max_items + 1, cap + 1), dtype=np.uint8)
    best_split = 0.0
    best_item = -1
    best_u = 0
    best_x = 0.0
    for i in range(n):
        si = sizes[i]
        pi = profits[i]
        u_lo = cap - si + 1
        if u_lo < 0:
            u_lo = 0
        for u in range(u_lo, cap):
            x = (cap - u) / si
            cand = value[max_items - 1, u] + x * pi
            if cand > best_split:
                best_split = cand
                best_item = i
                best_u = u
                best_x = x
        for l in range(max_items, 0, -1):
            for u in range(cap, si - 1, -1):
                alt = value[l - 1, u - si] + pi
                if alt > value[l, u]:
                    value[l, u] = alt
                    take[i, l, u] = 1
    weights = np.zeros(n, dtype=np.float64)
    whole = value[max_items, cap]
    if best_split > whole:
        profit = best_split
        weights[best_item] = best_x
        l = max_items - 1
        u = best_u
        start = best_item - 1
    else:
        profit = whole
        l = max_items
        u = cap
        start = n - 1
    for i in range(start, -1, -1):
        if take[i, l, u] == 1:
            weights[i] = 1.0
            l -= 1
            u -= sizes[i]
    return profit, weights


def split_knapsack_fill_numpy(sizes, profits, cap, max_items):
    """Vectorized twin of :func:`split_knapsack_fill` (the no-numba path).

    Performs the same float comparisons in the same order along the item
    axis, so tables, tie-breaks and recovered weights match the loop form
    exactly.
    """
    n = sizes.shape[0]
    value = np.zeros((max_items + 1, cap + 1), dtype=np.float64)
    take = np.zeros((n, max_items + 1, cap + 1), dtype=np.uint8)
    best_split = 0.0
    best_item = -1
    best_u = 0
    best_x = 0.0
    us_all = np.arange(cap + 1)
    for i in range(n):
        si = int(sizes[i])
        pi = profits[i]
        u_lo = max(cap - si + 1, 0)
        if u_lo < cap:
            us = us_all[u_lo:cap]
            cand = value[max_items - 1, u_lo:cap] + ((cap - us) / si) * pi
            j = int(np.argmax(cand))
            if cand[j] > best_split:
                best_split = float(cand[j])
                best_item = i
                best_u = u_lo + j
                best_x = (cap - best_u) / si
        if si <= cap:
            for l in range(max_items, 0, -1):
                alt = value[l - 1, : cap + 1 - si] + pi
                upd = alt > value[l, si:]
                value[l, si:][upd] = alt[upd]
                take[i, l, si:] = upd
    weights = np.zeros(n, dtype=np.float64)
    whole = float(value[max_items, cap])
    if best_split > whole:
        profit = best_split
        weights[best_item] = best_x
        l = max_items - 1
        u = best_u
        start = best_item - 1
    else:
        profit = whole
        l = max_items
        u = cap
        start = n - 1
    for i in range(start, -1, -1):
        if take[i, l, u] == 1:
            weights[i] = 1.0
            l -= 1
            u -= int(sizes[i])
    return profit, weights


# Always-interpreted references, kept for the benchmark and equivalence tests.
binom_cdf_py = binom_cdf
trunc_binom_draw_py = trunc_binom_draw
gibbs_sweep_py = gibbs_sweep
trunc_binom_batch_py = trunc_binom_batch
split_knapsack_fill_py = split_knapsack_fill

if NUMBA_ENABLED:
    binom_cdf = njit(cache=True, nogil=True)(binom_cdf)
    trunc_binom_draw = njit(cache=True, nogil=True)(trunc_binom_draw)
    # the two callers below resolve the (now compiled) trunc_binom_draw global
    gibbs_sweep = njit(cache=True, nogil=True)(gibbs_sweep)
    trunc_binom_batch = njit(cache=True, nogil=True)(trunc_binom_batch)
    split_knapsack_fill = njit(cache=True, nogil=True)(split_knapsack_fill)
    split_knapsack_solve = split_knapsack_fill
else:
    split_knapsack_solve = split_knapsack_fill_numpy


def warmup():
    """Trigger JIT compilation of every kernel on tiny inputs."""
    binom_cdf(1, 3, 0.5)
    trunc_binom_draw(4, 0.9, 2, 0.5)
    counts = np.array([[1, 0]], dtype=np.int64)
    gibbs_sweep(
        counts,
        np.array([2, 2], dtype=np.int64),
        np.array([1.0, 1.0]),
        3.0,
        0.1,
        np.array([[0.3, 0.7]]),
    )
    trunc_binom_batch(4, 0.9, 2, np.array([0.2, 0.8]))
    split_knapsack_solve(np.array([2], dtype=np.int64), np.array([1.0]), 4, 2)
