"""Compiled inner loops for the timestamp pipeline.

All kernels take int64 picosecond arrays sorted ascending.
"""

import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def correlate_into(a_ps, b_ps, tau_min, bin_ps, counts):
    """Add every (i, j) with tau_min <= b[j] - a[i] < tau_min + len(counts) * bin_ps to counts."""
    nbins = counts.shape[0]
    tau_max = tau_min + nbins * bin_ps
    nb = b_ps.shape[0]
    lo = 0
    for i in range(a_ps.shape[0]):
        t = a_ps[i]
        while lo < nb and b_ps[lo] - t < tau_min:
            lo += 1
        j = lo
        while j < nb:
            d = b_ps[j] - t
            if d >= tau_max:
                break
            counts[(d - tau_min) // bin_ps] += 1
            j += 1


@numba.njit(cache=True)
def greedy_pairs(a_ps, b_ps, lo_off, hi_off, out):
    """Match each a[i] to the earliest unmatched b[j] with lo_off <= b[j] - a[i] <= hi_off.

    Writes (i, j) rows into ``out`` and returns the number of matches.
    """
    nb = b_ps.shape[0]
    j = 0
    k = 0
    for i in range(a_ps.shape[0]):
        t = a_ps[i]
        while j < nb and b_ps[j] - t < lo_off:
            j += 1
        if j < nb and b_ps[j] - t <= hi_off:
            out[k, 0] = i
            out[k, 1] = j
            k += 1
            j += 1
    return k


@numba.njit(cache=True)
def dead_time_mask(ticks, resolution_ps, dead_time_ps):
    """Keep-mask after dropping events too close to the previously accepted one.

    Same-tick duplicates are always dropped so the output is strictly increasing.
    """
    n = ticks.shape[0]
    keep = np.zeros(n, dtype=np.bool_)
    if n == 0:
        return keep
    keep[0] = True
    last = ticks[0]
    for i in range(1, n):
        gap = ticks[i] - last
        if gap > 0 and gap * resolution_ps >= dead_time_ps:
            keep[i] = True
            last = ticks[i]
    return keep
