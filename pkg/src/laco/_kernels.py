"""Compiled virtual-queue kernels.

A queue is a ring buffer (q_tti, q_rem) with head/size/backlog held in a
small int array qstate. Packets older than expire_after TTIs are dropped
before service; bits served later than max_wait count as late.
"""
import numpy as np
from numba import njit

# indices into a totals vector
OFFERED, SERVED, DROPPED, LATE, MAX_LAT, LAT_BITS, BACKLOG_SUM = range(7)
N_TOTALS = 7
HEAD, SIZE, BACKLOG = range(3)


@njit(cache=True)
def _admit(t, arrival, expire_after, q_tti, q_rem, qstate, totals):
    """Enqueue this TTI's packet and expire stale ones; True if anything expired."""
    cap = q_tti.shape[0]
    if arrival > 0:
        pos = (qstate[HEAD] + qstate[SIZE]) % cap
        q_tti[pos] = t
        q_rem[pos] = arrival
        qstate[SIZE] += 1
        qstate[BACKLOG] += arrival
        totals[OFFERED] += arrival
    expired = False
    while qstate[SIZE] > 0 and t - q_tti[qstate[HEAD]] > expire_after:
        h = qstate[HEAD]
        totals[DROPPED] += q_rem[h]
        qstate[BACKLOG] -= q_rem[h]
        qstate[HEAD] = (h + 1) % cap
        qstate[SIZE] -= 1
        expired = True
    totals[BACKLOG_SUM] += qstate[BACKLOG]
    return expired


@njit(cache=True)
def _serve(t, budget, max_wait, q_tti, q_rem, qstate, served_hist, totals):
    """Drain up to budget bits head-first; True if any served bit was late."""
    cap = q_tti.shape[0]
    late = False
    left = budget
    while left > 0 and qstate[SIZE] > 0:
        h = qstate[HEAD]
        take = min(q_rem[h], left)
        lat = t - q_tti[h]
        q_rem[h] -= take
        left -= take
        qstate[BACKLOG] -= take
        served_hist[lat] += take
        totals[SERVED] += take
        totals[LAT_BITS] += take * lat
        if lat > totals[MAX_LAT]:
            totals[MAX_LAT] = lat
        if lat > max_wait:
            totals[LATE] += take
            late = True
        if q_rem[h] == 0:
            qstate[HEAD] = (h + 1) % cap
            qstate[SIZE] -= 1
    return late


@njit(cache=True)
def serve_epoch(arrivals, budget, t0, max_wait, expire_after, q_tti, q_rem, qstate, served_hist, flags):
    """One slice, fixed per-TTI service budget (bits)."""
    totals = np.zeros(N_TOTALS, dtype=np.int64)
    for k in range(arrivals.shape[0]):
        t = t0 + k
        bad = _admit(t, arrivals[k], expire_after, q_tti, q_rem, qstate, totals)
        if _serve(t, budget[k], max_wait, q_tti, q_rem, qstate, served_hist, totals):
            bad = True
        flags[k] = 1 if bad else 0
    return totals


@njit(cache=True)
def round_robin_alloc(backlog, bits_per_prb, tti, capacity, chunk):
    """Sequential PRB assignment starting from slice tti % I.

    Each backlogged, servable slice takes the chunks it needs to clear its
    backlog from what is left; empty or unservable slices are skipped.
    """
    n = backlog.shape[0]
    alloc = np.zeros(n, dtype=np.int64)
    left = capacity
    for j in range(n):
        i = (tti + j) % n
        if left <= 0:
            break
        if backlog[i] <= 0 or bits_per_prb[i] <= 0:
            continue
        need = (backlog[i] + bits_per_prb[i] - 1) // bits_per_prb[i]
        need = ((need + chunk - 1) // chunk) * chunk
        give = min(need, left)
        alloc[i] = give
        left -= give
    return alloc


@njit(cache=True)
def serve_epoch_rr(arrivals, bits_per_prb, t0, capacity, chunk, max_wait, expire_after,
                   q_tti, q_rem, qstate, served_hist, flags, prbs_used):
    """All slices jointly under per-TTI round-robin; arrays carry a leading slice axis."""
    n, T = arrivals.shape
    totals = np.zeros((n, N_TOTALS), dtype=np.int64)
    backlog = np.zeros(n, dtype=np.int64)
    bad = np.zeros(n, dtype=np.bool_)
    for k in range(T):
        t = t0 + k
        for i in range(n):
            bad[i] = _admit(t, arrivals[i, k], expire_after[i], q_tti[i], q_rem[i], qstate[i], totals[i])
            backlog[i] = qstate[i, BACKLOG]
        alloc = round_robin_alloc(backlog, bits_per_prb[:, k], t, capacity, chunk)
        for i in range(n):
            prbs_used[i] += alloc[i]
            if _serve(t, alloc[i] * bits_per_prb[i, k], max_wait[i], q_tti[i], q_rem[i],
                      qstate[i], served_hist[i], totals[i]):
                bad[i] = True
            flags[i, k] = 1 if bad[i] else 0
    return totals
