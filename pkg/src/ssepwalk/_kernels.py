"""Numba kernels for the event loops.

Everything here is deterministic given its inputs: randomness is drawn by
the callers (numpy Philox streams) and passed in as arrays.  Occupation time
is accumulated with Neumaier compensation so that downstream identity checks
see errors at the 1e-12 scale, not the naive-summation scale.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def ring_chunk(occ, gaps, bonds, t_start, horizon, out_times, out_bonds):
    """Apply one chunk of bond rings; record effective swaps.

    Ring i fires at t_start + gaps[0] + ... + gaps[i]; rings past the horizon
    are discarded (the chunk is then final).  Returns
    (n_effective, n_consumed, t_last, finished).
    """
    n = gaps.shape[0]
    L = occ.shape[0]
    t = t_start
    k = 0
    for i in range(n):
        t_next = t + gaps[i]
        if t_next > horizon:
            return k, i, t, True
        t = t_next
        b = bonds[i]
        bb = b + 1
        if bb == L:
            bb = 0
        a = occ[b]
        c = occ[bb]
        if a != c:
            occ[b] = c
            occ[bb] = a
            out_times[k] = t
            out_bonds[k] = b
            k += 1
    return k, n, t, False


@njit(cache=True)
def apply_swaps(occ, bonds, n):
    """Replay the first n swaps in order (bond b exchanges sites b, b+1)."""
    L = occ.shape[0]
    for i in range(n):
        b = bonds[i]
        bb = b + 1
        if bb == L:
            bb = 0
        a = occ[b]
        occ[b] = occ[bb]
        occ[bb] = a


@njit(cache=True)
def walk_chunk(
    occ,
    lam,
    ev_times,
    ev_bonds,
    n_ev,
    prop_times,
    prop_u,
    prop_dirs,
    n_prop,
    t_end,
    close_interval,
    jump_times,
    jump_dirs,
    # mutable state, threaded through chunk calls
    x,
    site,
    xi0,
    t_anchor,
    occ_sum,
    occ_comp,
    max_abs,
    prop_idx,
    n_jumps,
):
    """Advance the walk through one chunk of environment swaps.

    Processes swap events and walk proposals in time order up to t_end,
    environment first at ties.  Every swap in ev_* is effective, so a swap on
    a bond adjacent to the walker always flips the occupancy under it.
    Proposals are accepted with probability 1 - lam * xi0 (thinning against
    the rate-2 proposal process).  Occupation time of the walker's site is
    accumulated lazily at the breakpoints where it can change.
    """
    L = occ.shape[0]
    i = 0
    j = prop_idx
    while True:
        te = ev_times[i] if i < n_ev else np.inf
        tp = prop_times[j] if j < n_prop else np.inf
        if te <= tp:
            if te > t_end:
                break
            b = ev_bonds[i]
            bb = b + 1
            if bb == L:
                bb = 0
            if b == site or bb == site:
                if xi0 == 1:
                    # Neumaier-compensated add of the closed interval
                    y = te - t_anchor
                    s = occ_sum + y
                    if abs(occ_sum) >= abs(y):
                        occ_comp += (occ_sum - s) + y
                    else:
                        occ_comp += (y - s) + occ_sum
                    occ_sum = s
                t_anchor = te
            a = occ[b]
            occ[b] = occ[bb]
            occ[bb] = a
            xi0 = occ[site]
            i += 1
        else:
            if tp > t_end:
                break
            if prop_u[j] < 1.0 - lam * xi0:
                if xi0 == 1:
                    y = tp - t_anchor
                    s = occ_sum + y
                    if abs(occ_sum) >= abs(y):
                        occ_comp += (occ_sum - s) + y
                    else:
                        occ_comp += (y - s) + occ_sum
                    occ_sum = s
                t_anchor = tp
                d = prop_dirs[j]
                x += d
                site += d
                if site == L:
                    site = 0
                elif site == -1:
                    site = L - 1
                ax = -x if x < 0 else x
                if ax > max_abs:
                    max_abs = ax
                xi0 = occ[site]
                jump_times[n_jumps] = tp
                jump_dirs[n_jumps] = d
                n_jumps += 1
            j += 1
    if close_interval:
        if xi0 == 1:
            y = t_end - t_anchor
            s = occ_sum + y
            if abs(occ_sum) >= abs(y):
                occ_comp += (occ_sum - s) + y
            else:
                occ_comp += (y - s) + occ_sum
            occ_sum = s
        t_anchor = t_end
    return x, site, xi0, t_anchor, occ_sum, occ_comp, max_abs, j, n_jumps


@njit(cache=True)
def ring_chunk_site_occ(
    occ,
    gaps,
    bonds,
    t_start,
    horizon,
    site_occ_time,
    site_last_t,
    pair_state,
):
    """Ring chunk that tracks per-site occupation time instead of a log.

    site_occ_time[s] accumulates the time site s spent occupied, updated on
    flips.  pair_state = (product_time, last_t) accumulates the time both
    sites 0 and 1 were occupied, for the distance-1 correlation probe.
    Returns (n_consumed, t_last, finished).
    """
    n = gaps.shape[0]
    L = occ.shape[0]
    t = t_start
    for i in range(n):
        t_next = t + gaps[i]
        if t_next > horizon:
            return i, t, True
        t = t_next
        b = bonds[i]
        bb = b + 1
        if bb == L:
            bb = 0
        a = occ[b]
        c = occ[bb]
        if a != c:
            if b <= 1 or bb <= 1:
                if occ[0] == 1 and occ[1] == 1:
                    pair_state[0] += t - pair_state[1]
                pair_state[1] = t
            if a == 1:
                site_occ_time[b] += t - site_last_t[b]
            if c == 1:
                site_occ_time[bb] += t - site_last_t[bb]
            site_last_t[b] = t
            site_last_t[bb] = t
            occ[b] = c
            occ[bb] = a
    return n, t, False


@njit(cache=True)
def finalize_site_occ(occ, horizon, site_occ_time, site_last_t, pair_state):
    """Close all per-site occupation intervals at the horizon."""
    L = occ.shape[0]
    for s in range(L):
        if occ[s] == 1:
            site_occ_time[s] += horizon - site_last_t[s]
        site_last_t[s] = horizon
    if occ[0] == 1 and occ[1] == 1:
        pair_state[0] += horizon - pair_state[1]
    pair_state[1] = horizon
