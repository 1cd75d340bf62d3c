"""Numba kernels for forward replay, coupled replay and dual traversal.

All kernels operate on the column arrays of an EventLog and on uint8 site
state vectors (bit 0 animal, bit 1 fleas). Forward kernels apply marks with
index in [i0, i1) in increasing order; dual kernels traverse the same range
in decreasing order.
"""
from __future__ import annotations

import numpy as np
from numba import njit

AA = 0  # animal arrow
AD = 1  # animal death
FA = 2  # flea arrow
FD = 3  # flea death mark (star)


@njit(cache=True, nogil=True, inline="always")
def apply_one(state, k, x, y, birth_ok):
    """Apply one mark in place; return the changed site or -1."""
    if k == AA:
        if birth_ok[x] and (state[x] & 1) and not (state[y] & 1):
            state[y] |= 1
            return y
    elif k == AD:
        if state[x] & 1:
            state[x] &= 2
            return x
    elif k == FA:
        if birth_ok[x] and state[x] == 3 and state[y] == 1:
            state[y] = 3
            return y
    else:
        if state[x] == 2:
            state[x] = 0
            return x
    return -1


@njit(cache=True, nogil=True)
def run_marks(state, kind, time, src, dst, birth_ok, i0, i1, t_start, fleas_on, record, snap_times):
    """Forward replay. ``state`` is modified in place.

    Returns (n_changes, ch_mark, ch_old, ch_new, t_ext_animals, t_ext_fleas,
    snaps). Changed sites are recoverable from ch_mark; extinction times are
    NaN when not observed.
    """
    n = state.shape[0]
    n_a = 0
    n_b = 0
    for s in range(n):
        n_a += state[s] & 1
        n_b += (state[s] >> 1) & 1
    t_a = t_start if n_a == 0 else np.nan
    t_b = t_start if n_b == 0 else np.nan
    cap = (i1 - i0) if record else 0
    ch_mark = np.empty(cap, dtype=np.int64)
    ch_old = np.empty(cap, dtype=np.uint8)
    ch_new = np.empty(cap, dtype=np.uint8)
    nc = 0
    n_snap = snap_times.shape[0]
    snaps = np.zeros((n_snap, n), dtype=np.uint8)
    q = 0
    for i in range(i0, i1):
        while q < n_snap and time[i] > snap_times[q]:
            snaps[q, :] = state
            q += 1
        k = kind[i]
        if not fleas_on and k >= FA:
            continue
        x = src[i]
        old_x = state[x]
        old_y = state[dst[i]]
        c = apply_one(state, k, x, dst[i], birth_ok)
        if c < 0:
            continue
        old = old_x if c == x else old_y
        new = state[c]
        da = (new & 1) - (old & 1)
        db = ((new >> 1) & 1) - ((old >> 1) & 1)
        n_a += da
        n_b += db
        if n_a == 0 and da < 0 and np.isnan(t_a):
            t_a = time[i]
        if n_b == 0 and db < 0 and np.isnan(t_b):
            t_b = time[i]
        if record:
            ch_mark[nc] = i
            ch_old[nc] = old
            ch_new[nc] = new
        nc += 1
    while q < n_snap:
        snaps[q, :] = state
        q += 1
    return nc, ch_mark[: min(nc, cap)], ch_old[: min(nc, cap)], ch_new[: min(nc, cap)], t_a, t_b, snaps


@njit(cache=True, nogil=True)
def coupled_violation(s1, s2, kind, src, dst, birth_ok, i0, i1):
    """Replay two states on the same marks; index of first mark after which
    s1 <= s2 fails at some site, else -1. Assumes s1 <= s2 initially."""
    for i in range(i0, i1):
        k = kind[i]
        x = src[i]
        y = dst[i]
        c1 = apply_one(s1, k, x, y, birth_ok)
        c2 = apply_one(s2, k, x, y, birth_ok)
        if c1 >= 0 and (s1[c1] & ~s2[c1] & 3):
            return i
        if c2 >= 0 and (s1[c2] & ~s2[c2] & 3):
            return i
    return -1


@njit(cache=True, nogil=True)
def host_flags(animals, ch_mark, ch_site, ch_new, kind, src, dst, i0, i1):
    """Animal occupancy of flea-mark endpoints, replayed from a recorded
    animal history. ``animals`` is the animal mask at the start of [i0, i1)
    and is updated in place. Bit 0: source hosted, bit 1: target hosted."""
    flags = np.zeros(i1 - i0, dtype=np.uint8)
    p = 0
    m = ch_mark.shape[0]
    while p < m and ch_mark[p] < i0:
        p += 1
    for i in range(i0, i1):
        while p < m and ch_mark[p] < i:
            animals[ch_site[p]] = (ch_new[p] & 1) != 0
            p += 1
        if kind[i] >= FA:
            f = np.uint8(0)
            if animals[src[i]]:
                f |= 1
            if animals[dst[i]]:
                f |= 2
            flags[i - i0] = f
    return flags


@njit(cache=True, nogil=True)
def dual_marks(member, kind, src, dst, birth_ok, flags, flag_offset, i_lo, i_hi, fleas, record):
    """Reverse traversal over marks i_hi-1 down to i_lo, updating ``member``.

    Animal dual (fleas=False): a death at x removes x; an arrow y->x with x in
    the dual adds y. Flea dual: a star at x removes x only if x is hostless;
    a flea arrow y->x adds y only if both endpoints are hosted. Truncation
    blocks arrows whose source may not give birth.
    Returns (n_changes, ch_mark, ch_site, ch_added, size).
    """
    cap = (i_hi - i_lo) if record else 0
    ch_mark = np.empty(cap, dtype=np.int64)
    ch_site = np.empty(cap, dtype=np.int64)
    ch_add = np.empty(cap, dtype=np.bool_)
    size = 0
    for s in range(member.shape[0]):
        size += member[s]
    nc = 0
    for i in range(i_hi - 1, i_lo - 1, -1):
        k = kind[i]
        changed = -1
        added = False
        if not fleas:
            if k == AD:
                if member[src[i]]:
                    member[src[i]] = False
                    changed = src[i]
            elif k == AA:
                y = src[i]
                if member[dst[i]] and not member[y] and birth_ok[y]:
                    member[y] = True
                    changed = y
                    added = True
        else:
            if k == FD:
                x = src[i]
                if member[x] and not (flags[i - flag_offset] & 1):
                    member[x] = False
                    changed = x
            elif k == FA:
                y = src[i]
                f = flags[i - flag_offset]
                if member[dst[i]] and not member[y] and birth_ok[y] and (f & 1) and (f & 2):
                    member[y] = True
                    changed = y
                    added = True
        if changed >= 0:
            size += 1 if added else -1
            if record:
                ch_mark[nc] = i
                ch_site[nc] = changed
                ch_add[nc] = added
            nc += 1
    return nc, ch_mark[: min(nc, cap)], ch_site[: min(nc, cap)], ch_add[: min(nc, cap)], size


@njit(cache=True, nogil=True)
def changed_sites(ch_mark, ch_old, ch_new, kind, src, dst):
    """Site changed by each recorded forward change."""
    out = np.empty(ch_mark.shape[0], dtype=np.int64)
    for p in range(ch_mark.shape[0]):
        i = ch_mark[p]
        k = kind[i]
        # arrows change their target, deaths and stars their own site
        if k == AA or k == FA:
            out[p] = dst[i]
        else:
            out[p] = src[i]
    return out


@njit(cache=True, nogil=True)
def run_thinned(state, kind, src, dst, birth_ok, coins, keep_below, i0, i1):
    """Forward replay that skips flea arrows whose coin is >= ``keep_below``.

    Equivalent to replaying a flea-arrow-thinned log; returns the number of
    flea-carrying sites at the end.
    """
    for i in range(i0, i1):
        k = kind[i]
        if k == FA and coins[i] >= keep_below:
            continue
        apply_one(state, k, src[i], dst[i], birth_ok)
    n_b = 0
    for s in range(state.shape[0]):
        n_b += (state[s] >> 1) & 1
    return n_b
