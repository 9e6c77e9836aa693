"""Compiled event loops.

Every dynamics in this package is a sequential sweep over a time-ordered
list of site updates; these numba kernels are the shared engine.  All of
them operate on "padded" fields (interior values first, then fixed
boundary values) so a site update is four gathers, one average and one
store, with no interior/boundary branching.

The running sums tracked incrementally (total mass, weighted sums,
truncated l2, active-site counts) are re-derived from the field every
``4 * n_interior`` events to cap floating-point drift; coalescence
detection never relies on them (it uses the exact nonzero count).
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# fstate slots
F_V = 0
F_L2 = 1
# istate slots
I_ACTIVE = 0
I_GRID = 1
I_LEVEL = 2
I_NEG = 3
I_FAIL = 4
I_EVENTS = 5
I_RESUM = 6
# drift slots
D_SUM = 0
D_SUMSQ = 1
D_COUNT = 2

REASON_EXHAUSTED = 0
REASON_TIME = 1
REASON_VOLUME = 2
REASON_COALESCED = 3


@njit(cache=True, nogil=True)
def heat_flow_run(values, nbr, sites, rec_pos, rec_total, rec_w, w):
    """Zero-noise sweep: ``values[v] <- mean of the 4 padded neighbours``.

    ``rec_pos`` holds ascending event counts; after exactly ``rec_pos[r]``
    events the running interior total and the weighted sum ``<w, values>``
    are stored into ``rec_total[r]`` / ``rec_w[r]``.
    """
    ni = nbr.shape[0]
    total = 0.0
    wsum = 0.0
    for i in range(ni):
        total += values[i]
        wsum += w[i] * values[i]
    r = 0
    nrec = rec_pos.shape[0]
    nev = sites.shape[0]
    resum = 4 * ni
    since = 0
    for j in range(nev):
        while r < nrec and rec_pos[r] == j:
            rec_total[r] = total
            rec_w[r] = wsum
            r += 1
        v = sites[j]
        new = 0.25 * (values[nbr[v, 0]] + values[nbr[v, 1]]
                      + values[nbr[v, 2]] + values[nbr[v, 3]])
        dv = new - values[v]
        values[v] = new
        total += dv
        wsum += w[v] * dv
        since += 1
        if since == resum:
            total = 0.0
            wsum = 0.0
            for i in range(ni):
                total += values[i]
                wsum += w[i] * values[i]
            since = 0
    while r < nrec:
        rec_total[r] = total
        rec_w[r] = wsum
        r += 1


@njit(cache=True, nogil=True)
def forward_run(values, nbr, sites, marks, snap_pos, snaps):
    """Glauber sweep ``values[v] <- neighbour mean + mark``.

    Snapshots of the interior block are copied out after ``snap_pos[r]``
    events.  Returns the running maximum of ``|updated value|`` over all
    event times (the initial field is not included).
    """
    ni = nbr.shape[0]
    r = 0
    nrec = snap_pos.shape[0]
    nev = sites.shape[0]
    max_abs = 0.0
    for j in range(nev):
        while r < nrec and snap_pos[r] == j:
            for i in range(ni):
                snaps[r, i] = values[i]
            r += 1
        v = sites[j]
        new = 0.25 * (values[nbr[v, 0]] + values[nbr[v, 1]]
                      + values[nbr[v, 2]] + values[nbr[v, 3]]) + marks[j]
        values[v] = new
        if abs(new) > max_abs:
            max_abs = abs(new)
    while r < nrec:
        for i in range(ni):
            snaps[r, i] = values[i]
        r += 1
    return max_abs


@njit(cache=True, nogil=True)
def _resum_state(dh, ni, fstate, istate):
    total = 0.0
    l2 = 0.0
    active = 0
    for i in range(ni):
        x = dh[i]
        total += x
        if x != 0.0:
            active += 1
            if x * x < 1.0:
                l2 += x * x
            else:
                l2 += 1.0
    fstate[F_V] = total
    fstate[F_L2] = l2
    istate[I_ACTIVE] = active


@njit(cache=True, nogil=True)
def _flush_grid(tau, grid_times, grid_v, grid_n, grid_l2, fstate, istate):
    gp = istate[I_GRID]
    while gp < grid_times.shape[0] and grid_times[gp] < tau:
        grid_v[gp] = fstate[F_V]
        grid_n[gp] = istate[I_ACTIVE]
        grid_l2[gp] = fstate[F_L2]
        gp += 1
    istate[I_GRID] = gp


@njit(cache=True, nogil=True)
def _bookkeep(tau, v, old, new, dh, fstate, istate, drift,
              levels, level_times):
    dh[v] = new
    dv = new - old
    fstate[F_V] += dv
    o2 = old * old
    n2 = new * new
    fstate[F_L2] += (n2 if n2 < 1.0 else 1.0) - (o2 if o2 < 1.0 else 1.0)
    if new != 0.0 and old == 0.0:
        istate[I_ACTIVE] += 1
    elif new == 0.0 and old != 0.0:
        istate[I_ACTIVE] -= 1
    if new < 0.0:
        istate[I_NEG] += 1
    drift[D_SUM] += dv
    drift[D_SUMSQ] += dv * dv
    drift[D_COUNT] += 1.0
    lp = istate[I_LEVEL]
    while lp < levels.shape[0] and fstate[F_V] <= levels[lp]:
        level_times[lp] = tau
        lp += 1
    istate[I_LEVEL] = lp
    istate[I_EVENTS] += 1


@njit(cache=True, nogil=True)
def identity_phase_run(dh, nbr, sites, times, t_stop, v_stop,
                       grid_times, grid_v, grid_n, grid_l2,
                       levels, level_times, fstate, istate, drift):
    """Identity-coupling sweep of the discrepancy field.

    Under the identity coupling the discrepancy evolves autonomously by
    neighbour averaging (the shared Gaussian marks cancel).  Stops when an
    event time exceeds ``t_stop`` (the event is left unprocessed), when
    the total discrepancy drops to ``v_stop`` or below, or when the chunk
    is exhausted.  Returns ``(next_event_index, reason)``.
    """
    ni = nbr.shape[0]
    nev = sites.shape[0]
    resum = 4 * ni
    for j in range(nev):
        tau = times[j]
        if tau > t_stop:
            return j, REASON_TIME
        _flush_grid(tau, grid_times, grid_v, grid_n, grid_l2, fstate, istate)
        v = sites[j]
        old = dh[v]
        new = 0.25 * (dh[nbr[v, 0]] + dh[nbr[v, 1]] + dh[nbr[v, 2]] + dh[nbr[v, 3]])
        _bookkeep(tau, v, old, new, dh, fstate, istate, drift, levels, level_times)
        istate[I_RESUM] += 1
        if istate[I_RESUM] >= resum:
            _resum_state(dh, ni, fstate, istate)
            istate[I_RESUM] = 0
        if fstate[F_V] <= v_stop:
            return j + 1, REASON_VOLUME
    return nev, REASON_EXHAUSTED


@njit(cache=True, nogil=True)
def sticky_phase_run(dh, nbr, sites, times, xi, uu,
                     grid_times, grid_v, grid_n, grid_l2,
                     levels, level_times, fstate, istate, drift):
    """Sticky-coupling sweep of the discrepancy field.

    Per event at site ``v`` with neighbour-mean gap ``delta``: the two
    update Gaussians are maximally coupled by reflection, so the new
    discrepancy is exactly 0 with probability ``1 - erf(delta/(2 sqrt 2))``
    and ``delta - 2 xi`` (positive) otherwise, with ``xi`` the lower
    chain's standard normal.  One ``(xi, u)`` pair is consumed per event
    regardless of outcome so random streams stay aligned with the
    unoptimized reference implementation.

    Returns ``(next_event_index, coalescence_time, reason)`` where the
    time is NaN unless the active set emptied.
    """
    ni = nbr.shape[0]
    nev = sites.shape[0]
    resum = 4 * ni
    for j in range(nev):
        tau = times[j]
        _flush_grid(tau, grid_times, grid_v, grid_n, grid_l2, fstate, istate)
        v = sites[j]
        old = dh[v]
        delta = 0.25 * (dh[nbr[v, 0]] + dh[nbr[v, 1]] + dh[nbr[v, 2]] + dh[nbr[v, 3]])
        x = xi[j]
        u = uu[j]
        if delta == 0.0:
            new = 0.0
        else:
            expo = delta * x - 0.5 * delta * delta
            if expo >= 0.0 or u <= math.exp(expo):
                new = 0.0
            else:
                new = delta - 2.0 * x
                istate[I_FAIL] += 1
        _bookkeep(tau, v, old, new, dh, fstate, istate, drift, levels, level_times)
        istate[I_RESUM] += 1
        if istate[I_RESUM] >= resum:
            _resum_state(dh, ni, fstate, istate)
            istate[I_RESUM] = 0
        if istate[I_ACTIVE] == 0:
            fstate[F_V] = 0.0
            fstate[F_L2] = 0.0
            lp = istate[I_LEVEL]
            while lp < levels.shape[0]:
                level_times[lp] = tau
                lp += 1
            istate[I_LEVEL] = lp
            return j + 1, tau, REASON_COALESCED
    return nev, np.nan, REASON_EXHAUSTED


@njit(cache=True, nogil=True)
def killed_walk_visit_counts(start, target, nbr, is_interior, steps, n_walks, seed):
    """Monte Carlo visit counts at ``target`` for the killed discrete walk.

    Independent oracle used by tests against the Green's function; walks
    take uniform neighbour steps until absorbed (or ``steps`` moves).
    """
    np.random.seed(seed)
    counts = np.empty(n_walks, dtype=np.int64)
    for w in range(n_walks):
        pos = start
        c = 1 if pos == target else 0
        for _ in range(steps):
            pos = nbr[pos, np.random.randint(0, 4)]
            if not is_interior[pos]:
                break
            if pos == target:
                c += 1
        counts[w] = c
    return counts
