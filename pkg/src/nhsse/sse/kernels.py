"""Numba kernels for fixed-length SSE sampling with directed loops.

Representation
--------------
``spins``      int8[N], 1 = up, 0 = down (the state at imaginary time 0).
``op_type``    int8[M], 0 identity, 1 diagonal, 2 hop left, 3 hop right.
``op_bond``    int32[M], bond index of each non-identity operator.

A vertex is a non-identity operator together with its four legs.  Leg bits of
the vertex code: 0 lower-left, 1 lower-right, 2 upper-left, 3 upper-right.
Leg ``l`` of vertex ``v`` has the global index ``4 * v + l``.

All kernels signal corruption through negative return codes instead of raising,
so the caller can report the failing configuration.
"""

from __future__ import annotations

import numpy as np
from numba import njit

ERR_PROPAGATION = -1  # off-diagonal operator does not match the propagated state
ERR_PERIODICITY = -2  # propagated state differs from the initial state after M slices
ERR_WINDING = -3      # winding current is not a multiple of N

CODE_HOP_RIGHT = 1 | (2 << 2)
CODE_HOP_LEFT = 2 | (1 << 2)


@njit(cache=True)
def op_type_of_code(code):
    if code == CODE_HOP_RIGHT:
        return 3
    if code == CODE_HOP_LEFT:
        return 2
    return 1


@njit(cache=True)
def current_of_code(code):
    # +1 for a right hop, -1 for a left hop
    if code == CODE_HOP_RIGHT:
        return 1
    if code == CODE_HOP_LEFT:
        return -1
    return 0


@njit(cache=True)
def exit_probabilities(leg_w):
    """Heat-bath exit table ``cum[b, code, l_in, l_out]`` (cumulative)."""
    nb = leg_w.shape[0]
    cum = np.zeros((nb, 16, 4, 4))
    for b in range(nb):
        for code in range(16):
            if leg_w[b, code] <= 0:
                continue
            for lin in range(4):
                tot = 0.0
                for lout in range(4):
                    if lout == lin:
                        nc = code
                    else:
                        nc = code ^ (1 << lin) ^ (1 << lout)
                    tot += leg_w[b, nc]
                    cum[b, code, lin, lout] = tot
                for lout in range(4):
                    cum[b, code, lin, lout] /= tot
    return cum


@njit(cache=True)
def diagonal_update(spins, op_type, op_bond, bond_sites, diag_w, beta, rng):
    """One pass of diagonal insertions/removals; returns n or an error code."""
    m = op_type.shape[0]
    nb = bond_sites.shape[0]
    n = 0
    for p in range(m):
        if op_type[p] != 0:
            n += 1
    state = spins.copy()
    ratio = beta * nb
    for p in range(m):
        t = op_type[p]
        if t == 0:
            b = rng.integers(0, nb)
            w = diag_w[b, state[bond_sites[b, 0]] + 2 * state[bond_sites[b, 1]]]
            if w > 0.0 and rng.random() * (m - n) < ratio * w:
                op_type[p] = 1
                op_bond[p] = b
                n += 1
        elif t == 1:
            b = op_bond[p]
            w = diag_w[b, state[bond_sites[b, 0]] + 2 * state[bond_sites[b, 1]]]
            if rng.random() * ratio * w < (m - n + 1):
                op_type[p] = 0
                n -= 1
        else:
            b = op_bond[p]
            i = bond_sites[b, 0]
            j = bond_sites[b, 1]
            if t == 3:
                if state[i] != 1 or state[j] != 0:
                    return ERR_PROPAGATION
            elif state[i] != 0 or state[j] != 1:
                return ERR_PROPAGATION
            state[i] = 1 - state[i]
            state[j] = 1 - state[j]
    for i in range(state.shape[0]):
        if state[i] != spins[i]:
            return ERR_PERIODICITY
    return n


@njit(cache=True)
def build_vertices(spins, op_type, op_bond, bond_sites, n_sites):
    """Vertex codes and the leg linked list of the current configuration.

    Returns ``(vpos, vbond, vcode, link, first, last, wrap)`` where ``first`` and
    ``last`` hold the first lower and last upper leg on each site (-1 if the
    site carries no operator) and ``wrap[leg]`` marks the two legs whose link
    crosses imaginary time zero.
    """
    m = op_type.shape[0]
    n = 0
    for p in range(m):
        if op_type[p] != 0:
            n += 1
    vpos = np.empty(n, np.int64)
    vbond = np.empty(n, np.int64)
    vcode = np.empty(n, np.int64)
    link = np.empty(4 * n, np.int64)
    wrap = np.zeros(4 * n, np.bool_)
    first = np.full(n_sites, -1, np.int64)
    last = np.full(n_sites, -1, np.int64)
    state = spins.copy()
    v = 0
    for p in range(m):
        t = op_type[p]
        if t == 0:
            continue
        b = op_bond[p]
        i = bond_sites[b, 0]
        j = bond_sites[b, 1]
        low = state[i] | (state[j] << 1)
        if t != 1:
            state[i] = 1 - state[i]
            state[j] = 1 - state[j]
        up = state[i] | (state[j] << 1)
        vpos[v] = p
        vbond[v] = b
        vcode[v] = low | (up << 2)
        for side in range(2):
            s = i if side == 0 else j
            leg = 4 * v + side
            if last[s] >= 0:
                link[leg] = last[s]
                link[last[s]] = leg
            else:
                first[s] = leg
            last[s] = leg + 2
        v += 1
    for s in range(n_sites):
        if first[s] >= 0:
            link[first[s]] = last[s]
            link[last[s]] = first[s]
            wrap[first[s]] = True
            wrap[last[s]] = True
    return vpos, vbond, vcode, link, first, last, wrap


@njit(cache=True)
def directed_loop(vbond, vcode, link, wrap, cum, max_len, fixed_sector, rng, stack, stats):
    """Grow and close one directed loop.

    ``stats`` (int64[8]) accumulates: loops, visited legs, bounces, exit draws,
    aborts, sector rejections.  Returns the change of the winding current
    ``sum(n3) - sum(n2)`` produced by the accepted loop (0 if undone).
    """
    nlegs = link.shape[0]
    j0 = rng.integers(0, nlegs)
    j = j0
    length = 0
    bounces = 0
    dcurrent = 0
    dmag = 0
    aborted = False
    while True:
        v = j >> 2
        lin = j & 3
        code = vcode[v]
        b = vbond[v]
        r = rng.random()
        lout = 3
        for k in range(3):
            if r < cum[b, code, lin, k]:
                lout = k
                break
        if lout == lin:
            nc = code
            bounces += 1
        else:
            nc = code ^ (1 << lin) ^ (1 << lout)
        dcurrent += current_of_code(nc) - current_of_code(code)
        vcode[v] = nc
        stack[length] = v * 16 + lin * 4 + lout
        length += 1
        if length >= max_len:
            aborted = True
            break
        j = 4 * v + lout
        if j == j0:
            break
        if wrap[j]:
            dmag += 2 * ((nc >> lout) & 1) - 1
        j = link[j]
        if j == j0:
            break
    stats[0] += 1
    stats[1] += length
    stats[2] += bounces
    stats[3] += length
    undo = aborted or (fixed_sector and dmag != 0)
    if aborted:
        stats[4] += 1
    elif undo:
        stats[5] += 1
    if undo:
        for k in range(length - 1, -1, -1):
            e = stack[k]
            v = e >> 4
            lin = (e >> 2) & 3
            lout = e & 3
            if lin != lout:
                vcode[v] ^= (1 << lin) ^ (1 << lout)
        return 0
    return dcurrent


@njit(cache=True)
def write_back(spins, op_type, vpos, vcode, first, rng):
    """Copy vertex codes back to operator types and the time-zero state."""
    for v in range(vpos.shape[0]):
        op_type[vpos[v]] = op_type_of_code(vcode[v])
    n_free = 0
    n_free_up = 0
    for s in range(spins.shape[0]):
        f = first[s]
        if f >= 0:
            spins[s] = (vcode[f >> 2] >> (f & 3)) & 1
        else:
            n_free += 1
            n_free_up += spins[s]
    if n_free > 1 and 0 < n_free_up < n_free:
        # free spins carry no weight: shuffle them within the magnetisation sector
        free = np.empty(n_free, np.int64)
        k = 0
        for s in range(spins.shape[0]):
            if first[s] < 0:
                free[k] = s
                k += 1
        vals = np.zeros(n_free, np.int8)
        vals[:n_free_up] = 1
        for k in range(n_free - 1, 0, -1):
            r = rng.integers(0, k + 1)
            tmp = vals[k]
            vals[k] = vals[r]
            vals[r] = tmp
        for k in range(n_free):
            spins[free[k]] = vals[k]


@njit(cache=True)
def winding_current(op_type):
    c = 0
    for p in range(op_type.shape[0]):
        if op_type[p] == 3:
            c += 1
        elif op_type[p] == 2:
            c -= 1
    return c


@njit(cache=True)
def loop_sweep(spins, op_type, op_bond, bond_sites, cum, n_loops, max_len, fixed_sector,
               rng, stats, ev_w, ev_dw, w_start, n_sites, periodic):
    """Run ``n_loops`` directed loops on one linked-list build.

    Loops that change the winding number are logged in ``ev_w`` (winding before
    the loop) and ``ev_dw``; the number of logged events is returned, or an
    error code.
    """
    vpos, vbond, vcode, link, first, last, wrap = build_vertices(
        spins, op_type, op_bond, bond_sites, n_sites)
    if vpos.shape[0] == 0:
        return 0
    stack = np.empty(max_len + 1, np.int64)
    w = w_start
    n_ev = 0
    acc = 0
    for _ in range(n_loops):
        dc = directed_loop(vbond, vcode, link, wrap, cum, max_len, fixed_sector, rng, stack, stats)
        if dc != 0:
            if not periodic or dc % n_sites != 0:
                return ERR_WINDING
            dw = dc // n_sites
            if n_ev < ev_w.shape[0]:
                ev_w[n_ev] = w
                ev_dw[n_ev] = dw
                n_ev += 1
            w += dw
            acc += dw
    write_back(spins, op_type, vpos, vcode, first, rng)
    return n_ev


@njit(cache=True)
def measure(spins, op_type, op_bond, bond_sites, site_bonds, counts, zz):
    """Accumulate operator counts per (type, bond) and the time-averaged Sz Sz per bond.

    Returns n, or an error code if the configuration is not periodic.
    """
    m = op_type.shape[0]
    nb = bond_sites.shape[0]
    state = spins.copy()
    cur = np.empty(nb)
    last = np.zeros(nb, np.int64)
    acc = np.zeros(nb)
    for b in range(nb):
        cur[b] = 0.25 * (2 * state[bond_sites[b, 0]] - 1) * (2 * state[bond_sites[b, 1]] - 1)
    n = 0
    for p in range(m):
        t = op_type[p]
        if t == 0:
            continue
        n += 1
        b = op_bond[p]
        counts[t - 1, b] += 1
        if t == 1:
            continue
        i = bond_sites[b, 0]
        j = bond_sites[b, 1]
        state[i] = 1 - state[i]
        state[j] = 1 - state[j]
        for s in (i, j):
            for k in range(site_bonds.shape[1]):
                bb = site_bonds[s, k]
                if bb < 0:
                    continue
                acc[bb] += cur[bb] * (p + 1 - last[bb])
                last[bb] = p + 1
                cur[bb] = 0.25 * (2 * state[bond_sites[bb, 0]] - 1) * (2 * state[bond_sites[bb, 1]] - 1)
    for b in range(nb):
        acc[b] += cur[b] * (m - last[b])
        zz[b] += acc[b] / m
    for s in range(state.shape[0]):
        if state[s] != spins[s]:
            return ERR_PERIODICITY
    return n


@njit(cache=True)
def run_sweeps(spins, op_type, op_bond, bond_sites, site_bonds, diag_w, cum, beta,
               n_sweeps, n_loops, max_len, fixed_sector, n_sites, periodic, rng,
               stats, n_series, w_series, counts, zz, trans, w_offset, do_measure):
    """Run ``n_sweeps`` full sweeps; returns 0 or the first error code.

    ``trans[0, w + w_offset]`` counts winding-increasing loops started in
    sector ``w``, ``trans[1, ...]`` decreasing ones.
    """
    ev_w = np.empty(n_loops, np.int64)
    ev_dw = np.empty(n_loops, np.int64)
    w = 0
    if periodic:
        c = winding_current(op_type)
        if c % n_sites != 0:
            return ERR_WINDING
        w = c // n_sites
    for sweep in range(n_sweeps):
        r = diagonal_update(spins, op_type, op_bond, bond_sites, diag_w, beta, rng)
        if r < 0:
            return r
        n_ev = loop_sweep(spins, op_type, op_bond, bond_sites, cum, n_loops, max_len,
                          fixed_sector, rng, stats, ev_w, ev_dw, w, n_sites, periodic)
        if n_ev < 0:
            return n_ev
        for k in range(n_ev):
            idx = ev_w[k] + w_offset
            if 0 <= idx < trans.shape[1]:
                if ev_dw[k] > 0:
                    trans[0, idx] += 1
                else:
                    trans[1, idx] += 1
            w += ev_dw[k]
        if do_measure:
            nn = measure(spins, op_type, op_bond, bond_sites, site_bonds, counts, zz)
            if nn < 0:
                return nn
            n_series[sweep] = nn
            w_series[sweep] = w
    return 0
