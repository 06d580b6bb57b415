"""Fast-marching kernels (numba) for |grad tau|^2 = c on a uniform grid.

First-order upwind stencils with optional one-sided second-order upgrades
where two frozen neighbors line up causally.  The source singularity is
removed by freezing an analytic ball tau = sqrt(c(y)) * |x - y| around the
source before marching.
"""

import numpy as np
from numba import njit

FAR = np.uint8(0)
NARROW = np.uint8(1)
FROZEN = np.uint8(2)

INF = 1e30


@njit(cache=True, inline="always")
def _heap_push(keys, idxs, size, key, idx):
    i = size
    keys[i] = key
    idxs[i] = idx
    while i > 0:
        p = (i - 1) >> 1
        if keys[p] <= keys[i]:
            break
        keys[p], keys[i] = keys[i], keys[p]
        idxs[p], idxs[i] = idxs[i], idxs[p]
        i = p
    return size + 1


@njit(cache=True, inline="always")
def _heap_pop(keys, idxs, size):
    key = keys[0]
    idx = idxs[0]
    size -= 1
    keys[0] = keys[size]
    idxs[0] = idxs[size]
    i = 0
    while True:
        l = 2 * i + 1
        m = i
        if l < size and keys[l] < keys[m]:
            m = l
        r = l + 1
        if r < size and keys[r] < keys[m]:
            m = r
        if m == i:
            break
        keys[m], keys[i] = keys[i], keys[m]
        idxs[m], idxs[i] = idxs[i], idxs[m]
        i = m
    return key, idx, size


@njit(cache=True)
def _update_node(tau, state, c, n1, n2, n3, i, j, k, h, order):
    """Candidate tau at (i,j,k) from frozen upwind neighbors."""
    alpha = np.empty(3)
    vbar = np.empty(3)
    nact = 0
    for axis in range(3):
        if axis == 0:
            lim, stride = n1, n2 * n3
        elif axis == 1:
            lim, stride = n2, n3
        else:
            lim, stride = n3, 1
        pos = i if axis == 0 else (j if axis == 1 else k)
        idx = (i * n2 + j) * n3 + k
        v1 = INF
        d1 = 0
        if pos > 0 and state[idx - stride] == FROZEN and tau[idx - stride] < v1:
            v1 = tau[idx - stride]
            d1 = -1
        if pos < lim - 1 and state[idx + stride] == FROZEN and tau[idx + stride] < v1:
            v1 = tau[idx + stride]
            d1 = 1
        if v1 < INF:
            a = 1.0
            vb = v1
            if order == 2:
                p2 = pos + 2 * d1
                if 0 <= p2 < lim:
                    idx2 = idx + 2 * d1 * stride
                    if state[idx2] == FROZEN and tau[idx2] <= v1:
                        a = 2.25  # (3/2)^2 one-sided second-order weight
                        vb = (4.0 * v1 - tau[idx2]) / 3.0
            alpha[nact] = a
            vbar[nact] = vb
            nact += 1
    if nact == 0:
        return INF
    # insertion sort by vbar
    for a_ in range(1, nact):
        va = vbar[a_]
        aa = alpha[a_]
        b_ = a_ - 1
        while b_ >= 0 and vbar[b_] > va:
            vbar[b_ + 1] = vbar[b_]
            alpha[b_ + 1] = alpha[b_]
            b_ -= 1
        vbar[b_ + 1] = va
        alpha[b_ + 1] = aa
    rhs = c[(i * n2 + j) * n3 + k] * h * h
    m = nact
    while m > 0:
        A = 0.0
        B = 0.0
        C = -rhs
        for q in range(m):
            A += alpha[q]
            B += alpha[q] * vbar[q]
            C += alpha[q] * vbar[q] * vbar[q]
        disc = B * B - A * C
        if disc >= 0.0:
            t = (B + np.sqrt(disc)) / A
            if t >= vbar[m - 1]:
                return t
        m -= 1
    return INF


@njit(cache=True)
def fast_march(c_flat, n1, n2, n3, h, src_idx_list, src_tau_list, order):
    """March outward from pre-frozen source nodes; returns flat tau."""
    n = n1 * n2 * n3
    tau = np.full(n, INF)
    state = np.zeros(n, dtype=np.uint8)
    cap = 8 * n + 64
    keys = np.empty(cap)
    idxs = np.empty(cap, dtype=np.int64)
    size = 0

    for q in range(src_idx_list.size):
        tau[src_idx_list[q]] = src_tau_list[q]
        state[src_idx_list[q]] = FROZEN

    # seed the narrow band around the frozen ball
    for q in range(src_idx_list.size):
        idx = src_idx_list[q]
        i = idx // (n2 * n3)
        j = (idx // n3) % n2
        k = idx % n3
        for axis in range(3):
            for d in (-1, 1):
                ii, jj, kk = i, j, k
                if axis == 0:
                    ii += d
                elif axis == 1:
                    jj += d
                else:
                    kk += d
                if 0 <= ii < n1 and 0 <= jj < n2 and 0 <= kk < n3:
                    nidx = (ii * n2 + jj) * n3 + kk
                    if state[nidx] != FROZEN:
                        t = _update_node(
                            tau, state, c_flat, n1, n2, n3, ii, jj, kk, h, order
                        )
                        if t < tau[nidx]:
                            tau[nidx] = t
                            state[nidx] = NARROW
                            size = _heap_push(keys, idxs, size, t, nidx)

    while size > 0:
        key, idx, size = _heap_pop(keys, idxs, size)
        if state[idx] == FROZEN:
            continue
        state[idx] = FROZEN
        tau[idx] = key
        i = idx // (n2 * n3)
        j = (idx // n3) % n2
        k = idx % n3
        for axis in range(3):
            for d in (-1, 1):
                ii, jj, kk = i, j, k
                if axis == 0:
                    ii += d
                elif axis == 1:
                    jj += d
                else:
                    kk += d
                if 0 <= ii < n1 and 0 <= jj < n2 and 0 <= kk < n3:
                    nidx = (ii * n2 + jj) * n3 + kk
                    if state[nidx] != FROZEN:
                        t = _update_node(
                            tau, state, c_flat, n1, n2, n3, ii, jj, kk, h, order
                        )
                        if t < tau[nidx]:
                            tau[nidx] = t
                            state[nidx] = NARROW
                            if size >= cap - 1:
                                # stale entries piled up; compact by rebuilding
                                size = _compact(keys, idxs, size, state, tau)
                            size = _heap_push(keys, idxs, size, t, nidx)
    return tau


@njit(cache=True)
def _compact(keys, idxs, size, state, tau):
    m = 0
    for q in range(size):
        idx = idxs[q]
        if state[idx] != FROZEN and keys[q] <= tau[idx]:
            keys[m] = keys[q]
            idxs[m] = idx
            m += 1
    # re-heapify
    for q in range(m // 2 - 1, -1, -1):
        i = q
        while True:
            l = 2 * i + 1
            mm = i
            if l < m and keys[l] < keys[mm]:
                mm = l
            r = l + 1
            if r < m and keys[r] < keys[mm]:
                mm = r
            if mm == i:
                break
            keys[mm], keys[i] = keys[i], keys[mm]
            idxs[mm], idxs[i] = idxs[i], idxs[mm]
            i = mm
    return m
