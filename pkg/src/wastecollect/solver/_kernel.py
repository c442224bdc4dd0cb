"""Compiled local search.

Same moves and acceptance rules as :class:`LocalSearch`, on flat integer
arrays so that numba can compile the inner loops. Route ``K`` (one past
the fleet) is scratch space for break placement.

Problem tuple ``P``: (dist, dur, ni, breaks, neigh, sc) where ``ni`` holds
per node (service, earliest, latest, prize, required, demand, break bit)
and ``sc`` holds (first, horizon, t0, capacity, nb, K, n, max_exchange,
use_swap_star).
"""

from __future__ import annotations

import random
from typing import Sequence

import numpy as np
from numba import njit

from .local_search import BIG, EPS, ProblemData

# ni columns
SERVICE, EARLIEST, LATEST, PRIZE, REQUIRED, DEMAND, BIT = range(7)
# ri columns
LEN, DIST, LOAD, TW, MASK, STAMP, NCLI = range(7)


@njit(cache=True)
def _merge(d1, tw1, e1, l1, d2, tw2, e2, l2, tau):
    delta = d1 - tw1 + tau
    wait = e2 - delta - l1
    if wait < 0:
        wait = 0
    warp = e1 + delta - l2
    if warp < 0:
        warp = 0
    e = e2 - delta
    if e1 > e:
        e = e1
    l = l2 - delta
    if l1 < l:
        l = l1
    return d1 + d2 + tau + wait, tw1 + tw2 + warp, e - wait, l + warp


@njit(cache=True)
def _single(ni, v):
    if v == 1:
        return 0, 0, 0, BIG
    return ni[v, SERVICE], 0, ni[v, EARLIEST], ni[v, LATEST]


@njit(cache=True)
def _popcount(x):
    c = 0
    while x:
        x &= x - 1
        c += 1
    return c


@njit(cache=True)
def _allowed(mask, nb):
    return (mask & (mask + 1)) == 0 and mask < (1 << nb)


@njit(cache=True)
def _valid_join(pre, suf, nb):
    if pre & suf:
        return False
    if suf and pre >= (suf & -suf):
        return False
    return _allowed(pre | suf, nb)


@njit(cache=True)
def _trailing_warp(P, d, tw, e, mask):
    ni, breaks, sc = P[2], P[3], P[5]
    t = e + d - tw
    for j in range(_popcount(mask), sc[4]):
        b = breaks[j]
        if t < ni[b, EARLIEST]:
            continue
        if t > ni[b, LATEST]:
            tw += t - ni[b, LATEST]
            t = ni[b, LATEST]
        t += ni[b, SERVICE]
    if t > sc[1]:
        tw += t - sc[1]
    return tw


@njit(cache=True)
def _route_cost(d, tw, load, cap, w):
    c = d + w[0] * tw
    excess = load - cap
    if excess > 0:
        c += w[1] * excess
    return c


@njit(cache=True)
def _join_cost(P, S, ra, pa, mid, nmid, rb, pb, mask):
    """Prefix [0..pa] of route ra, nodes mid[:nmid], suffix [pb..] of rb."""
    dist, dur, ni, sc = P[0], P[1], P[2], P[5]
    nodes, fw, bw, cdist, cload, ri, w = S[0], S[1], S[2], S[3], S[4], S[7], S[15]
    s0, s1, s2, s3 = fw[ra, pa, 0], fw[ra, pa, 1], fw[ra, pa, 2], fw[ra, pa, 3]
    last = nodes[ra, pa]
    d = cdist[ra, pa]
    load = cload[ra, pa]
    for i in range(nmid):
        v = mid[i]
        a0, a1, a2, a3 = _single(ni, v)
        s0, s1, s2, s3 = _merge(s0, s1, s2, s3, a0, a1, a2, a3, dur[last, v])
        d += dist[last, v]
        load += ni[v, DEMAND]
        last = v
    nxt = nodes[rb, pb]
    s0, s1, s2, s3 = _merge(
        s0, s1, s2, s3, bw[rb, pb, 0], bw[rb, pb, 1], bw[rb, pb, 2], bw[rb, pb, 3],
        dur[last, nxt],
    )
    d += dist[last, nxt] + ri[rb, DIST] - cdist[rb, pb]
    load += ri[rb, LOAD]
    if pb > 0:
        load -= cload[rb, pb - 1]
    tw = _trailing_warp(P, s0, s1, s2, mask)
    return _route_cost(d, tw, load, sc[3], w)


@njit(cache=True)
def _normalised_length(P, inner, length):
    first = P[5][0]
    while length > 0 and inner[length - 1] < first:
        length -= 1
    return length


@njit(cache=True)
def _list_cost(P, S, inner, length):
    dist, dur, ni, sc = P[0], P[1], P[2], P[5]
    length = _normalised_length(P, inner, length)
    if length == 0:
        return 0.0
    s0, s1, s2, s3 = 0, 0, sc[2], sc[2]
    last = 0
    d = 0
    load = 0
    mask = 0
    for i in range(length):
        v = inner[i]
        a0, a1, a2, a3 = _single(ni, v)
        s0, s1, s2, s3 = _merge(s0, s1, s2, s3, a0, a1, a2, a3, dur[last, v])
        d += dist[last, v]
        load += ni[v, DEMAND]
        mask |= ni[v, BIT]
        last = v
    s0, s1, s2, s3 = _merge(s0, s1, s2, s3, 0, 0, 0, BIG, dur[last, 1])
    d += dist[last, 1]
    if not _allowed(mask, sc[4]):
        return np.inf
    tw = _trailing_warp(P, s0, s1, s2, mask)
    return _route_cost(d, tw, load, sc[3], S[15])


@njit(cache=True)
def _fill_segments(P, S, r):
    """Forward/backward data of route r from its node row."""
    dist, dur, ni, sc = P[0], P[1], P[2], P[5]
    nodes, fw, bw, cdist, cload, mpre, msuf, ri = S[0], S[1], S[2], S[3], S[4], S[5], S[6], S[7]
    m = ri[r, LEN]
    fw[r, 0, 0] = 0
    fw[r, 0, 1] = 0
    fw[r, 0, 2] = sc[2]
    fw[r, 0, 3] = sc[2]
    cdist[r, 0] = 0
    cload[r, 0] = 0
    mpre[r, 0] = 0
    for p in range(1, m):
        u = nodes[r, p - 1]
        v = nodes[r, p]
        a0, a1, a2, a3 = _single(ni, v)
        s0, s1, s2, s3 = _merge(
            fw[r, p - 1, 0], fw[r, p - 1, 1], fw[r, p - 1, 2], fw[r, p - 1, 3],
            a0, a1, a2, a3, dur[u, v],
        )
        fw[r, p, 0] = s0
        fw[r, p, 1] = s1
        fw[r, p, 2] = s2
        fw[r, p, 3] = s3
        cdist[r, p] = cdist[r, p - 1] + dist[u, v]
        cload[r, p] = cload[r, p - 1] + ni[v, DEMAND]
        mpre[r, p] = mpre[r, p - 1] | ni[v, BIT]
    bw[r, m - 1, 0] = 0
    bw[r, m - 1, 1] = 0
    bw[r, m - 1, 2] = 0
    bw[r, m - 1, 3] = BIG
    msuf[r, m - 1] = 0
    for p in range(m - 2, -1, -1):
        u = nodes[r, p]
        v = nodes[r, p + 1]
        a0, a1, a2, a3 = _single(ni, u)
        s0, s1, s2, s3 = _merge(
            a0, a1, a2, a3,
            bw[r, p + 1, 0], bw[r, p + 1, 1], bw[r, p + 1, 2], bw[r, p + 1, 3],
            dur[u, v],
        )
        bw[r, p, 0] = s0
        bw[r, p, 1] = s1
        bw[r, p, 2] = s2
        bw[r, p, 3] = s3
        msuf[r, p] = msuf[r, p + 1] | ni[u, BIT]
    ri[r, DIST] = cdist[r, m - 1]
    ri[r, LOAD] = cload[r, m - 1]


@njit(cache=True)
def _set_route(P, S, r, inner, length):
    """Make route r visit inner[:length]; ``inner`` must not alias it."""
    sc = P[5]
    nodes, ri, rc, route_of, pos_of, cnt = S[0], S[7], S[8], S[9], S[10], S[14]
    first = sc[0]
    length = _normalised_length(P, inner, length)
    nodes[r, 0] = 0
    ncli = 0
    for i in range(length):
        nodes[r, i + 1] = inner[i]
        if inner[i] >= first:
            ncli += 1
    nodes[r, length + 1] = 1
    m = length + 2
    ri[r, LEN] = m
    _fill_segments(P, S, r)
    mask = S[5][r, m - 1]
    ri[r, MASK] = mask
    ri[r, NCLI] = ncli
    if ncli == 0:
        ri[r, TW] = 0
        rc[r] = 0.0
    else:
        fw = S[1]
        tw = _trailing_warp(P, fw[r, m - 1, 0], fw[r, m - 1, 1], fw[r, m - 1, 2], mask)
        ri[r, TW] = tw
        rc[r] = _route_cost(ri[r, DIST], tw, ri[r, LOAD], sc[3], S[15])
    cnt[0] += 1
    ri[r, STAMP] = cnt[0]
    for p in range(1, m - 1):
        v = nodes[r, p]
        route_of[v] = r
        pos_of[v] = p


@njit(cache=True)
def _copy(S, buf, L, r, a, b):
    """Append nodes[r, a:b] to buf[L:]; returns the new length."""
    nodes = S[0]
    for p in range(a, b):
        buf[L] = nodes[r, p]
        L += 1
    return L


# ------------------------------------------------------------------ prelude


@njit(cache=True)
def _insert(P, S, u):
    ni, breaks, neigh, sc = P[2], P[3], P[4], P[5]
    nodes, mpre, ri, rc, route_of, pos_of = S[0], S[5], S[7], S[8], S[9], S[10]
    buf, midbuf, keys = S[16], S[18], S[19]
    K, nb = sc[5], sc[4]
    M = nodes.shape[1]
    nk = 0
    for j in range(neigh.shape[1]):
        v = neigh[u, j]
        if v < 0:
            break
        r = route_of[v]
        if r >= 0:
            p = pos_of[v]
            keys[nk] = r * M + p
            keys[nk + 1] = r * M + p - 1
            nk += 2
    for r in range(K):
        if ri[r, NCLI] == 0:
            keys[nk] = r * M
            nk += 1
            break
    if ni[u, REQUIRED] and nk == 0:
        for r in range(K):
            for p in range(ri[r, LEN] - 1):
                keys[nk] = r * M + p
                nk += 1
    if nk == 0:
        return False
    cand = np.unique(keys[:nk])

    best_delta = np.inf
    best_r = -1
    best_p = -1
    best_var = -1
    for key in cand:
        r = key // M
        p = key % M
        mask = ri[r, MASK]
        midbuf[0] = u
        delta = _join_cost(P, S, r, p, midbuf, 1, r, p + 1, mask) - rc[r]
        if delta < best_delta - EPS:
            best_delta = delta
            best_r, best_p, best_var = r, p, 0
        if nb > 0:
            k = _popcount(mask)
            if k < nb and mpre[r, p] == mask:
                b = breaks[k]
                m2 = mask | ni[b, BIT]
                midbuf[0] = b
                midbuf[1] = u
                delta = _join_cost(P, S, r, p, midbuf, 2, r, p + 1, m2) - rc[r]
                if delta < best_delta - EPS:
                    best_delta = delta
                    best_r, best_p, best_var = r, p, 1
                midbuf[0] = u
                midbuf[1] = b
                delta = _join_cost(P, S, r, p, midbuf, 2, r, p + 1, m2) - rc[r]
                if delta < best_delta - EPS:
                    best_delta = delta
                    best_r, best_p, best_var = r, p, 2

    if best_r < 0:
        return False
    if not ni[u, REQUIRED] and best_delta - ni[u, PRIZE] >= -EPS:
        return False
    r, p = best_r, best_p
    L = _copy(S, buf, 0, r, 1, p + 1)
    if best_var == 0:
        buf[L] = u
        L += 1
    else:
        b = breaks[_popcount(ri[r, MASK])]
        if best_var == 1:
            buf[L] = b
            buf[L + 1] = u
        else:
            buf[L] = u
            buf[L + 1] = b
        L += 2
    L = _copy(S, buf, L, r, p + 1, ri[r, LEN] - 1)
    _set_route(P, S, r, buf, L)
    return True


@njit(cache=True)
def _prelude(P, S):
    ni, sc = P[2], P[5]
    nodes, ri, rc, route_of = S[0], S[7], S[8], S[9]
    buf, midbuf = S[16], S[18]
    first, K, n = sc[0], sc[5], sc[6]
    changed = False
    for r in range(K):
        p = 1
        while p < ri[r, LEN] - 1:
            u = nodes[r, p]
            if u < first or ni[u, REQUIRED]:
                p += 1
                continue
            cost = _join_cost(P, S, r, p - 1, midbuf, 0, r, p + 1, ri[r, MASK])
            if cost - rc[r] + ni[u, PRIZE] < -EPS:
                L = _copy(S, buf, 0, r, 1, p)
                L = _copy(S, buf, L, r, p + 1, ri[r, LEN] - 1)
                route_of[u] = -1
                _set_route(P, S, r, buf, L)
                changed = True
            else:
                p += 1

    count = 0
    for c in range(first, n):
        if route_of[c] < 0:
            count += 1
    unvisited = np.empty(count, dtype=np.int64)
    count = 0
    for c in range(first, n):
        if route_of[c] < 0:
            unvisited[count] = c
            count += 1
    np.random.shuffle(unvisited)
    for u in unvisited:
        if _insert(P, S, u):
            changed = True
    return changed


# ------------------------------------------------------------------ moves


@njit(cache=True)
def _exchange_inter(P, S, u, v):
    dist, sc = P[0], P[5]
    nodes, ri, rc, route_of, pos_of = S[0], S[7], S[8], S[9], S[10]
    buf1, buf2, midbuf = S[16], S[17], S[18]
    first, max_exchange = sc[0], sc[7]
    R1 = route_of[u]
    R2 = route_of[v]
    len1 = ri[R1, LEN]
    len2 = ri[R2, LEN]
    pu = pos_of[u]
    pv = pos_of[v]
    pen = (rc[R1] - ri[R1, DIST]) + (rc[R2] - ri[R2, DIST])
    base = rc[R1] + rc[R2]

    for n in range(1, max_exchange + 1):
        end_u = pu + n
        if end_u > len1 - 1 or nodes[R1, end_u - 1] < first:
            break
        u1 = nodes[R1, pu]
        un = nodes[R1, end_u - 1]
        a = nodes[R1, pu - 1]
        b = nodes[R1, end_u]
        rem = dist[a, u1] + dist[un, b] - dist[a, b]

        n_pos = 2 if pv == 1 else 1
        for k in range(n_pos):
            pv0 = pv if k == 0 else 0
            c = nodes[R2, pv0]
            d = nodes[R2, pv0 + 1]
            add = dist[c, u1] + dist[un, d] - dist[c, d]
            if add - rem - pen >= -EPS:
                continue
            new1 = _join_cost(P, S, R1, pu - 1, midbuf, 0, R1, end_u, ri[R1, MASK])
            new2 = _join_cost(P, S, R2, pv0, nodes[R1, pu:end_u], n, R2, pv0 + 1, ri[R2, MASK])
            if new1 + new2 - base < -EPS:
                L1 = _copy(S, buf1, 0, R1, 1, pu)
                L1 = _copy(S, buf1, L1, R1, end_u, len1 - 1)
                L2 = _copy(S, buf2, 0, R2, 1, pv0 + 1)
                L2 = _copy(S, buf2, L2, R1, pu, end_u)
                L2 = _copy(S, buf2, L2, R2, pv0 + 1, len2 - 1)
                _set_route(P, S, R1, buf1, L1)
                _set_route(P, S, R2, buf2, L2)
                return True

        for m in range(1, n + 1):
            end_v = pv + m
            if end_v > len2 - 1 or nodes[R2, end_v - 1] < first:
                break
            v1 = nodes[R2, pv]
            vm = nodes[R2, end_v - 1]
            c = nodes[R2, pv - 1]
            d = nodes[R2, end_v]
            delta = (
                dist[a, v1] + dist[vm, b] + dist[c, u1] + dist[un, d]
                - dist[a, u1] - dist[un, b] - dist[c, v1] - dist[vm, d]
            )
            if delta - pen >= -EPS:
                continue
            new1 = _join_cost(P, S, R1, pu - 1, nodes[R2, pv:end_v], m, R1, end_u, ri[R1, MASK])
            new2 = _join_cost(P, S, R2, pv - 1, nodes[R1, pu:end_u], n, R2, end_v, ri[R2, MASK])
            if new1 + new2 - base < -EPS:
                L1 = _copy(S, buf1, 0, R1, 1, pu)
                L1 = _copy(S, buf1, L1, R2, pv, end_v)
                L1 = _copy(S, buf1, L1, R1, end_u, len1 - 1)
                L2 = _copy(S, buf2, 0, R2, 1, pv)
                L2 = _copy(S, buf2, L2, R1, pu, end_u)
                L2 = _copy(S, buf2, L2, R2, end_v, len2 - 1)
                _set_route(P, S, R1, buf1, L1)
                _set_route(P, S, R2, buf2, L2)
                return True
    return False


@njit(cache=True)
def _try_intra(P, S, R, buf, L):
    if _list_cost(P, S, buf, L) - S[8][R] < -EPS:
        _set_route(P, S, R, buf, L)
        return True
    return False


@njit(cache=True)
def _exchange_intra(P, S, u, v):
    D, sc = P[0], P[5]
    N, ri, rc, route_of, pos_of = S[0], S[7], S[8], S[9], S[10]
    buf = S[16]
    first, max_exchange = sc[0], sc[7]
    R = route_of[u]
    m_len = ri[R, LEN]
    last_pos = m_len - 2
    pen = rc[R] - ri[R, DIST]
    pu = pos_of[u]
    pv = pos_of[v]
    for n in range(1, max_exchange + 1):
        eu = pu + n - 1
        if eu > last_pos or N[R, eu] < first or (pu <= pv and pv <= eu):
            break
        a, b, u1, un = N[R, pu - 1], N[R, eu + 1], N[R, pu], N[R, eu]
        if pv != pu - 1:
            c, d = N[R, pv], N[R, pv + 1]
            delta = D[a, b] + D[c, u1] + D[un, d] - D[a, u1] - D[un, b] - D[c, d]
            if delta - pen < -EPS:
                if pv < pu:
                    L = _copy(S, buf, 0, R, 1, pv + 1)
                    L = _copy(S, buf, L, R, pu, eu + 1)
                    L = _copy(S, buf, L, R, pv + 1, pu)
                    L = _copy(S, buf, L, R, eu + 1, m_len - 1)
                else:
                    L = _copy(S, buf, 0, R, 1, pu)
                    L = _copy(S, buf, L, R, eu + 1, pv + 1)
                    L = _copy(S, buf, L, R, pu, eu + 1)
                    L = _copy(S, buf, L, R, pv + 1, m_len - 1)
                if _try_intra(P, S, R, buf, L):
                    return True
        for m in range(1, n + 1):
            ev = pv + m - 1
            if ev > last_pos or N[R, ev] < first or (pv <= eu and pu <= ev):
                break
            v1, vm = N[R, pv], N[R, ev]
            c, d = N[R, pv - 1], N[R, ev + 1]
            if pu < pv:
                if eu + 1 == pv:
                    delta = D[a, v1] + D[vm, u1] + D[un, d] - D[a, u1] - D[un, v1] - D[vm, d]
                else:
                    delta = (D[a, v1] + D[vm, b] + D[c, u1] + D[un, d]
                             - D[a, u1] - D[un, b] - D[c, v1] - D[vm, d])
                if delta - pen < -EPS:
                    L = _copy(S, buf, 0, R, 1, pu)
                    L = _copy(S, buf, L, R, pv, ev + 1)
                    L = _copy(S, buf, L, R, eu + 1, pv)
                    L = _copy(S, buf, L, R, pu, eu + 1)
                    L = _copy(S, buf, L, R, ev + 1, m_len - 1)
                    if _try_intra(P, S, R, buf, L):
                        return True
            else:
                if ev + 1 == pu:
                    delta = D[c, u1] + D[un, v1] + D[vm, b] - D[c, v1] - D[vm, u1] - D[un, b]
                else:
                    delta = (D[c, u1] + D[un, d] + D[a, v1] + D[vm, b]
                             - D[c, v1] - D[vm, d] - D[a, u1] - D[un, b])
                if delta - pen < -EPS:
                    L = _copy(S, buf, 0, R, 1, pv)
                    L = _copy(S, buf, L, R, pu, eu + 1)
                    L = _copy(S, buf, L, R, ev + 1, pu)
                    L = _copy(S, buf, L, R, pv, ev + 1)
                    L = _copy(S, buf, L, R, eu + 1, m_len - 1)
                    if _try_intra(P, S, R, buf, L):
                        return True
    return False


@njit(cache=True)
def _two_opt_star(P, S, u, v):
    dist, sc = P[0], P[5]
    N, mpre, msuf, ri, rc, route_of, pos_of = S[0], S[5], S[6], S[7], S[8], S[9], S[10]
    buf1, buf2, midbuf = S[16], S[17], S[18]
    nb = sc[4]
    R1 = route_of[u]
    R2 = route_of[v]
    pu = pos_of[u]
    pen = (rc[R1] - ri[R1, DIST]) + (rc[R2] - ri[R2, DIST])
    base = rc[R1] + rc[R2]
    n_pos = 2 if pos_of[v] == 1 else 1
    for k in range(n_pos):
        pv = pos_of[v] if k == 0 else 0
        a, b = N[R1, pu], N[R1, pu + 1]
        c, d = N[R2, pv], N[R2, pv + 1]
        delta = dist[a, d] + dist[c, b] - dist[a, b] - dist[c, d]
        if delta - pen >= -EPS:
            continue
        m1_pre, m1_suf = mpre[R1, pu], msuf[R1, pu + 1]
        m2_pre, m2_suf = mpre[R2, pv], msuf[R2, pv + 1]
        if not (_valid_join(m1_pre, m2_suf, nb) and _valid_join(m2_pre, m1_suf, nb)):
            continue
        new1 = _join_cost(P, S, R1, pu, midbuf, 0, R2, pv + 1, m1_pre | m2_suf)
        new2 = _join_cost(P, S, R2, pv, midbuf, 0, R1, pu + 1, m2_pre | m1_suf)
        if new1 + new2 - base < -EPS:
            L1 = _copy(S, buf1, 0, R1, 1, pu + 1)
            L1 = _copy(S, buf1, L1, R2, pv + 1, ri[R2, LEN] - 1)
            L2 = _copy(S, buf2, 0, R2, 1, pv + 1)
            L2 = _copy(S, buf2, L2, R1, pu + 1, ri[R1, LEN] - 1)
            _set_route(P, S, R1, buf1, L1)
            _set_route(P, S, R2, buf2, L2)
            return True
    return False


@njit(cache=True)
def _try_empty_route(P, S, u):
    sc = P[5]
    ri, rc, route_of, pos_of = S[7], S[8], S[9], S[10]
    buf1, buf2, midbuf = S[16], S[17], S[18]
    R1 = route_of[u]
    if ri[R1, NCLI] <= 1:
        return False
    empty = -1
    for r in range(sc[5]):
        if ri[r, NCLI] == 0:
            empty = r
            break
    if empty < 0:
        return False
    pu = pos_of[u]
    new1 = _join_cost(P, S, R1, pu - 1, midbuf, 0, R1, pu + 1, ri[R1, MASK])
    midbuf[0] = u
    new2 = _join_cost(P, S, empty, 0, midbuf, 1, empty, 1, 0)
    if new1 + new2 - rc[R1] < -EPS:
        L1 = _copy(S, buf1, 0, R1, 1, pu)
        L1 = _copy(S, buf1, L1, R1, pu + 1, ri[R1, LEN] - 1)
        buf2[0] = u
        _set_route(P, S, R1, buf1, L1)
        _set_route(P, S, empty, buf2, 1)
        return True
    return False


@njit(cache=True)
def _apply_best_uv(P, S, u, v):
    route_of = S[9]
    if route_of[u] != route_of[v]:
        if _exchange_inter(P, S, u, v):
            return True
        return _two_opt_star(P, S, u, v)
    return _exchange_intra(P, S, u, v)


# ------------------------------------------------------------------ SWAP*


@njit(cache=True)
def _top_insertions(P, S, x, R, out_c, out_q, row):
    """Three cheapest insertion positions of x in route R (ties by position)."""
    dist = P[0]
    N, ri = S[0], S[7]
    cnt = 0
    for q in range(ri[R, LEN] - 1):
        a = N[R, q]
        b = N[R, q + 1]
        cost = dist[a, x] + dist[x, b] - dist[a, b]
        # insertion sort into the first three slots
        if cnt < 3:
            pos = cnt
            cnt += 1
        elif cost < out_c[row, 2]:
            pos = 2
        else:
            continue
        while pos > 0 and out_c[row, pos - 1] > cost:
            out_c[row, pos] = out_c[row, pos - 1]
            out_q[row, pos] = out_q[row, pos - 1]
            pos -= 1
        out_c[row, pos] = cost
        out_q[row, pos] = q
    return cnt


@njit(cache=True)
def _replace(S, buf, R, p, x, q):
    """Route R without position p, with x after position q (-1: in p's place)."""
    N, ri = S[0], S[7]
    m = ri[R, LEN]
    L = 0
    if q == -1:
        L = _copy(S, buf, 0, R, 1, p)
        buf[L] = x
        L += 1
        return _copy(S, buf, L, R, p + 1, m - 1)
    if q == 0:
        buf[0] = x
        L = 1
    for k in range(1, m - 1):
        if k != p:
            buf[L] = N[R, k]
            L += 1
        if k == q:
            buf[L] = x
            L += 1
    return L


@njit(cache=True)
def _swap_star(P, S, R1, R2):
    dist, sc = P[0], P[5]
    N, ri, rc = S[0], S[7], S[8]
    buf1, buf2 = S[16], S[17]
    first = sc[0]
    len1 = ri[R1, LEN]
    len2 = ri[R2, LEN]
    p1 = np.empty(len1, dtype=np.int64)
    p2 = np.empty(len2, dtype=np.int64)
    n1 = 0
    for p in range(1, len1 - 1):
        if N[R1, p] >= first:
            p1[n1] = p
            n1 += 1
    n2 = 0
    for p in range(1, len2 - 1):
        if N[R2, p] >= first:
            p2[n2] = p
            n2 += 1
    if n1 == 0 or n2 == 0:
        return False

    rem1 = np.empty(n1, dtype=np.int64)
    top2c = np.empty((n1, 3), dtype=np.int64)
    top2q = np.empty((n1, 3), dtype=np.int64)
    top2n = np.empty(n1, dtype=np.int64)
    for i in range(n1):
        p = p1[i]
        a, u, b = N[R1, p - 1], N[R1, p], N[R1, p + 1]
        rem1[i] = dist[a, u] + dist[u, b] - dist[a, b]
        top2n[i] = _top_insertions(P, S, u, R2, top2c, top2q, i)
    rem2 = np.empty(n2, dtype=np.int64)
    top1c = np.empty((n2, 3), dtype=np.int64)
    top1q = np.empty((n2, 3), dtype=np.int64)
    top1n = np.empty(n2, dtype=np.int64)
    for j in range(n2):
        p = p2[j]
        a, v, b = N[R2, p - 1], N[R2, p], N[R2, p + 1]
        rem2[j] = dist[a, v] + dist[v, b] - dist[a, b]
        top1n[j] = _top_insertions(P, S, v, R1, top1c, top1q, j)

    pen = (rc[R1] - ri[R1, DIST]) + (rc[R2] - ri[R2, DIST])
    best_delta = -pen - EPS
    bi = -1
    bj = -1
    bqu = -1
    bqv = -1
    for i in range(n1):
        pu = p1[i]
        u = N[R1, pu]
        for j in range(n2):
            pv = p2[j]
            v = N[R2, pv]
            a, b = N[R2, pv - 1], N[R2, pv + 1]
            ins_u = dist[a, u] + dist[u, b] - dist[a, b]
            qu = -1
            for t in range(top2n[i]):
                q = top2q[i, t]
                if N[R2, q] != v and N[R2, q + 1] != v:
                    if top2c[i, t] < ins_u:
                        ins_u = top2c[i, t]
                        qu = q
                    break
            a, b = N[R1, pu - 1], N[R1, pu + 1]
            ins_v = dist[a, v] + dist[v, b] - dist[a, b]
            qv = -1
            for t in range(top1n[j]):
                q = top1q[j, t]
                if N[R1, q] != u and N[R1, q + 1] != u:
                    if top1c[j, t] < ins_v:
                        ins_v = top1c[j, t]
                        qv = q
                    break
            delta = ins_u + ins_v - rem1[i] - rem2[j]
            if delta < best_delta:
                best_delta = delta
                bi, bj, bqu, bqv = i, j, qu, qv

    if bi < 0:
        return False
    pu = p1[bi]
    pv = p2[bj]
    u = N[R1, pu]
    v = N[R2, pv]
    L1 = _replace(S, buf1, R1, pu, v, bqv)
    L2 = _replace(S, buf2, R2, pv, u, bqu)
    new = _list_cost(P, S, buf1, L1) + _list_cost(P, S, buf2, L2)
    if new - rc[R1] - rc[R2] < -EPS:
        _set_route(P, S, R1, buf1, L1)
        _set_route(P, S, R2, buf2, L2)
        return True
    return False


@njit(cache=True)
def _swap_star_pass(P, S):
    sc = P[5]
    ri, cnt, pair_tested = S[7], S[14], S[12]
    K = sc[5]
    active = np.empty(K, dtype=np.int64)
    na = 0
    for r in range(K):
        if ri[r, NCLI] > 0:
            active[na] = r
            na += 1
    improved = False
    for i in range(na):
        for j in range(i + 1, na):
            r1 = active[i]
            r2 = active[j]
            if ri[r1, NCLI] == 0 or ri[r2, NCLI] == 0:
                continue
            tested = pair_tested[r1, r2]
            if tested >= ri[r1, STAMP] and tested >= ri[r2, STAMP]:
                continue
            pair_tested[r1, r2] = cnt[0]
            if _swap_star(P, S, r1, r2):
                improved = True
    return improved


# ------------------------------------------------------------------ breaks


@njit(cache=True)
def _place_break(P, S, R, b):
    """Move break b to its best position in route R, or make it implicit."""
    ni, sc = P[2], P[5]
    N, ri, rc = S[0], S[7], S[8]
    buf, midbuf = S[16], S[18]
    nb, K = sc[4], sc[5]
    m = ri[R, LEN]
    # base = inner without b, kept in the scratch route's node row
    T = K
    N[T, 0] = 0
    L = 0
    for p in range(1, m - 1):
        v = N[R, p]
        if v != b:
            N[T, L + 1] = v
            L += 1
    N[T, L + 1] = 1
    ri[T, LEN] = L + 2
    bit_b = ni[b, BIT]
    mask = ri[R, MASK] & ~bit_b

    best_cost = rc[R]
    best_q = -2  # -2: keep, -1: base without b, q >= 0: b after base[:q]
    if _allowed(mask, nb):
        cost = _list_cost(P, S, N[T, 1:], L)
        if cost < best_cost - EPS:
            best_cost = cost
            best_q = -1

    new_mask = mask | bit_b
    if _allowed(new_mask, nb):
        lo = 0
        hi = L
        for k in range(L):
            bv = ni[N[T, k + 1], BIT]
            if bv and bv < bit_b:
                lo = k + 1
            elif bv and bv > bit_b and hi == L:
                hi = k
        _fill_segments(P, S, T)
        midbuf[0] = b
        for q in range(lo, hi + 1):
            cost = _join_cost(P, S, T, q, midbuf, 1, T, q + 1, new_mask)
            if cost < best_cost - EPS:
                best_cost = cost
                best_q = q

    if best_q == -2:
        return False
    if best_q == -1:
        L2 = _copy(S, buf, 0, T, 1, L + 1)
    else:
        L2 = _copy(S, buf, 0, T, 1, best_q + 1)
        buf[L2] = b
        L2 += 1
        L2 = _copy(S, buf, L2, T, best_q + 1, L + 1)
    _set_route(P, S, R, buf, L2)
    return True


@njit(cache=True)
def _break_pass(P, S):
    breaks, sc = P[3], P[5]
    ri, cnt, break_tested = S[7], S[14], S[13]
    improved = False
    for r in range(sc[5]):
        if ri[r, NCLI] == 0:
            continue
        if break_tested[r] >= ri[r, STAMP]:
            continue
        break_tested[r] = cnt[0]
        for j in range(sc[4]):
            if _place_break(P, S, r, breaks[j]):
                improved = True
    return improved


# ------------------------------------------------------------------ driver


@njit(cache=True)
def _search(P, S):
    neigh, sc = P[4], P[5]
    ri, route_of, last_tested, cnt = S[7], S[9], S[11], S[14]
    first, n, nb, swap_star = sc[0], sc[6], sc[4], sc[8]
    improved_any = False
    while True:
        improved = False
        count = 0
        for c in range(first, n):
            if route_of[c] >= 0:
                count += 1
        order = np.empty(count, dtype=np.int64)
        count = 0
        for c in range(first, n):
            if route_of[c] >= 0:
                order[count] = c
                count += 1
        np.random.shuffle(order)
        for u in order:
            if route_of[u] < 0:
                continue
            tested = last_tested[u]
            last_tested[u] = cnt[0]
            for j in range(neigh.shape[1]):
                v = neigh[u, j]
                if v < 0:
                    break
                rv = route_of[v]
                if rv < 0:
                    continue
                ru = route_of[u]
                if tested >= ri[ru, STAMP] and tested >= ri[rv, STAMP]:
                    continue
                if _apply_best_uv(P, S, u, v):
                    improved = True
                if route_of[u] < 0:
                    break
            if route_of[u] >= 0 and _try_empty_route(P, S, u):
                improved = True
        if swap_star and _swap_star_pass(P, S):
            improved = True
        if nb > 0 and _break_pass(P, S):
            improved = True
        if not improved:
            break
        improved_any = True
    return improved_any


@njit(cache=True)
def _run(P, S, init_nodes, init_len, seed):
    np.random.seed(seed)
    sc = P[5]
    K = sc[5]
    S[9][:] = -1
    S[11][:] = -1
    S[12][:, :] = -1
    S[13][:] = -1
    S[14][0] = 0
    for r in range(K):
        _set_route(P, S, r, init_nodes[r], init_len[r])
    if sc[4] > 0:
        _break_pass(P, S)
    while True:
        changed = _prelude(P, S)
        improved = _search(P, S)
        if not (changed or improved):
            break


class KernelLocalSearch:
    """Drop-in replacement for :class:`LocalSearch` running compiled code."""

    def __init__(
        self,
        data: ProblemData,
        neighbours: dict[int, list[int]],
        rng: random.Random,
        max_exchange: int = 3,
        use_swap_star: bool = True,
    ):
        self.data = data
        self.rng = rng
        n = data.n
        K = data.num_vehicles
        nb = len(data.breaks)
        width = max([len(v) for v in neighbours.values()], default=0)
        neigh = np.full((n, max(width, 1)), -1, dtype=np.int64)
        for v, lst in neighbours.items():
            neigh[v, : len(lst)] = lst
        ni = np.zeros((n, 7), dtype=np.int64)
        ni[:, SERVICE] = data.service
        ni[:, EARLIEST] = data.earliest
        ni[:, LATEST] = data.latest
        ni[:, PRIZE] = data.prize
        ni[:, REQUIRED] = data.required
        ni[:, DEMAND] = data.demand
        ni[:, BIT] = data.bit
        sc = np.array(
            [data.first, data.horizon, data.t0, data.capacity, nb, K, n,
             max_exchange, int(use_swap_star)],
            dtype=np.int64,
        )
        self.P = (
            np.ascontiguousarray(data.instance.distance, dtype=np.int64),
            np.ascontiguousarray(data.instance.duration, dtype=np.int64),
            ni,
            np.asarray(data.breaks, dtype=np.int64),
            neigh,
            sc,
        )
        M = n + 2
        R = K + 1
        self.S = (
            np.zeros((R, M), dtype=np.int64),  # 0 nodes
            np.zeros((R, M, 4), dtype=np.int64),  # 1 fw
            np.zeros((R, M, 4), dtype=np.int64),  # 2 bw
            np.zeros((R, M), dtype=np.int64),  # 3 cdist
            np.zeros((R, M), dtype=np.int64),  # 4 cload
            np.zeros((R, M), dtype=np.int64),  # 5 mpre
            np.zeros((R, M), dtype=np.int64),  # 6 msuf
            np.zeros((R, 7), dtype=np.int64),  # 7 route info
            np.zeros(R, dtype=np.float64),  # 8 route cost
            np.full(n, -1, dtype=np.int64),  # 9 route_of
            np.zeros(n, dtype=np.int64),  # 10 pos_of
            np.full(n, -1, dtype=np.int64),  # 11 last_tested
            np.full((R, R), -1, dtype=np.int64),  # 12 pair_tested
            np.full(R, -1, dtype=np.int64),  # 13 break_tested
            np.zeros(1, dtype=np.int64),  # 14 counter
            np.ones(2, dtype=np.float64),  # 15 weights
            np.zeros(M, dtype=np.int64),  # 16 buffer
            np.zeros(M, dtype=np.int64),  # 17 buffer
            np.zeros(4, dtype=np.int64),  # 18 inserted nodes
            np.zeros(2 * width + (K + 1) * M, dtype=np.int64),  # 19 insertion keys
        )

    def __call__(
        self,
        routes: Sequence[Sequence[int]],
        w_tw: float,
        w_load: float = 1.0,
        deadline: float | None = None,
    ) -> list[list[int]]:
        K = self.data.num_vehicles
        M = self.data.n + 2
        init = np.zeros((K, M), dtype=np.int64)
        lens = np.zeros(K, dtype=np.int64)
        for k, r in enumerate(routes[:K]):
            init[k, : len(r)] = r
            lens[k] = len(r)
        self.S[15][0] = w_tw
        self.S[15][1] = w_load
        _run(self.P, self.S, init, lens, self.rng.getrandbits(31))
        nodes, ri = self.S[0], self.S[7]
        return [nodes[k, 1 : ri[k, LEN] - 1].tolist() for k in range(K)]
