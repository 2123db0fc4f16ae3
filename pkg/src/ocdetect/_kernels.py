"""Compiled per-block update loops.

Every kernel consumes a block ``X`` of shape (n, p) and writes, for each row,
the diagonal statistic followed by one off-diagonal statistic per
hard-thresholding level into ``out_stats`` (shape (n, 1 + L)).  ``out_arg``
receives the maximising anchor encoded as ``j * G + g``.  If ``stop`` is set
the kernel returns right after the first row on which any statistic meets its
threshold; the return value is the number of rows consumed.

Anchor columns are stored row-major: ``A[g, j, :]`` is the tail-sum vector
anchored at coordinate j for scale g.  Off-diagonal sums are computed as the
column total minus the anchor's own term so that the deduplicated kernel,
which shares totals between anchors with equal tail length, reproduces the
plain kernel bit for bit.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _better(v, j, g, best, bj, bg):
    # lexicographic tie-break: smallest coordinate, then smallest scale index
    if v > best:
        return True
    if v == best and (j < bj or (j == bj and g < bg)):
        return True
    return False


@njit(cache=True)
def _finish_row(i, best, bj, bg, G, thresholds, out_stats, out_arg):
    hit = False
    for l in range(best.shape[0]):
        out_stats[i, l] = best[l]
        out_arg[i, l] = bj[l] * G + bg[l]
        if best[l] >= thresholds[l]:
            hit = True
    return hit


@njit(cache=True)
def ocd_block(X, bs, n_core, a_levels, t, A, thresholds, stop, out_stats, out_arg):
    n, p = X.shape
    G = bs.shape[0]
    L = a_levels.shape[0]
    best = np.empty(L + 1)
    bj = np.empty(L + 1, dtype=np.int64)
    bg = np.empty(L + 1, dtype=np.int64)
    tot = np.empty(L)
    thr = np.empty(L)
    for i in range(n):
        x = X[i]
        best[:] = -np.inf
        bj[:] = p
        bg[:] = G
        for g in range(G):
            b = bs[g]
            for j in range(p):
                col = A[g, j]
                tj = t[g, j] + 1
                ajj = col[j] + x[j]
                r = b * ajj - b * b * tj / 2.0
                q_active = False
                if r <= 0.0:
                    if t[g, j] > 0:
                        col[:] = 0.0
                    t[g, j] = 0
                    r = 0.0
                else:
                    t[g, j] = tj
                    for k in range(p):
                        col[k] += x[k]
                    q_active = g < n_core
                if _better(r, j, g, best[0], bj[0], bg[0]):
                    best[0] = r
                    bj[0] = j
                    bg[0] = g
                if g >= n_core:
                    continue
                if q_active:
                    rt = math.sqrt(tj)
                    for l in range(L):
                        tot[l] = 0.0
                        thr[l] = a_levels[l] * rt
                    for k in range(p):
                        v = col[k]
                        av = abs(v)
                        v2 = v * v
                        for l in range(L):
                            if av >= thr[l]:
                                tot[l] += v2
                    own = col[j]
                    aown = abs(own)
                    for l in range(L):
                        q = tot[l]
                        if aown >= thr[l]:
                            q -= own * own
                        q = max(q, 0.0) / tj
                        if _better(q, j, g, best[l + 1], bj[l + 1], bg[l + 1]):
                            best[l + 1] = q
                            bj[l + 1] = j
                            bg[l + 1] = g
                else:
                    for l in range(L):
                        if _better(0.0, j, g, best[l + 1], bj[l + 1], bg[l + 1]):
                            best[l + 1] = 0.0
                            bj[l + 1] = j
                            bg[l + 1] = g
        if _finish_row(i, best, bj, bg, G, thresholds, out_stats, out_arg) and stop:
            return i + 1
    return n


@njit(cache=True)
def dedup_block(X, bs, n_core, a_levels, t, slot, cols, ctail, refs, free, meta,
                thresholds, stop, out_stats, out_arg):
    # cols[k] holds the sum of the last ctail[k] observations; ctail[k] == 0
    # marks a free slot.  free[:meta[0]] is the stack of free slot ids.
    n, p = X.shape
    G = bs.shape[0]
    L = a_levels.shape[0]
    K = cols.shape[0]
    best = np.empty(L + 1)
    bj = np.empty(L + 1, dtype=np.int64)
    bg = np.empty(L + 1, dtype=np.int64)
    tot = np.zeros((K, L))
    thr = np.empty(L)
    active = np.empty(K, dtype=np.int64)
    for i in range(n):
        x = X[i]
        n_act = 0
        for k in range(K):
            if ctail[k] > 0:
                ctail[k] += 1
                ck = cols[k]
                for m in range(p):
                    ck[m] += x[m]
                refs[k] = 0
                active[n_act] = k
                n_act += 1
        meta[0] -= 1
        knew = free[meta[0]]
        cn = cols[knew]
        for m in range(p):
            cn[m] = 0.0 + x[m]
        ctail[knew] = 1
        refs[knew] = 0
        active[n_act] = knew
        n_act += 1

        best[:] = -np.inf
        bj[:] = p
        bg[:] = G
        for g in range(G):
            b = bs[g]
            for j in range(p):
                k = slot[g, j] if t[g, j] > 0 else knew
                tj = ctail[k]
                ajj = cols[k, j]
                r = b * ajj - b * b * tj / 2.0
                if r <= 0.0:
                    t[g, j] = 0
                    slot[g, j] = -1
                    r = 0.0
                else:
                    t[g, j] = tj
                    slot[g, j] = k
                    refs[k] += 1
                if _better(r, j, g, best[0], bj[0], bg[0]):
                    best[0] = r
                    bj[0] = j
                    bg[0] = g

        for a in range(n_act):
            k = active[a]
            if refs[k] == 0:
                ctail[k] = 0
                free[meta[0]] = k
                meta[0] += 1
                continue
            rt = math.sqrt(ctail[k])
            for l in range(L):
                tot[k, l] = 0.0
                thr[l] = a_levels[l] * rt
            ck = cols[k]
            for m in range(p):
                v = ck[m]
                av = abs(v)
                v2 = v * v
                for l in range(L):
                    if av >= thr[l]:
                        tot[k, l] += v2

        for g in range(n_core):
            for j in range(p):
                if t[g, j] > 0:
                    k = slot[g, j]
                    tj = t[g, j]
                    rt = math.sqrt(tj)
                    own = cols[k, j]
                    aown = abs(own)
                    for l in range(L):
                        q = tot[k, l]
                        if aown >= a_levels[l] * rt:
                            q -= own * own
                        q = max(q, 0.0) / tj
                        if _better(q, j, g, best[l + 1], bj[l + 1], bg[l + 1]):
                            best[l + 1] = q
                            bj[l + 1] = j
                            bg[l + 1] = g
                else:
                    for l in range(L):
                        if _better(0.0, j, g, best[l + 1], bj[l + 1], bg[l + 1]):
                            best[l + 1] = 0.0
                            bj[l + 1] = j
                            bg[l + 1] = g
        if _finish_row(i, best, bj, bg, G, thresholds, out_stats, out_arg) and stop:
            return i + 1
    return n


@njit(cache=True)
def ocd_prime_block(X, bs, n_core, a_levels, t, tau, taut, A, Lam, Lamt,
                    thresholds, stop, out_stats, out_arg):
    n, p = X.shape
    G = bs.shape[0]
    L = a_levels.shape[0]
    best = np.empty(L + 1)
    bj = np.empty(L + 1, dtype=np.int64)
    bg = np.empty(L + 1, dtype=np.int64)
    tot = np.empty(L)
    thr = np.empty(L)
    for i in range(n):
        x = X[i]
        best[:] = -np.inf
        bj[:] = p
        bg[:] = G
        for g in range(G):
            b = bs[g]
            for j in range(p):
                col = A[g, j]
                lam = Lam[g, j]
                lamt = Lamt[g, j]
                tj = t[g, j] + 1
                ajj = col[j] + x[j]
                r = b * ajj - b * b * tj / 2.0
                q_active = False
                if r <= 0.0:
                    if t[g, j] > 0:
                        col[:] = 0.0
                        lam[:] = 0.0
                        lamt[:] = 0.0
                    t[g, j] = 0
                    tau[g, j] = 0
                    taut[g, j] = 0
                    r = 0.0
                else:
                    t[g, j] = tj
                    for k in range(p):
                        col[k] += x[k]
                    if tj & (tj - 1) == 0:
                        # restart: the long tail becomes the old short tail plus x
                        tau[g, j] = taut[g, j] + 1
                        for k in range(p):
                            lam[k] = lamt[k] + x[k]
                            lamt[k] = 0.0
                        taut[g, j] = 0
                    else:
                        tau[g, j] += 1
                        taut[g, j] += 1
                        for k in range(p):
                            lam[k] += x[k]
                            lamt[k] += x[k]
                    q_active = g < n_core
                if _better(r, j, g, best[0], bj[0], bg[0]):
                    best[0] = r
                    bj[0] = j
                    bg[0] = g
                if g >= n_core:
                    continue
                if q_active:
                    tj2 = tau[g, j]
                    rt = math.sqrt(tj2)
                    for l in range(L):
                        tot[l] = 0.0
                        thr[l] = a_levels[l] * rt
                    for k in range(p):
                        v = lam[k]
                        av = abs(v)
                        v2 = v * v
                        for l in range(L):
                            if av >= thr[l]:
                                tot[l] += v2
                    own = lam[j]
                    aown = abs(own)
                    for l in range(L):
                        q = tot[l]
                        if aown >= thr[l]:
                            q -= own * own
                        q = max(q, 0.0) / max(tj2, 1)
                        if _better(q, j, g, best[l + 1], bj[l + 1], bg[l + 1]):
                            best[l + 1] = q
                            bj[l + 1] = j
                            bg[l + 1] = g
                else:
                    for l in range(L):
                        if _better(0.0, j, g, best[l + 1], bj[l + 1], bg[l + 1]):
                            best[l + 1] = 0.0
                            bj[l + 1] = j
                            bg[l + 1] = g
        if _finish_row(i, best, bj, bg, G, thresholds, out_stats, out_arg) and stop:
            return i + 1
    return n


@njit(cache=True)
def mei_block(X, b, Rp, Rm, thresholds, stop, out_stats):
    # out_stats[:, 0] = two-sign max of coordinate sums, [:, 1] = of coordinate maxima
    n, p = X.shape
    for i in range(n):
        x = X[i]
        sp = 0.0
        sm = 0.0
        mp = 0.0
        mm = 0.0
        for j in range(p):
            rp = Rp[j] + b * (x[j] - b / 2.0)
            rm = Rm[j] - b * (x[j] + b / 2.0)
            rp = rp if rp > 0.0 else 0.0
            rm = rm if rm > 0.0 else 0.0
            Rp[j] = rp
            Rm[j] = rm
            sp += rp
            sm += rm
            mp = max(mp, rp)
            mm = max(mm, rm)
        out_stats[i, 0] = max(sp, sm)
        out_stats[i, 1] = max(mp, mm)
        if stop and (out_stats[i, 0] >= thresholds[0] or out_stats[i, 1] >= thresholds[1]):
            return i + 1
    return n


# fast-math without the no-nan / no-inf assumptions (the scan starts at -inf)
_MIX_FLAGS = {"nsz", "arcp", "contract", "afn", "reassoc"}


@njit(cache=True, fastmath=_MIX_FLAGS)
def mixture_block(X, p0, lam, kappa, buf, meta, thresholds, stop, out_stats):
    # buf is a ring of the last w rows; meta = [next write position, rows seen].
    # Per coordinate and tail length the term is log(1 - p0 + lam p0 e^g),
    # g = (Z v 0)^2 / kappa, evaluated as g + log(lam p0 + (1 - p0) e^{-g}) so
    # it cannot overflow.  Terms are accumulated relative to the g = 0 value
    # c0, which makes the statistic exactly 0 on all-zero data when lam = 1.
    n, p = X.shape
    w = buf.shape[0]
    lp0 = lam * p0
    q0 = 1.0 - p0
    c0 = math.log1p(p0 * (lam - 1.0))
    base = p * c0
    s = np.empty(p)
    for i in range(n):
        pos = meta[0]
        buf[pos] = X[i]
        meta[0] = (pos + 1) % w
        meta[1] += 1
        m = min(w, meta[1])
        s[:] = 0.0
        stat = -np.inf
        for r in range(1, m + 1):
            row = buf[(pos - r + 1) % w]
            inv = 1.0 / math.sqrt(r)
            pos_part = 0.0
            total = 0.0
            for j in range(p):
                s[j] += row[j]
                z = s[j] * inv
                g = z * z / kappa
                f = g + math.log(lp0 + q0 * math.exp(-g)) - c0 if g > 0.0 else 0.0
                total += f
                pos_part += f if z > 0.0 else 0.0
            stat = max(stat, base + pos_part, base + total - pos_part)
        out_stats[i, 0] = stat
        if stop and stat >= thresholds[0]:
            return i + 1
    return n
