"""Hot per-game kernels with a numba path and a pure-numpy path.

Every public kernel here is bound at import time to either the jitted or the
numpy implementation depending on ``_accel.USE_JIT``. Both implementations
stay importable under their private names so they can be benchmarked and
cross-checked against each other.
"""
from __future__ import annotations

import numpy as np

from ._accel import USE_JIT, njit

# Equilibrium acceptance tolerances (utils).
PROB_TOL = 1e-9
REGRET_TOL = 1e-9


# --------------------------------------------------------------------------
# pure Nash cells
# --------------------------------------------------------------------------

def _pure_nash_mask_numpy(u1, u2):
    best1 = u1 >= u1.max(axis=1, keepdims=True)
    best2 = u2 >= u2.max(axis=1, keepdims=True)
    return best1 & best2.transpose(0, 2, 1)


@njit
def _pure_nash_mask_jit(u1, u2):
    m, n, _ = u1.shape
    out = np.zeros((m, n, n), dtype=np.bool_)
    for b in range(m):
        for j in range(n):
            for k in range(n):
                ok = True
                for jj in range(n):
                    if u1[b, jj, k] > u1[b, j, k]:
                        ok = False
                        break
                if not ok:
                    continue
                for kk in range(n):
                    if u2[b, kk, j] > u2[b, k, j]:
                        ok = False
                        break
                out[b, j, k] = ok
    return out


# --------------------------------------------------------------------------
# regrets
# --------------------------------------------------------------------------

def _regrets_numpy(u1, u2, s1, s2):
    g1 = np.einsum("bjk,bk->bj", u1, s2)
    g2 = np.einsum("bjk,bk->bj", u2, s1)
    r1 = g1.max(axis=1) - np.einsum("bj,bj->b", s1, g1)
    r2 = g2.max(axis=1) - np.einsum("bj,bj->b", s2, g2)
    return np.maximum(r1, 0.0), np.maximum(r2, 0.0)


@njit
def _regrets_jit(u1, u2, s1, s2):
    m, n, _ = u1.shape
    r1 = np.empty(m)
    r2 = np.empty(m)
    for b in range(m):
        best1 = -np.inf
        own1 = 0.0
        best2 = -np.inf
        own2 = 0.0
        for j in range(n):
            g1 = 0.0
            g2 = 0.0
            for k in range(n):
                g1 += u1[b, j, k] * s2[b, k]
                g2 += u2[b, j, k] * s1[b, k]
            own1 += s1[b, j] * g1
            own2 += s2[b, j] * g2
            if g1 > best1:
                best1 = g1
            if g2 > best2:
                best2 = g2
        r1[b] = max(best1 - own1, 0.0)
        r2[b] = max(best2 - own2, 0.0)
    return r1, r2


# --------------------------------------------------------------------------
# support enumeration
# --------------------------------------------------------------------------

def support_pairs(n, unequal):
    """Bitmask pairs (S1, S2) to try, ordered by support size then index."""
    masks = sorted(range(1, 1 << n), key=lambda s: (bin(s).count("1"), s))
    pairs = []
    for a in masks:
        for b in masks:
            if unequal or bin(a).count("1") == bin(b).count("1"):
                pairs.append((a, b))
    return np.array(pairs, dtype=np.int64)


def _indifference(u, own_mask, opp_mask, n):
    """Opponent mixture on ``opp_mask`` making ``u``'s rows in ``own_mask`` tie.

    Returns (probs over all n actions, residual of the linear system, singular).
    """
    rows = [j for j in range(n) if (own_mask >> j) & 1]
    cols = [k for k in range(n) if (opp_mask >> k) & 1]
    nr = len(rows)
    nc = len(cols)
    a = np.zeros((nr + 1, nc + 1))
    rhs = np.zeros(nr + 1)
    for i in range(nr):
        for c in range(nc):
            a[i, c] = u[rows[i], cols[c]]
        a[i, nc] = -1.0
    for c in range(nc):
        a[nr, c] = 1.0
    rhs[nr] = 1.0
    x, _, rank, _ = np.linalg.lstsq(a, rhs, rcond=1e-12)
    res = a @ x - rhs
    resid = 0.0
    for i in range(nr + 1):
        resid = max(resid, abs(res[i]))
    probs = np.zeros(n)
    for c in range(nc):
        probs[cols[c]] = x[c]
    return probs, resid, rank < nc + 1


def _best_reply_gap(u, own, opp, n):
    best = -np.inf
    val = 0.0
    for j in range(n):
        g = 0.0
        for k in range(n):
            g += u[j, k] * opp[k]
        val += own[j] * g
        if g > best:
            best = g
    return best - val


def _support_enum_impl(u1, u2, pairs):
    n = u1.shape[0]
    m = pairs.shape[0]
    profiles = np.zeros((m, 2 * n))
    residuals = np.zeros(m)
    singular = np.zeros(m, dtype=np.bool_)
    count = 0
    for p in range(m):
        s1 = pairs[p, 0]
        s2 = pairs[p, 1]
        # player 1's indifference pins down player 2's mixture and vice versa
        y, res_a, sing_a = _indifference(u1, s1, s2, n)
        if res_a > 1e-9:
            continue
        x, res_b, sing_b = _indifference(u2, s2, s1, n)
        if res_b > 1e-9:
            continue
        if x.min() < -PROB_TOL or y.min() < -PROB_TOL:
            continue
        x = np.maximum(x, 0.0)
        y = np.maximum(y, 0.0)
        x = x / x.sum()
        y = y / y.sum()
        r1 = _best_reply_gap(u1, x, y, n)
        r2 = _best_reply_gap(u2, y, x, n)
        r = max(r1, r2)
        if r > REGRET_TOL:
            continue
        profiles[count, :n] = x
        profiles[count, n:] = y
        residuals[count] = max(r, 0.0)
        singular[count] = sing_a or sing_b
        count += 1
    return profiles[:count], residuals[:count], singular[:count]


_support_enum_numpy = _support_enum_impl
_indifference_jit = njit(_indifference)
_best_reply_gap_jit = njit(_best_reply_gap)


@njit
def _support_enum_jit(u1, u2, pairs):
    n = u1.shape[0]
    m = pairs.shape[0]
    profiles = np.zeros((m, 2 * n))
    residuals = np.zeros(m)
    singular = np.zeros(m, dtype=np.bool_)
    count = 0
    for p in range(m):
        s1 = pairs[p, 0]
        s2 = pairs[p, 1]
        y, res_a, sing_a = _indifference_jit(u1, s1, s2, n)
        if res_a > 1e-9:
            continue
        x, res_b, sing_b = _indifference_jit(u2, s2, s1, n)
        if res_b > 1e-9:
            continue
        if x.min() < -PROB_TOL or y.min() < -PROB_TOL:
            continue
        x = np.maximum(x, 0.0)
        y = np.maximum(y, 0.0)
        x = x / x.sum()
        y = y / y.sum()
        r1 = _best_reply_gap_jit(u1, x, y, n)
        r2 = _best_reply_gap_jit(u2, y, x, n)
        r = max(r1, r2)
        if r > REGRET_TOL:
            continue
        profiles[count, :n] = x
        profiles[count, n:] = y
        residuals[count] = max(r, 0.0)
        singular[count] = sing_a or sing_b
        count += 1
    return profiles[:count], residuals[:count], singular[:count]


if USE_JIT:
    pure_nash_mask = _pure_nash_mask_jit
    regrets = _regrets_jit
    support_enum = _support_enum_jit
else:
    pure_nash_mask = _pure_nash_mask_numpy
    regrets = _regrets_numpy
    support_enum = _support_enum_numpy

