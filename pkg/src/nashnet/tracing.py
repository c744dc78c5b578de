"""Linear tracing procedure by piecewise-linear path following.

The traced family is the game in which each player's payoff against the
opponent's mixture ``s`` is ``t * u(., s) + (1 - t) * u(., prior)``. With the
scaled variables ``y_i = t * s_i`` the equilibrium conditions of that family
are linear in ``(y1, y2, v1, v2, t)``, so the path from the prior best replies
at ``t = 0`` to an equilibrium of the game at ``t = 1`` is a sequence of line
segments. Each segment keeps a pair of supports fixed; a segment ends when a
support probability hits zero (the action leaves) or an unused action becomes
a best reply (it enters). This is complementary pivoting, so the path is
followed exactly, including segments along which ``t`` stays constant or
temporarily decreases.
"""
from __future__ import annotations

import logging

import numpy as np

from .errors import TracingFailure
from .game_space import Game
from .oracle import Equilibrium, make_equilibrium, uniform_strategy

log = logging.getLogger(__name__)

MAX_PIVOTS = 500
KERNEL_TOL = 1e-10
STEP_TOL = 1e-13


class _Layout:
    def __init__(self, n):
        self.n = n
        self.y1 = slice(0, n)
        self.y2 = slice(n, 2 * n)
        self.v1 = 2 * n
        self.v2 = 2 * n + 1
        self.t = 2 * n + 2
        self.size = 2 * n + 3


def _system(g, c1, c2, s1, s2, lay):
    """Equality constraints ``A z = b`` for supports ``s1``, ``s2`` (bool masks)."""
    n = lay.n
    a = np.zeros((2 * n + 2, lay.size))
    b = np.zeros(2 * n + 2)
    r = 0
    a[r, lay.y1] = 1.0
    a[r, lay.t] = -1.0
    r += 1
    a[r, lay.y2] = 1.0
    a[r, lay.t] = -1.0
    r += 1
    for own_mask, u, c, yo, ys, v in ((s1, g.u1, c1, lay.y2, lay.y1, lay.v1),
                                      (s2, g.u2, c2, lay.y1, lay.y2, lay.v2)):
        for j in range(n):
            if own_mask[j]:
                # u[j] . (y_opp + (1 - t) prior_opp) = v
                a[r, yo] = u[j]
                a[r, lay.t] = -c[j]
                a[r, v] = -1.0
                b[r] = -c[j]
            else:
                a[r, ys.start + j] = 1.0
            r += 1
    return a, b


def _direction(a):
    _, sv, vt = np.linalg.svd(a)
    # a has one more column than rows: the kernel is spanned by the last row of vt
    if sv[-1] < KERNEL_TOL * max(sv[0], 1.0):
        raise TracingFailure("degenerate pivot: kernel of dimension > 1")
    return vt[-1]


def _slacks(g, c1, c2, z, lay):
    """Best-reply slacks ``v - payoff_j`` for both players."""
    t = z[lay.t]
    p1 = g.u1 @ z[lay.y2] + (1.0 - t) * c1
    p2 = g.u2 @ z[lay.y1] + (1.0 - t) * c2
    return z[lay.v1] - p1, z[lay.v2] - p2


def _slack_rates(g, c1, c2, d, lay):
    dt = d[lay.t]
    dp1 = g.u1 @ d[lay.y2] - dt * c1
    dp2 = g.u2 @ d[lay.y1] - dt * c2
    return d[lay.v1] - dp1, d[lay.v2] - dp2


def trace_path(g: Game, prior=None):
    """Follow the tracing path; returns the breakpoints ``[(t, s1, s2), ...]``."""
    n = g.n
    if prior is None:
        prior = (uniform_strategy(n), uniform_strategy(n))
    p1, p2 = (np.asarray(x, dtype=float) for x in prior)
    lay = _Layout(n)
    c1 = g.u1 @ p2
    c2 = g.u2 @ p1
    b1 = np.flatnonzero(c1 >= c1.max() - 1e-12)
    b2 = np.flatnonzero(c2 >= c2.max() - 1e-12)
    if len(b1) != 1 or len(b2) != 1:
        raise TracingFailure("best reply to the prior is not unique", 0.0)
    s1 = np.zeros(n, dtype=bool)
    s2 = np.zeros(n, dtype=bool)
    s1[b1[0]] = True
    s2[b2[0]] = True
    z = np.zeros(lay.size)
    z[lay.v1] = c1.max()
    z[lay.v2] = c2.max()
    # released variable: ("t", None) first, then ("y", i, j) or ("slack", i, j)
    released = ("t", 0, 0)
    path = [(0.0, s1.astype(float), s2.astype(float))]
    masks = (s1, s2)
    ys = (lay.y1, lay.y2)

    for _ in range(MAX_PIVOTS):
        a, _ = _system(g, c1, c2, s1, s2, lay)
        d = _direction(a)
        kind, pi, pj = released
        if kind == "t":
            sign = d[lay.t]
        elif kind == "y":
            sign = d[ys[pi].start + pj]
        else:
            sign = _slack_rates(g, c1, c2, d, lay)[pi][pj]
        if abs(sign) < 1e-14:
            raise TracingFailure("released variable does not move", z[lay.t])
        if sign < 0:
            d = -d

        slack = _slacks(g, c1, c2, z, lay)
        rate = _slack_rates(g, c1, c2, d, lay)
        best = np.inf
        event = None
        if d[lay.t] > 0:
            best = (1.0 - z[lay.t]) / d[lay.t]
            event = ("end", 0, 0)
        for i in (0, 1):
            yv = z[ys[i]]
            dy = d[ys[i]]
            for j in range(n):
                if masks[i][j]:
                    if dy[j] < -1e-15 and (kind, pi, pj) != ("y", i, j):
                        step = max(yv[j], 0.0) / -dy[j]
                        if step < best:
                            best, event = step, ("drop", i, j)
                else:
                    if rate[i][j] < -1e-15 and (kind, pi, pj) != ("slack", i, j):
                        step = max(slack[i][j], 0.0) / -rate[i][j]
                        if step < best:
                            best, event = step, ("add", i, j)
        if event is None:
            raise TracingFailure("path is unbounded", z[lay.t])
        z = z + best * d
        t = z[lay.t]
        if t < -1e-9:
            raise TracingFailure("path returned to t < 0", t)
        if event[0] == "end":
            z[lay.t] = 1.0
            s1v = np.maximum(z[lay.y1], 0.0)
            s2v = np.maximum(z[lay.y2], 0.0)
            path.append((1.0, s1v / s1v.sum(), s2v / s2v.sum()))
            return path
        _, i, j = event
        if event[0] == "drop":
            masks[i][j] = False
            z[ys[i].start + j] = 0.0
            released = ("slack", i, j)
        else:
            masks[i][j] = True
            released = ("y", i, j)
        if t > 1e-12:
            path.append((float(t), z[lay.y1] / t, z[lay.y2] / t))
    raise TracingFailure("pivot limit reached", float(z[lay.t]))


PRIOR_NUDGE = 1e-6


def _nudged_priors(p1, p2):
    n = len(p1)
    for j in range(n):
        for k in range(n):
            yield ((1 - PRIOR_NUDGE) * p1 + PRIOR_NUDGE * np.eye(n)[j],
                   (1 - PRIOR_NUDGE) * p2 + PRIOR_NUDGE * np.eye(n)[k])


def trace_linear(g: Game, prior=None) -> Equilibrium:
    """Equilibrium selected by the linear tracing procedure (uniform prior by default).

    When the prior leaves a player indifferent at the start, the path is
    traced from priors nudged towards each pure profile; the result stands
    only if every nudged path ends at the same equilibrium.
    """
    if g.n > 3:
        raise ValueError("tracing is supported for n <= 3")
    n = g.n
    if prior is None:
        prior = (uniform_strategy(n), uniform_strategy(n))
    p1, p2 = (np.asarray(x, dtype=float) for x in prior)
    c1, c2 = g.u1 @ p2, g.u2 @ p1
    tied = (np.sum(c1 >= c1.max() - 1e-12) > 1) or (np.sum(c2 >= c2.max() - 1e-12) > 1)
    if not tied:
        return _endpoint(g, (p1, p2))
    ends = [_endpoint(g, q) for q in _nudged_priors(p1, p2)]
    for e in ends[1:]:
        if max(np.abs(e.s1 - ends[0].s1).max(), np.abs(e.s2 - ends[0].s2).max()) > 1e-6:
            raise TracingFailure("tied prior best reply and nudged paths disagree", 0.0)
    return ends[0]


def _endpoint(g, prior):
    path = trace_path(g, prior)
    _, s1, s2 = path[-1]
    eq = make_equilibrium(g, s1, s2)
    if eq.residual > 1e-7:
        raise TracingFailure(f"path endpoint is not an equilibrium (regret {eq.residual:.3g})", 1.0)
    return eq
