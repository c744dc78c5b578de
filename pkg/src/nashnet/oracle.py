"""Exact equilibrium computation and related game diagnostics for n <= 5."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import linprog

from . import kernels
from .errors import DegenerateGame, EmptyEquilibriumList, NotCoordinationGame
from .game_space import Game

DEDUP_TV = 1e-7
PURE_MASS = 1.0 - 1e-9
TIE_MARGIN = 1e-12
# relative product gap below which selection analyses set a 2x2 game aside
RD_QUARANTINE_MARGIN = 1e-6
DOMINANCE_EPS = 1e-9


def as_strategy(p) -> np.ndarray:
    """Validate and clean a mixed strategy (tiny negatives clipped to 0)."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError("mixed strategy must be a vector")
    if p.min() < -1e-12:
        raise ValueError(f"negative probability {p.min()}")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"probabilities sum to {p.sum()}")
    return np.maximum(p, 0.0)


def uniform_strategy(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def pure_strategy(n: int, j: int) -> np.ndarray:
    e = np.zeros(n)
    e[j] = 1.0
    return e


class StrategyProfile(NamedTuple):
    s1: np.ndarray
    s2: np.ndarray


@dataclass(frozen=True)
class Equilibrium:
    profile: StrategyProfile
    kind: str
    residual: float

    @property
    def s1(self):
        return self.profile.s1

    @property
    def s2(self):
        return self.profile.s2

    def pure_cell(self):
        """(j, k) for a pure equilibrium, else None."""
        if self.kind != "pure":
            return None
        return int(np.argmax(self.s1)), int(np.argmax(self.s2))


def _kind(s1, s2):
    return "pure" if s1.max() >= PURE_MASS and s2.max() >= PURE_MASS else "mixed"


def make_equilibrium(g: Game, s1, s2) -> Equilibrium:
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    res = max(regret(g.u1, s1, s2), regret(g.u2, s2, s1))
    return Equilibrium(StrategyProfile(s1, s2), _kind(s1, s2), res)


# --------------------------------------------------------------------------
# payoffs and regret
# --------------------------------------------------------------------------

def expected_payoff(u, own, opp) -> float:
    return float(np.asarray(own) @ np.asarray(u) @ np.asarray(opp))


def regret(u, own, opp) -> float:
    """Best pure payoff against ``opp`` minus the payoff of ``own``."""
    g = np.asarray(u) @ np.asarray(opp)
    r = float(g.max() - np.asarray(own) @ g)
    return r if r > 0.0 else 0.0


def payoff_range(u) -> float:
    return float(np.max(u) - np.min(u))


def max_normalized_regret(g: Game, p) -> float:
    s1, s2 = p
    ranges = (payoff_range(g.u1), payoff_range(g.u2))
    if min(ranges) <= 0.0:
        raise DegenerateGame("a player has constant payoffs")
    return max(regret(g.u1, s1, s2) / ranges[0], regret(g.u2, s2, s1) / ranges[1])


def max_normalized_regret_batch(u1, u2, s1, s2) -> np.ndarray:
    """Vectorized MaxReg over stacks; NaN where a player's payoffs are constant."""
    r1, r2 = kernels.regrets(np.ascontiguousarray(u1), np.ascontiguousarray(u2),
                             np.ascontiguousarray(s1), np.ascontiguousarray(s2))
    rng1 = u1.max(axis=(1, 2)) - u1.min(axis=(1, 2))
    rng2 = u2.max(axis=(1, 2)) - u2.min(axis=(1, 2))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.maximum(r1 / rng1, r2 / rng2)
    out[(rng1 <= 0) | (rng2 <= 0)] = np.nan
    return out


def uniform_benchmark_maxreg(g: Game) -> float:
    u = uniform_strategy(g.n)
    return max_normalized_regret(g, (u, u))


# --------------------------------------------------------------------------
# equilibria
# --------------------------------------------------------------------------

def enumerate_pure_nash(g: Game) -> list[tuple[int, int]]:
    """All pure equilibria (weak best replies, so ties are kept)."""
    mask = kernels.pure_nash_mask(g.u1[None], g.u2[None])[0]
    return [(int(j), int(k)) for j, k in zip(*np.nonzero(mask))]


def enumerate_all_nash(g: Game) -> list[Equilibrium]:
    """Support enumeration over square supports (all supports when n <= 3)."""
    n = g.n
    if n > 5:
        raise ValueError("support enumeration is limited to n <= 5")
    pairs = _pairs(n)
    profiles, residuals, singular = kernels.support_enum(
        np.ascontiguousarray(g.u1), np.ascontiguousarray(g.u2), pairs)
    out: list[Equilibrium] = []
    for row, res, sing in zip(profiles, residuals, singular):
        s1, s2 = row[:n].copy(), row[n:].copy()
        if any(profile_tv((s1, s2), e.profile) < DEDUP_TV for e in out):
            continue
        if sing:
            raise DegenerateGame("support system is singular with a continuum of solutions")
        out.append(Equilibrium(StrategyProfile(s1, s2), _kind(s1, s2), float(res)))
    return out


_PAIR_CACHE: dict[int, np.ndarray] = {}


def _pairs(n):
    if n not in _PAIR_CACHE:
        _PAIR_CACHE[n] = kernels.support_pairs(n, unequal=n <= 3)
    return _PAIR_CACHE[n]


def nash_2x2_closed_form(g: Game) -> list[tuple[np.ndarray, np.ndarray]]:
    """Equilibria of a generic 2x2 game by cell scan plus indifference formulas.

    Kept deliberately separate from support enumeration so the two can be
    checked against each other.
    """
    a, b = g.u1, g.u2
    out = []
    for j in (0, 1):
        for k in (0, 1):
            if a[j, k] >= a[1 - j, k] and b[k, j] >= b[1 - k, j]:
                out.append((pure_strategy(2, j), pure_strategy(2, k)))
    # column mix q on action 0 making the row player indifferent, and vice versa
    da = (a[0, 0] - a[1, 0]) - (a[0, 1] - a[1, 1])
    db = (b[0, 0] - b[1, 0]) - (b[0, 1] - b[1, 1])
    if da != 0 and db != 0:
        q = (a[1, 1] - a[0, 1]) / da
        p = (b[1, 1] - b[0, 1]) / db
        if 0 < p < 1 and 0 < q < 1:
            out.append((np.array([p, 1 - p]), np.array([q, 1 - q])))
    return out


def tv_distance(a, b) -> float:
    return 0.5 * float(np.abs(np.asarray(a) - np.asarray(b)).sum())


def profile_tv(p, q) -> float:
    return max(tv_distance(p[0], q[0]), tv_distance(p[1], q[1]))


def closest_equilibrium_index(p, eqs) -> tuple[int, float, bool]:
    """Index of the nearest equilibrium, its distance, and whether it tied."""
    if not eqs:
        raise EmptyEquilibriumList("no equilibria to compare against")
    d = np.array([profile_tv(p, e.profile) for e in eqs])
    i = int(np.argmin(d))
    tie = int(np.sum(d == d[i])) > 1
    return i, float(d[i]), tie


def closest_equilibrium(p, eqs) -> tuple[Equilibrium, float]:
    i, d, _ = closest_equilibrium_index(p, eqs)
    return eqs[i], d


# --------------------------------------------------------------------------
# selection
# --------------------------------------------------------------------------

def _deviation_product(g, j, k):
    return (g.u1[j, k] - g.u1[1 - j, k]) * (g.u2[k, j] - g.u2[1 - k, j])


def risk_dominance_products(g: Game):
    """The two pure equilibria and their products of deviation losses."""
    if g.n != 2:
        raise NotCoordinationGame("risk dominance by deviation products needs a 2x2 game")
    cells = enumerate_pure_nash(g)
    if len(cells) != 2:
        raise NotCoordinationGame(f"game has {len(cells)} pure equilibria, need 2")
    return cells, [_deviation_product(g, j, k) for j, k in cells]


def risk_dominant_2x2(g: Game) -> Equilibrium:
    cells, prods = risk_dominance_products(g)
    if abs(prods[0] - prods[1]) <= TIE_MARGIN:
        mixed = [e for e in nash_2x2_closed_form(g) if e[0].max() < 1.0]
        if not mixed:
            raise NotCoordinationGame("tied game without interior equilibrium")
        return make_equilibrium(g, *mixed[0])
    j, k = cells[int(np.argmax(prods))]
    return make_equilibrium(g, pure_strategy(2, j), pure_strategy(2, k))


def risk_dominance_margin(g: Game) -> float:
    """Relative gap between the two deviation products (0 = tie)."""
    _, prods = risk_dominance_products(g)
    return abs(prods[0] - prods[1]) / max(abs(prods[0]), abs(prods[1]), 1e-300)


@dataclass(frozen=True)
class SelectionFlags:
    risk_dominant: bool
    utilitarian: bool
    payoff_dominant: bool | None
    tv_to_closest: float
    closest_index: int = -1
    tie: bool = False


def welfare(g: Game, e: Equilibrium) -> tuple[float, float]:
    return (expected_payoff(g.u1, e.s1, e.s2), expected_payoff(g.u2, e.s2, e.s1))


def pareto_optimal_indices(g: Game, eqs, tol=1e-9) -> list[int]:
    w = [welfare(g, e) for e in eqs]
    keep = []
    for i, (a1, a2) in enumerate(w):
        dominated = any(
            b1 >= a1 - tol and b2 >= a2 - tol and (b1 > a1 + tol or b2 > a2 + tol)
            for k, (b1, b2) in enumerate(w) if k != i)
        if not dominated:
            keep.append(i)
    return keep


def selection_reference(g: Game, eqs):
    """Indices of the risk-dominant, utilitarian and payoff-dominant equilibria.

    The payoff-dominant index is None when no unique Pareto optimum exists.
    Utilitarian returns every index attaining the maximal welfare sum.
    """
    from .tracing import trace_linear

    if g.n == 2:
        rd = risk_dominant_2x2(g)
    else:
        rd = trace_linear(g)
    rd_index, dist, _ = closest_equilibrium_index(rd.profile, eqs)
    if dist > 1e-6:
        raise DegenerateGame("risk-dominant profile is not among the enumerated equilibria")
    sums = np.array([sum(welfare(g, e)) for e in eqs])
    util = [int(i) for i in np.nonzero(sums >= sums.max() - 1e-9)[0]]
    po = pareto_optimal_indices(g, eqs)
    pd_index = po[0] if len(po) == 1 else None
    return rd_index, util, pd_index


def classify_selection(g: Game, p, eqs=None, reference=None) -> SelectionFlags:
    eqs = enumerate_all_nash(g) if eqs is None else eqs
    if len(eqs) < 2:
        raise ValueError("selection classification needs at least two equilibria")
    rd_index, util, pd_index = selection_reference(g, eqs) if reference is None else reference
    i, dist, tie = closest_equilibrium_index(p, eqs)
    return SelectionFlags(
        risk_dominant=i == rd_index,
        utilitarian=i in util,
        payoff_dominant=None if pd_index is None else i == pd_index,
        tv_to_closest=dist,
        closest_index=i,
        tie=tie,
    )


# --------------------------------------------------------------------------
# dominance
# --------------------------------------------------------------------------

def _dominance_gap(u, j, others):
    """Largest uniform margin by which a mixture of ``others`` beats row ``j``."""
    if len(others) == 1:
        return float(np.min(u[others[0]] - u[j]))
    if len(others) == 2:
        # one-dimensional: maximize min_c  lam*d0[c] + (1-lam)*d1[c]
        d0 = u[others[0]] - u[j]
        d1 = u[others[1]] - u[j]
        cands = [0.0, 1.0]
        for c in range(len(d0)):
            for e in range(c + 1, len(d0)):
                den = (d0[c] - d1[c]) - (d0[e] - d1[e])
                if den != 0:
                    lam = (d1[e] - d1[c]) / den
                    if 0.0 < lam < 1.0:
                        cands.append(lam)
        return max(float(np.min(lam * d0 + (1 - lam) * d1)) for lam in cands)
    m = len(others)
    cols = u.shape[1]
    # variables: mixture weights (m) and margin eps; maximize eps
    c = np.zeros(m + 1)
    c[-1] = -1.0
    a_ub = np.hstack([-u[others].T, np.ones((cols, 1))])
    b_ub = -u[j]
    a_eq = np.zeros((1, m + 1))
    a_eq[0, :m] = 1.0
    bounds = [(0, None)] * m + [(None, None)]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0], bounds=bounds, method="highs")
    return float(-res.fun) if res.status == 0 else -np.inf


def strictly_dominated_actions(u, rows=None, cols=None) -> set[int]:
    """Own actions strictly dominated by some mixture of the other ``rows``.

    ``rows``/``cols`` restrict attention to a sub-game (own and opponent actions).
    """
    u = np.asarray(u, dtype=np.float64)
    rows = list(range(u.shape[0])) if rows is None else list(rows)
    cols = list(range(u.shape[1])) if cols is None else list(cols)
    sub = u[np.ix_(rows, cols)]
    out = set()
    for a, j in enumerate(rows):
        others = [b for b in range(len(rows)) if b != a]
        if others and _dominance_gap(sub, a, others) > DOMINANCE_EPS:
            out.add(j)
    return out


def rationalizable_actions(g: Game) -> tuple[set[int], set[int]]:
    """Iterated elimination of strictly dominated actions (mixed domination)."""
    r1 = list(range(g.n))
    r2 = list(range(g.n))
    while True:
        d1 = strictly_dominated_actions(g.u1, r1, r2)
        d2 = strictly_dominated_actions(g.u2, r2, r1)
        if not d1 and not d2:
            return set(r1), set(r2)
        r1 = [j for j in r1 if j not in d1]
        r2 = [k for k in r2 if k not in d2]
