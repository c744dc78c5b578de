"""Measurement suite for trained player pairs.

Every function takes the two players either as :class:`NetworkParams` or as
plain callables ``f(u1, u2) -> (m, n)`` returning that player's strategies
for stacked games, so exact oracles can stand in for networks.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .errors import DegenerateGame, EmptyTestSet, NotCoordinationGame, TracingFailure
from .game_space import (
    GameSet,
    all_permutation_pairs,
    game_from_angles,
    normalize_to_payoff_space,
    pure_nash_counts,
    sample_br_equivalent,
    sample_uniform_games,
)
from .network import NetworkParams, policy
from .oracle import (
    RD_QUARANTINE_MARGIN,
    classify_selection,
    enumerate_all_nash,
    enumerate_pure_nash,
    max_normalized_regret_batch,
    rationalizable_actions,
    risk_dominance_margin,
    selection_reference,
    strictly_dominated_actions,
)

EXACT_PURE_TV = 1e-6
MONOTONE_PURE_TV = 1e-3
BUCKETS = ("0", "1", ">1", "all")


def build_test_set(n: int, size: int, seed: int, chunk: int = 4096) -> GameSet:
    """Uniform held-out games drawn from the test domain, in fixed-size chunks."""
    if size < 1:
        raise ValueError("test set size must be >= 1")
    parts1, parts2 = [], []
    for c in range((size + chunk - 1) // chunk):
        gen = rngmod.stream(seed, rngmod.TEST_GAMES, n, c)
        part = sample_uniform_games(gen, min(chunk, size - c * chunk), n)
        parts1.append(part.u1)
        parts2.append(part.u2)
    return GameSet(np.concatenate(parts1), np.concatenate(parts2), seed=seed)


# Network forward passes run over fixed-size chunks of games. Chunk boundaries
# never depend on the worker count, so outputs are identical for any count.
POLICY_CHUNK = 4096
_workers = 1


def set_workers(n: int) -> None:
    """Number of threads used for chunked forward passes."""
    global _workers
    if n < 1:
        raise ValueError("workers must be positive")
    _workers = int(n)


def chunked_policy(params: NetworkParams, u1, u2, role) -> np.ndarray:
    m = len(u1)
    if m <= POLICY_CHUNK:
        return policy(params, u1, u2, role)
    starts = range(0, m, POLICY_CHUNK)

    def run(a):
        return policy(params, u1[a:a + POLICY_CHUNK], u2[a:a + POLICY_CHUNK], role)

    if _workers == 1:
        parts = [run(a) for a in starts]
    else:
        with ThreadPoolExecutor(max_workers=_workers) as pool:
            parts = list(pool.map(run, starts))
    return np.concatenate(parts)


def as_player(w, role):
    if isinstance(w, NetworkParams):
        return lambda u1, u2: chunked_policy(w, u1, u2, role)
    if callable(w):
        return w
    raise TypeError("player must be NetworkParams or a callable")


def play(w1, w2, games: GameSet):
    return as_player(w1, "row")(games.u1, games.u2), as_player(w2, "column")(games.u1, games.u2)


def uniform_player(u1, u2):
    m, n = u1.shape[0], u1.shape[-1]
    return np.full((m, n), 1.0 / n)


def tv_rows(a, b) -> np.ndarray:
    return 0.5 * np.abs(np.asarray(a) - np.asarray(b)).sum(axis=-1)


# --------------------------------------------------------------------------
# regret reports
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BucketStats:
    count: int
    frequency: float
    mean: float
    std: float
    benchmark: float


@dataclass
class EvalReport:
    n: int
    games: int
    excluded: int
    buckets: dict
    exact_pure_hit_rate: float
    unique_pure_games: int
    dominated_mass: float
    dominated_cases: int
    nonrationalizable_mass: float
    nonrationalizable_cases: int
    maxreg: np.ndarray = field(repr=False)

    @property
    def mean(self) -> float:
        return self.buckets["all"].mean


def _stats(x, bench, total):
    if x.size == 0:
        return BucketStats(0, 0.0, math.nan, math.nan, math.nan)
    return BucketStats(int(x.size), x.size / total, float(x.mean()), float(x.std()), float(bench.mean()))


def _mass_on(s, actions):
    return float(sum(s[a] for a in actions))


def dominance_masses(games: GameSet, s1, s2):
    """Mean mass on strictly dominated and on non-rationalizable actions.

    Averages run over (game, player) cases where such actions exist.
    """
    dom, nonrat = [], []
    n = games.n
    for i, g in enumerate(games):
        d1 = strictly_dominated_actions(g.u1)
        d2 = strictly_dominated_actions(g.u2)
        for d, s in ((d1, s1[i]), (d2, s2[i])):
            if d:
                dom.append(_mass_on(s, d))
        if d1 or d2:
            r1, r2 = rationalizable_actions(g)
            for r, s in ((r1, s1[i]), (r2, s2[i])):
                if len(r) < n:
                    nonrat.append(_mass_on(s, set(range(n)) - r))
    mean = lambda v: float(np.mean(v)) if v else math.nan  # noqa: E731
    return mean(dom), len(dom), mean(nonrat), len(nonrat)


def evaluate_profiles(games: GameSet, s1, s2, dominance: bool = True) -> EvalReport:
    """Aggregate MaxReg of the given profiles, bucketed by pure-equilibrium count."""
    if len(games) == 0:
        raise EmptyTestSet("no games to evaluate")
    s1 = np.asarray(s1, dtype=np.float64)
    s2 = np.asarray(s2, dtype=np.float64)
    mr = max_normalized_regret_batch(games.u1, games.u2, s1, s2)
    n = games.n
    uni = np.full_like(s1, 1.0 / n)
    bench = max_normalized_regret_batch(games.u1, games.u2, uni, uni)
    ok = np.isfinite(mr)
    excluded = int((~ok).sum())
    if not ok.any():
        raise EmptyTestSet("every game is degenerate")
    games, s1, s2, mr, bench = games[ok], s1[ok], s2[ok], mr[ok], bench[ok]
    counts = pure_nash_counts(games)
    total = len(games)
    masks = {"0": counts == 0, "1": counts == 1, ">1": counts > 1, "all": np.ones(total, bool)}
    buckets = {k: _stats(mr[m], bench[m], total) for k, m in masks.items()}

    hits = 0
    unique = np.flatnonzero(counts == 1)
    for i in unique:
        j, k = enumerate_pure_nash(games[int(i)])[0]
        if max(1.0 - s1[i, j], 1.0 - s2[i, k]) <= EXACT_PURE_TV:
            hits += 1
    hit_rate = hits / len(unique) if len(unique) else math.nan

    if dominance:
        dm, dc, nm, nc = dominance_masses(games, s1, s2)
    else:
        dm, dc, nm, nc = math.nan, 0, math.nan, 0
    return EvalReport(n, total, excluded, buckets, hit_rate, int(len(unique)), dm, dc, nm, nc, np.sort(mr))


def evaluate_models(w1, w2, games: GameSet, dominance: bool = True) -> EvalReport:
    s1, s2 = play(w1, w2, games)
    return evaluate_profiles(games, s1, s2, dominance)


def nearest_rank(sorted_x, q):
    if len(sorted_x) == 0:
        return math.nan
    k = max(1, math.ceil(q * len(sorted_x)))
    return float(sorted_x[k - 1])


def maxreg_cdf(report: EvalReport):
    """Empirical CDF points ``(epsilon, fraction)`` and the 95th/99th percentile markers."""
    x = report.maxreg
    if x.size == 0:
        raise EmptyTestSet("empty report")
    vals = np.unique(x)
    # fraction of games with MaxReg <= epsilon at each distinct epsilon
    frac = np.searchsorted(x, vals, side="right") / x.size
    points = list(zip(vals.tolist(), frac.tolist()))
    return points, {"q95": nearest_rank(x, 0.95), "q99": nearest_rank(x, 0.99)}


# --------------------------------------------------------------------------
# equilibrium selection
# --------------------------------------------------------------------------

@dataclass
class SelectionTable:
    """Closest-equilibrium classification over games with several equilibria.

    ``cells[crit][(rd, c)]`` counts games where the played equilibrium is
    (``rd``) risk dominant and (``c``) satisfies criterion ``crit``.
    ``aligned``/``conflict`` hold the same counts restricted to games where
    the risk-dominant equilibrium does/does not satisfy the criterion.
    2x2 games whose deviation products are within ``quarantine_margin`` of a
    tie are left out and counted in ``quarantined``.
    """

    games: int
    multi_equilibrium: int
    excluded: int
    ties: int
    cells: dict
    aligned: dict
    conflict: dict
    totals: dict
    quarantined: int = 0
    quarantine_margin: float = RD_QUARANTINE_MARGIN

    @property
    def risk_dominant_rate(self) -> float:
        c = self.cells["utilitarian"]
        tot = sum(c.values())
        return (c[(True, True)] + c[(True, False)]) / tot if tot else math.nan

    def frequency(self, crit, rd, c, within=None) -> float:
        table = {"aligned": self.aligned, "conflict": self.conflict}.get(within, self.cells)[crit]
        tot = sum(table.values())
        return table[(rd, c)] / tot if tot else math.nan


def _empty_cells():
    return {(a, b): 0 for a in (True, False) for b in (True, False)}


def selection_from_profiles(games: GameSet, s1, s2) -> SelectionTable:
    crits = ("utilitarian", "payoff_dominant")
    cells = {c: _empty_cells() for c in crits}
    aligned = {c: _empty_cells() for c in crits}
    conflict = {c: _empty_cells() for c in crits}
    multi = excluded = ties = quarantined = 0
    for i, g in enumerate(games):
        try:
            eqs = enumerate_all_nash(g)
        except DegenerateGame:
            excluded += 1
            continue
        if len(eqs) < 2:
            continue
        multi += 1
        if g.n == 2 and sum(e.kind == "pure" for e in eqs) == 2 \
                and risk_dominance_margin(g) < RD_QUARANTINE_MARGIN:
            quarantined += 1
            continue
        try:
            ref = selection_reference(g, eqs)
        except (TracingFailure, DegenerateGame, NotCoordinationGame):
            excluded += 1
            continue
        flags = classify_selection(g, (s1[i], s2[i]), eqs, ref)
        ties += int(flags.tie)
        rd_index, util, pd_index = ref
        rd_util = rd_index in util
        cells["utilitarian"][(flags.risk_dominant, flags.utilitarian)] += 1
        (aligned if rd_util else conflict)["utilitarian"][(flags.risk_dominant, flags.utilitarian)] += 1
        if pd_index is not None:
            key = (flags.risk_dominant, bool(flags.payoff_dominant))
            cells["payoff_dominant"][key] += 1
            (aligned if rd_index == pd_index else conflict)["payoff_dominant"][key] += 1
    totals = {c: sum(cells[c].values()) for c in crits}
    return SelectionTable(len(games), multi, excluded, ties, cells, aligned, conflict, totals, quarantined)


def selection_report(w1, w2, games: GameSet) -> SelectionTable:
    if games.n > 3:
        raise ValueError("selection analysis supports n <= 3")
    s1, s2 = play(w1, w2, games)
    return selection_from_profiles(games, s1, s2)


# --------------------------------------------------------------------------
# behavioural axioms
# --------------------------------------------------------------------------

@dataclass
class AxiomStats:
    axiom: str
    games: int
    transforms: int
    mean: float
    std: float
    q90: float
    q99: float
    distances: np.ndarray = field(repr=False)
    extra: dict = field(default_factory=dict)


def axiom_stats(name, distances, transforms, **extra) -> AxiomStats:
    d = np.sort(np.asarray(distances, dtype=np.float64))
    if d.size == 0:
        return AxiomStats(name, 0, transforms, math.nan, math.nan, math.nan, math.nan, d, extra)
    return AxiomStats(name, int(d.size), transforms, float(d.mean()), float(d.std()),
                      nearest_rank(d, 0.90), nearest_rank(d, 0.99), d, extra)


def multi_pure_games(games: GameSet) -> GameSet:
    return games[pure_nash_counts(games) > 1]


def centroid(outputs, axis=0):
    """Mean along ``axis``, offset by the first entry so identical outputs give it exactly."""
    outputs = np.asarray(outputs)
    first = np.take(outputs, [0], axis=axis)
    return first + (outputs - first).mean(axis=axis, keepdims=True)


def centroid_distance(outputs) -> float:
    """Mean TV distance of a set of strategies to their centroid."""
    return float(tv_rows(outputs, centroid(outputs)).mean())


def axiom_symmetry(w1, w2, games: GameSet, restrict: bool = True) -> AxiomStats:
    games = multi_pure_games(games) if restrict else games
    if len(games) == 0:
        return axiom_stats("symmetry", [], 1)
    f1 = as_player(w1, "row")(games.u1, games.u2)
    swapped = GameSet(games.u2, games.u1)
    f2 = as_player(w2, "column")(swapped.u1, swapped.u2)
    return axiom_stats("symmetry", tv_rows(f1, f2), 1)


def axiom_equivariance(w1, w2, games: GameSet, restrict: bool = True) -> AxiomStats:
    games = multi_pure_games(games) if restrict else games
    pairs = all_permutation_pairs(games.n)
    if len(games) == 0:
        return axiom_stats("equivariance", [], len(pairs))
    f = as_player(w1, "row")
    mapped = []
    for p, q in pairs:
        u1 = np.empty_like(games.u1)
        u2 = np.empty_like(games.u2)
        u1[:, p[:, None], q[None, :]] = games.u1
        u2[:, q[:, None], p[None, :]] = games.u2
        y = f(u1, u2)
        mapped.append(y[:, p])  # original action j now carries label p[j]
    mapped = np.stack(mapped, axis=1)  # (m, perms, n)
    cen = centroid(mapped, axis=1)
    return axiom_stats("equivariance", tv_rows(mapped, cen).mean(axis=1), len(pairs))


def axiom_br_invariance(w1, w2, games: GameSet, k: int = 64, seed: int = 0, restrict: bool = True) -> AxiomStats:
    games = multi_pure_games(games) if restrict else games
    f = as_player(w1, "row")
    dists = []
    for i, g in enumerate(games):
        gen = rngmod.stream(seed, rngmod.AXIOMS, 1, int(games.indices[i]))
        v1 = np.stack([sample_br_equivalent(g.u1, gen) for _ in range(k)])
        v2 = np.stack([sample_br_equivalent(g.u2, gen) for _ in range(k)])
        dists.append(centroid_distance(f(v1, v2)))
    return axiom_stats("br_invariance", dists, k)


def axiom_monotonicity(w1, w2, games: GameSet, k: int = 64, seed: int = 0, scale: float = 1.0) -> AxiomStats:
    """Raise both players' payoffs at the selected pure equilibrium.

    ``scale`` multiplies the Uniform[0, 1] increments; 0 gives the identity.
    The fraction of increments after which each player's argmax is still the
    selected equilibrium action is kept in ``extra['argmax_kept']``.
    """
    f1, f2 = as_player(w1, "row"), as_player(w2, "column")
    s1, s2 = f1(games.u1, games.u2), f2(games.u1, games.u2)
    dists, kept, total = [], 0, 0
    for i, g in enumerate(games):
        j, z = int(np.argmax(s1[i])), int(np.argmax(s2[i]))
        if max(1.0 - s1[i, j], 1.0 - s2[i, z]) > MONOTONE_PURE_TV:
            continue
        if (j, z) not in enumerate_pure_nash(g):
            continue
        gen = rngmod.stream(seed, rngmod.AXIOMS, 2, int(games.indices[i]))
        h = scale * gen.random(k)
        u1 = np.repeat(g.u1[None], k, axis=0)
        u2 = np.repeat(g.u2[None], k, axis=0)
        u1[:, j, z] += h
        u2[:, z, j] += h
        y1, y2 = f1(u1, u2), f2(u1, u2)
        d = np.maximum(tv_rows(y1, centroid(y1)), tv_rows(y2, centroid(y2)))
        dists.append(float(d.mean()))
        kept += int(np.sum((y1.argmax(axis=1) == j) & (y2.argmax(axis=1) == z)))
        total += k
    return axiom_stats("monotonicity", dists, k, argmax_kept=kept / total if total else math.nan)


def independence_games(games3: GameSet) -> tuple[GameSet, list]:
    """3x3 games with exactly one strictly dominated action per player, and those actions."""
    keep, dropped = [], []
    for i, g in enumerate(games3):
        d1 = strictly_dominated_actions(g.u1)
        d2 = strictly_dominated_actions(g.u2)
        if len(d1) == 1 and len(d2) == 1:
            keep.append(i)
            dropped.append((next(iter(d1)), next(iter(d2))))
    return games3[np.array(keep, dtype=int)], dropped


def axiom_independence(w1_small, w2_small, w1_large, w2_large, games3: GameSet, restrict: bool = True):
    """Large-network play restricted to undominated actions vs small-network play on the reduced game.

    Returns the statistics with the reduced game renormalized, and the same
    statistics when the reduced game is fed unnormalized. ``eligible_fraction``
    is relative to all of ``games3``.
    """
    pool = multi_pure_games(games3) if restrict else games3
    eligible, dropped = independence_games(pool)
    n = games3.n
    if len(eligible) == 0:
        return axiom_stats("independence", [], 1), axiom_stats("independence_raw", [], 1)
    large = as_player(w1_large, "row")(eligible.u1, eligible.u2)
    small = as_player(w1_small, "row")
    red1, red2, restricted = [], [], []
    for i, (d1, d2) in enumerate(dropped):
        k1 = [a for a in range(n) if a != d1]
        k2 = [a for a in range(n) if a != d2]
        red1.append(eligible.u1[i][np.ix_(k1, k2)])
        red2.append(eligible.u2[i][np.ix_(k2, k1)])
        restricted.append(large[i, k1])
    red1, red2, restricted = np.array(red1), np.array(red2), np.array(restricted)
    norm1 = np.stack([normalize_to_payoff_space(a) for a in red1])
    norm2 = np.stack([normalize_to_payoff_space(a) for a in red2])
    d_norm = tv_rows(small(norm1, norm2), restricted)
    d_raw = tv_rows(small(red1, red2), restricted)
    frac = len(eligible) / len(games3)
    return (axiom_stats("independence", d_norm, 1, eligible_fraction=frac),
            axiom_stats("independence_raw", d_raw, 1, eligible_fraction=frac))


# --------------------------------------------------------------------------
# strategic-torus heatmaps
# --------------------------------------------------------------------------

@dataclass
class HeatmapGrid:
    resolution: int
    theta1: np.ndarray
    theta2: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    maxreg: np.ndarray

    def rows(self):
        return zip(self.theta1, self.theta2, self.p1, self.p2, self.maxreg)


def heatmap_angles(resolution: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(resolution) / resolution


def heatmap_grid(w1, w2, resolution: int) -> HeatmapGrid:
    """Both players' first-action probabilities and MaxReg over an R x R angle grid.

    Row ``i * R + k`` holds angles ``(theta[i], theta[k])``.
    """
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    th = heatmap_angles(resolution)
    t1, t2 = np.repeat(th, resolution), np.tile(th, resolution)
    games = GameSet.from_games(game_from_angles(a, b) for a, b in zip(t1, t2))
    if games.n != 2:
        raise ValueError("heatmaps need 2x2 players")
    s1, s2 = play(w1, w2, games)
    mr = max_normalized_regret_batch(games.u1, games.u2, s1, s2)
    return HeatmapGrid(resolution, t1, t2, s1[:, 0], s2[:, 0], mr)


# --------------------------------------------------------------------------
# out-of-distribution reports
# --------------------------------------------------------------------------

@dataclass
class OODReport:
    report: EvalReport
    dist_mean: float
    dist_std: float
    reference_id: str = ""


def profile_distance(a1, a2, b1, b2) -> np.ndarray:
    return np.maximum(tv_rows(a1, b1), tv_rows(a2, b2))


def affine_transformed(games: GameSet, seed: int, alpha=None, beta=None) -> GameSet:
    """Per-game positive affine maps ``alpha*u + beta`` for each player.

    Draws come from the transformation domain keyed by game index; ``alpha``
    and ``beta`` force the same per-player pair on every game.
    """
    m, n = len(games), games.n
    a = np.empty((m, 2))
    b = np.empty((m, 2))
    for i in range(m):
        gen = rngmod.stream(seed, rngmod.TRANSFORM, int(games.indices[i]))
        a[i] = gen.uniform(1.0, n, size=2)
        b[i] = gen.uniform(-n, n, size=2)
    if alpha is not None:
        a[:] = alpha
    if beta is not None:
        b[:] = beta
    u1 = a[:, 0, None, None] * games.u1 + b[:, 0, None, None]
    u2 = a[:, 1, None, None] * games.u2 + b[:, 1, None, None]
    return GameSet(u1, u2, games.seed, games.indices)


def _ood(w1, w2, games, reference, reference_id, dominance):
    s1, s2 = play(w1, w2, games)
    report = evaluate_profiles(games, s1, s2, dominance)
    if reference is None:
        return OODReport(report, math.nan, math.nan, reference_id)
    r1, r2 = play(reference[0], reference[1], games)
    d = profile_distance(s1, s2, r1, r2)
    return OODReport(report, float(d.mean()), float(d.std()), reference_id)


def ood_affine_report(w1, w2, games: GameSet, seed: int, reference=None, reference_id: str = "",
                      alpha=None, beta=None, dominance: bool = False) -> OODReport:
    """Evaluate on affinely transformed copies of ``games``.

    ``reference`` is an optional ``(w1, w2)`` pair; the distance to it is the
    per-game profile TV on the same transformed game.
    """
    transformed = affine_transformed(games, seed, alpha, beta)
    return _ood(w1, w2, transformed, reference, reference_id, dominance)


def ood_subspace_report(models: dict, games: GameSet, reference=None, reference_id: str = "",
                        dominance: bool = False) -> dict:
    """``models`` maps a label to ``(w1, w2, SubspaceSpec)``; each pair is scored off its own subspace."""
    out = {}
    for label, (w1, w2, spec) in models.items():
        outside = ~np.asarray(spec.contains(games.u1, games.u2))
        if not outside.any():
            raise EmptyTestSet(f"no test games outside subspace {label!r}")
        out[label] = _ood(w1, w2, games[outside], reference, reference_id, dominance)
    return out
