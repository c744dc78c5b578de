import numpy as np
import pytest

from nashnet.errors import EmptyTestSet
from nashnet.evaluator import (
    axiom_br_invariance,
    axiom_equivariance,
    axiom_independence,
    axiom_monotonicity,
    axiom_stats,
    axiom_symmetry,
    build_test_set,
    evaluate_models,
    evaluate_profiles,
    heatmap_angles,
    heatmap_grid,
    independence_games,
    maxreg_cdf,
    multi_pure_games,
    nearest_rank,
    ood_affine_report,
    ood_subspace_report,
    selection_from_profiles,
    selection_report,
    uniform_player,
)
from nashnet.game_space import SUBSPACES, GameSet, sample_subspace_games, strategic_matrix
from nashnet.network import NetworkShape, init_params, policy, zero_params
from nashnet.oracle import enumerate_all_nash, max_normalized_regret, risk_dominant_2x2, selection_reference
from nashnet.rng import stream

W2 = init_params(NetworkShape(2, 2, 16), 1)
W2b = init_params(NetworkShape(2, 2, 16), 2)
W3 = init_params(NetworkShape(3, 2, 24), 3)


def oracle_players(games, pick=0):
    """Row and column callables that play the ``pick``-th enumerated equilibrium."""
    table = {}
    for i, g in enumerate(games):
        eqs = enumerate_all_nash(g)
        table[g.u1.tobytes() + g.u2.tobytes()] = eqs[min(pick, len(eqs) - 1)]

    def row(u1, u2):
        return np.array([table[a.tobytes() + b.tobytes()].s1 for a, b in zip(u1, u2)])

    def col(u1, u2):
        return np.array([table[a.tobytes() + b.tobytes()].s2 for a, b in zip(u1, u2)])

    return row, col


@pytest.fixture(scope="module")
def games2():
    return build_test_set(2, 1024, 5)


@pytest.fixture(scope="module")
def games3():
    return build_test_set(3, 512, 5)


def test_test_set_is_deterministic_and_disjoint_from_training(games2):
    again = build_test_set(2, 1024, 5)
    np.testing.assert_array_equal(games2.u1, again.u1)
    other = build_test_set(2, 1024, 6)
    assert not np.allclose(games2.u1, other.u1)
    # chunking does not change the games
    np.testing.assert_array_equal(build_test_set(2, 1024, 5, chunk=256).u1[:256], build_test_set(2, 256, 5, chunk=256).u1)
    with pytest.raises(ValueError):
        build_test_set(2, 0, 5)


def test_exact_equilibrium_player_has_zero_regret_everywhere(games2):
    row, col = oracle_players(games2)
    rep = evaluate_models(row, col, games2)
    for b in rep.buckets.values():
        assert b.mean <= 1e-9
    assert rep.exact_pure_hit_rate == 1.0
    assert sum(rep.buckets[k].frequency for k in ("0", "1", ">1")) == pytest.approx(1.0, abs=1e-9)


def test_uniform_player_equals_benchmark(games2):
    rep = evaluate_models(uniform_player, uniform_player, games2)
    for b in rep.buckets.values():
        assert b.mean == pytest.approx(b.benchmark, abs=1e-12)
    # the zero-parameter network is the same player
    z = zero_params(NetworkShape(2, 2, 16))
    assert evaluate_models(z, z, games2).mean == pytest.approx(rep.mean, abs=1e-12)


def test_benchmark_is_model_independent(games2):
    a = evaluate_models(W2, W2b, games2, dominance=False)
    b = evaluate_models(W2b, W2, games2, dominance=False)
    for k in a.buckets:
        assert a.buckets[k].benchmark == b.buckets[k].benchmark


def test_report_is_invariant_to_game_order(games2):
    perm = np.random.default_rng(0).permutation(len(games2))
    a = evaluate_models(W2, W2b, games2)
    b = evaluate_models(W2, W2b, games2[perm])
    for k in a.buckets:
        assert a.buckets[k].count == b.buckets[k].count
        assert a.buckets[k].mean == pytest.approx(b.buckets[k].mean, rel=1e-12)
    assert a.dominated_mass == pytest.approx(b.dominated_mass, rel=1e-12)
    np.testing.assert_array_equal(a.maxreg, b.maxreg)


def test_report_matches_scalar_maxreg(games2):
    s1 = policy(W2, games2.u1, games2.u2, "row")
    s2 = policy(W2b, games2.u1, games2.u2, "column")
    rep = evaluate_profiles(games2, s1, s2, dominance=False)
    scalar = [max_normalized_regret(g, (s1[i], s2[i])) for i, g in enumerate(games2)]
    assert rep.mean == pytest.approx(np.mean(scalar), rel=1e-12)


def test_degenerate_games_are_excluded_and_counted(games2):
    u1 = games2.u1[:10].copy()
    u1[0] = 0.0
    gs = GameSet(u1, games2.u2[:10])
    rep = evaluate_models(uniform_player, uniform_player, gs, dominance=False)
    assert rep.excluded == 1 and rep.games == 9


def test_dominance_mass_of_equilibrium_player_is_zero(games3):
    row, col = oracle_players(games3)
    rep = evaluate_models(row, col, games3)
    assert rep.dominated_cases > 0 and rep.dominated_mass <= 1e-9
    assert rep.nonrationalizable_cases > 0 and rep.nonrationalizable_mass <= 1e-9


def test_cdf():
    from nashnet.evaluator import EvalReport

    rep = EvalReport(2, 4, 0, {}, 0, 0, 0, 0, 0, 0, np.zeros(4))
    points, marks = maxreg_cdf(rep)
    assert points == [(0.0, 1.0)] and marks["q99"] == 0.0
    rep = evaluate_models(W2, W2b, build_test_set(2, 300, 1), dominance=False)
    points, marks = maxreg_cdf(rep)
    eps, frac = zip(*points)
    assert list(eps) == sorted(eps) and list(frac) == sorted(frac) and frac[-1] == 1.0
    assert marks["q95"] <= marks["q99"]


def test_nearest_rank():
    x = np.arange(1, 101, dtype=float)
    assert nearest_rank(x, 0.9) == 90 and nearest_rank(x, 0.99) == 99
    assert nearest_rank(np.array([5.0]), 0.99) == 5.0


# ---------------------------------------------------------------- selection


def test_risk_dominant_player_selects_risk_dominant(games2):
    def rd_row(u1, u2):
        return np.array([_rd(a, b).s1 for a, b in zip(u1, u2)])

    def rd_col(u1, u2):
        return np.array([_rd(a, b).s2 for a, b in zip(u1, u2)])

    table = selection_report(rd_row, rd_col, games2)
    assert table.multi_equilibrium > 50
    assert table.risk_dominant_rate == 1.0
    assert sum(table.cells["utilitarian"].values()) == table.totals["utilitarian"] == table.multi_equilibrium


def _rd(a, b):
    from nashnet.game_space import Game

    g = Game(a, b)
    eqs = enumerate_all_nash(g)
    if len(eqs) < 2:
        return eqs[0]
    return risk_dominant_2x2(g)


def test_selection_conditionals_partition_the_games(games3):
    row, col = oracle_players(games3, pick=1)
    table = selection_report(row, col, games3)
    for crit in ("utilitarian", "payoff_dominant"):
        total = sum(table.cells[crit].values())
        assert total == sum(table.aligned[crit].values()) + sum(table.conflict[crit].values())
    assert table.totals["payoff_dominant"] <= table.totals["utilitarian"]
    assert table.totals["utilitarian"] + table.excluded >= table.multi_equilibrium


def test_selection_counts_by_hand(stag_hunt):
    gs = GameSet.from_games([stag_hunt])
    table = selection_from_profiles(gs, np.array([[1.0, 0]]), np.array([[1.0, 0]]))
    assert table.cells["utilitarian"][(False, True)] == 1
    assert table.cells["payoff_dominant"][(False, True)] == 1
    assert table.conflict["utilitarian"][(False, True)] == 1
    rd, _, _ = selection_reference(stag_hunt, enumerate_all_nash(stag_hunt))
    assert rd is not None


def test_selection_rejects_large_games():
    with pytest.raises(ValueError):
        selection_report(uniform_player, uniform_player, build_test_set(4, 4, 0))


# ---------------------------------------------------------------- axioms


def test_symmetry_zero_for_identical_networks(games2):
    st = axiom_symmetry(W2, W2, games2)
    assert st.games > 0 and st.mean == 0.0 and st.q99 == 0.0
    st = axiom_symmetry(W2, W2b, games2)
    assert st.mean > 0 and 0 <= st.q90 <= st.q99 <= 1


def test_equivariance_zero_for_uniform_network(games3):
    z = zero_params(NetworkShape(3, 2, 24))
    st = axiom_equivariance(z, z, games3)
    assert st.transforms == 36 and st.mean == 0.0
    assert axiom_equivariance(W3, W3, games3).mean > 0


def test_equivariance_zero_for_equivariant_player(games3):
    # an exact equilibrium oracle choosing by a label-free rule is equivariant
    def row(u1, u2):
        out = []
        for a in u1:
            s = np.zeros(3)
            s[np.argmax(a.max(axis=1))] = 1.0
            out.append(s)
        return np.array(out)

    assert axiom_equivariance(row, row, games3, restrict=False).mean == 0.0


def test_br_invariance_single_sample_and_order(games2):
    assert axiom_br_invariance(W2, W2b, games2, k=1).mean == 0.0
    st = axiom_br_invariance(W2, W2b, games2, k=8, seed=3)
    again = axiom_br_invariance(W2, W2b, games2, k=8, seed=3)
    assert st.mean == again.mean and st.mean > 0


def test_monotonicity_zero_increment(games2):
    row, col = oracle_players(games2)
    st = axiom_monotonicity(row, col, games2, scale=0.0)
    assert st.games > 0 and st.mean == 0.0
    assert st.extra["argmax_kept"] == 1.0


def test_independence_on_constructed_games():
    # 3x3 games whose third action is dominated for both players
    gen = np.random.default_rng(0)
    games = []
    while len(games) < 20:
        g = build_test_set(3, 64, int(gen.integers(1 << 30)))
        sel, _ = independence_games(g)
        if len(sel):
            games.append(sel)
    gs = GameSet(np.concatenate([g.u1 for g in games]), np.concatenate([g.u2 for g in games]))
    z2, z3 = zero_params(NetworkShape(2, 2, 16)), zero_params(NetworkShape(3, 2, 24))
    ind, raw = axiom_independence(z2, z2, z3, z3, gs, restrict=False)
    assert ind.games == len(gs)
    # uniform play: restricted large output (1/3, 1/3) vs small (1/2, 1/2)
    assert ind.mean == pytest.approx(1 / 6)

    def large(u1, u2):
        # all mass on the two undominated actions, split evenly
        _, dropped = independence_games(GameSet(u1, u2))
        out = np.full((len(u1), 3), 0.5)
        for i, (d, _) in enumerate(dropped):
            out[i, d] = 0.0
        return out

    ind, raw = axiom_independence(z2, z2, large, large, gs, restrict=False)
    assert ind.mean == 0.0 and raw.mean == 0.0


def test_independence_eligible_fraction():
    games = build_test_set(3, 8192, 9)
    sel, dropped = independence_games(multi_pure_games(games))
    assert len(sel) / 8192 == pytest.approx(0.062, abs=0.008)
    assert len(dropped) == len(sel)
    z2, z3 = zero_params(NetworkShape(2, 2, 16)), zero_params(NetworkShape(3, 2, 24))
    ind, _ = axiom_independence(z2, z2, z3, z3, games)
    assert ind.games == len(sel)
    assert ind.extra["eligible_fraction"] == pytest.approx(len(sel) / 8192)


def test_axiom_stats_empty_and_quantiles():
    st = axiom_stats("x", [], 1)
    assert st.games == 0 and np.isnan(st.mean)
    st = axiom_stats("x", np.linspace(0, 1, 101), 4)
    assert st.q90 == pytest.approx(0.9) and st.q99 == pytest.approx(0.99)


# ---------------------------------------------------------------- heatmaps and OOD


def test_heatmap_of_zero_networks_is_constant():
    z = zero_params(NetworkShape(2, 2, 16))
    grid = heatmap_grid(z, z, 8)
    assert len(grid.theta1) == 64
    assert (grid.p1 == 0.5).all() and (grid.p2 == 0.5).all()
    np.testing.assert_allclose(heatmap_angles(8), np.arange(8) * np.pi / 4)


def test_heatmap_is_periodic():
    eps = 1e-12
    for th in heatmap_angles(16):
        np.testing.assert_allclose(strategic_matrix(th), strategic_matrix(th + 2 * np.pi - eps + eps), atol=1e-9)
    grid = heatmap_grid(W2, W2b, 4)
    assert ((grid.p1 >= 0) & (grid.p1 <= 1)).all()


def test_affine_identity_matches_plain_evaluation(games2):
    plain = evaluate_models(W2, W2b, games2, dominance=False)
    ood = ood_affine_report(W2, W2b, games2, seed=1, reference=(W2, W2b), alpha=1.0, beta=0.0)
    assert ood.report.mean == plain.mean
    assert ood.dist_mean == 0.0


def test_affine_report_distance_to_other_reference(games2):
    ood = ood_affine_report(W2, W2b, games2, seed=1, reference=(W2b, W2), reference_id="ref")
    assert ood.dist_mean > 0 and ood.reference_id == "ref"
    again = ood_affine_report(W2, W2b, games2, seed=1, reference=(W2b, W2))
    assert again.report.mean == ood.report.mean


def test_subspace_report_uses_complements(games2):
    models = {k: (W2, W2b, spec) for k, spec in SUBSPACES.items()}
    out = ood_subspace_report(models, games2)
    for k, r in out.items():
        outside = (~SUBSPACES[k].contains(games2.u1, games2.u2)).sum()
        assert r.report.games == outside


def test_subspace_report_empty_complement():
    inside = sample_subspace_games(SUBSPACES["a"], stream(0, 99), 50, 2)
    with pytest.raises(EmptyTestSet):
        ood_subspace_report({"a": (W2, W2b, SUBSPACES["a"])}, inside)


def test_worker_count_does_not_change_outputs():
    from nashnet import evaluator

    games = build_test_set(2, 3 * evaluator.POLICY_CHUNK + 17, 2)
    try:
        evaluator.set_workers(1)
        a = evaluate_models(W2, W2b, games, dominance=False).maxreg
        evaluator.set_workers(4)
        b = evaluate_models(W2, W2b, games, dominance=False).maxreg
    finally:
        evaluator.set_workers(1)
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        evaluator.set_workers(0)


def test_near_tied_coordination_games_are_quarantined():
    from nashnet.game_space import Game

    tied = Game(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([[1.0, 0.0], [0.0, 1.0]]))
    clear = Game(np.array([[4.0, 0.0], [3.0, 2.0]]), np.array([[4.0, 0.0], [3.0, 2.0]]))
    gs = GameSet.from_games([tied, clear])
    pick = np.array([[1.0, 0.0], [1.0, 0.0]])
    table = selection_from_profiles(gs, pick, pick)
    assert table.multi_equilibrium == 2 and table.quarantined == 1
    assert table.totals["utilitarian"] == 1
