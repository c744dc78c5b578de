import numpy as np
import pytest

from nashnet.errors import TracingFailure
from nashnet.game_space import Game, sample_uniform_games
from nashnet.oracle import (
    closest_equilibrium_index,
    enumerate_all_nash,
    enumerate_pure_nash,
    risk_dominance_margin,
    risk_dominant_2x2,
)
from nashnet.rng import stream
from nashnet.tracing import trace_linear, trace_path


def test_stag_hunt_traces_to_risk_dominant(stag_hunt):
    assert trace_linear(stag_hunt).pure_cell() == (1, 1)


def test_unique_equilibrium_is_found(prisoners_dilemma, matching_pennies):
    assert trace_linear(prisoners_dilemma).pure_cell() == (1, 1)
    eq = trace_linear(matching_pennies)
    np.testing.assert_allclose(eq.s1, [0.5, 0.5], atol=1e-9)
    np.testing.assert_allclose(eq.s2, [0.5, 0.5], atol=1e-9)


def test_prior_decides_in_pure_coordination():
    g = Game(np.eye(2), np.eye(2))
    assert trace_linear(g, ([0.8, 0.2], [0.7, 0.3])).pure_cell() == (0, 0)
    assert trace_linear(g, ([0.2, 0.8], [0.3, 0.7])).pure_cell() == (1, 1)


def test_path_stays_in_the_unit_interval_and_ends_at_one():
    # the path may bend back in t, but never leaves [0, 1]
    for g in sample_uniform_games(stream(0, 99), 200, 3):
        path = trace_path(g)
        ts = [t for t, _, _ in path]
        assert ts[0] == 0.0 and ts[-1] == 1.0
        assert all(-1e-9 <= t <= 1 + 1e-9 for t in ts)
        for _, s1, s2 in path:
            assert s1.sum() == pytest.approx(1.0) and s2.sum() == pytest.approx(1.0)


def test_agrees_with_product_rule_on_random_coordination_games():
    agree = total = 0
    for g in sample_uniform_games(stream(1, 99), 3000, 2):
        if len(enumerate_pure_nash(g)) != 2 or risk_dominance_margin(g) < 1e-6:
            continue
        total += 1
        agree += trace_linear(g).pure_cell() == risk_dominant_2x2(g).pure_cell()
    assert total > 300
    assert agree == total


def test_three_action_endpoints_are_enumerated_equilibria():
    for g in sample_uniform_games(stream(2, 99), 300, 3):
        eq = trace_linear(g)
        _, d, _ = closest_equilibrium_index(eq.profile, enumerate_all_nash(g))
        assert d <= 1e-6


def test_tied_prior_best_reply_is_reported():
    g = Game(np.array([[1.0, 1.0], [1.0, 1.0]]), np.eye(2))
    with pytest.raises(TracingFailure):
        trace_linear(g)


def test_rejects_large_games():
    g = sample_uniform_games(stream(3, 99), 1, 4)[0]
    with pytest.raises(ValueError):
        trace_linear(g)
