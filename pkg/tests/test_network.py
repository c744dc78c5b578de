import numpy as np
import pytest
from gradcheck import instances, max_relative_error

from nashnet.errors import CheckpointFormatError, NonFiniteUpdate, ShapeMismatch
from nashnet.game_space import Game, sample_uniform_games
from nashnet.network import (
    MAGIC,
    NetworkParams,
    NetworkShape,
    OpponentFeedback,
    apply_update,
    batch_loss_and_gradient,
    checkpoint_bytes,
    encode,
    forward,
    init_params,
    load_checkpoint,
    loss_and_gradient,
    loss_value,
    param_count,
    parse_checkpoint,
    policy,
    save_checkpoint,
    zero_params,
)
from nashnet.rng import stream


def test_parameter_counts():
    assert param_count(NetworkShape(2, 8, 256)) == 463_362
    assert param_count(NetworkShape(3, 8, 512)) == 1_849_859
    assert param_count(NetworkShape(2, 1, 16)) == 16 * 8 + 16 + 2 * 16 + 2


@pytest.mark.parametrize("shape", [NetworkShape(2, 1, 10), NetworkShape(3, 3, 20), NetworkShape(4, 2, 40)])
def test_param_count_matches_allocation(shape):
    assert init_params(shape, 0).count() == param_count(shape)


def test_width_must_exceed_input_size():
    with pytest.raises(ValueError):
        NetworkShape(2, 2, 8)
    with pytest.raises(ValueError):
        NetworkShape(2, 0, 16)


def test_encoding_is_column_major():
    u1 = np.array([[[1.0, 2.0], [3.0, 4.0]]])
    u2 = np.array([[[5.0, 6.0], [7.0, 8.0]]])
    np.testing.assert_array_equal(encode(u1, u2)[0], [1, 3, 2, 4, 5, 7, 6, 8])


def test_zero_network_plays_uniform():
    g = sample_uniform_games(stream(0, 99), 1, 3)[0]
    y, _ = forward(zero_params(NetworkShape(3, 2, 20)), g)
    np.testing.assert_array_equal(y, np.full(3, 1 / 3))


def test_outputs_are_distributions_and_roles_swap_inputs():
    w = init_params(NetworkShape(3, 2, 24), 1)
    gs = sample_uniform_games(stream(1, 99), 50, 3)
    y = policy(w, gs.u1, gs.u2, "row")
    np.testing.assert_allclose(y.sum(axis=1), 1.0)
    assert (y >= 0).all()
    np.testing.assert_array_equal(policy(w, gs.u2, gs.u1, "column"), y)
    with pytest.raises(ShapeMismatch):
        policy(w, gs.u1[:, :2, :2], gs.u2[:, :2, :2])


def test_forward_is_deterministic():
    w = init_params(NetworkShape(2, 3, 16), 7)
    g = sample_uniform_games(stream(2, 99), 1, 2)[0]
    a, _ = forward(w, g)
    b, _ = forward(w, g)
    assert a.tobytes() == b.tobytes()


def test_init_is_seeded_and_he_scaled():
    a = init_params(NetworkShape(3, 2, 400), 3)
    b = init_params(NetworkShape(3, 2, 400), 3)
    assert a.to_vector().tobytes() == b.to_vector().tobytes()
    assert a.weights[1].var() == pytest.approx(2 / 400, rel=0.05)
    assert all(not bias.any() for bias in a.biases)


def test_gradient_matches_finite_differences():
    errs = [max_relative_error(*inst) for inst in instances(40, seed=1)]
    assert max(errs) <= 1e-5


def test_zero_gradient_at_best_reply(matching_pennies):
    # against a uniform opponent every own strategy is a best reply, so R = 0
    w = init_params(NetworkShape(2, 2, 16), 4)
    fb = OpponentFeedback("full_mixed", strategy=np.array([0.5, 0.5]))
    value, grad = loss_and_gradient(w, matching_pennies, "row", fb)
    assert value == 0.0
    assert not grad.to_vector().any()


def test_squared_gradient_is_twice_regret_times_linear_gradient():
    for params, g, role, fb, _ in instances(100, seed=2):
        r = loss_value(params, g, role, fb, "linear_regret")
        _, gs = loss_and_gradient(params, g, role, fb, "squared_regret")
        _, gl = loss_and_gradient(params, g, role, fb, "linear_regret")
        np.testing.assert_allclose(gs.to_vector(), 2 * r * gl.to_vector(), rtol=1e-10, atol=1e-15)


def test_no_gradient_flows_through_the_opponent():
    # a player's gradient depends on the opponent only through the opponent's output
    gs = sample_uniform_games(stream(4, 99), 8, 2)
    me = init_params(NetworkShape(2, 2, 16), 5)
    opp_a = init_params(NetworkShape(2, 2, 16), 6)
    opp_b = init_params(NetworkShape(2, 3, 32), 9)
    out_a = policy(opp_a, gs.u1, gs.u2, "column")
    out_b = policy(opp_b, gs.u1, gs.u2, "column")
    _, grad_a, _, _ = batch_loss_and_gradient(me, gs.u1, gs.u2, out_a)
    _, grad_b, _, _ = batch_loss_and_gradient(me, gs.u1, gs.u2, out_b)
    _, grad_a2, _, _ = batch_loss_and_gradient(me, gs.u1, gs.u2, out_a.copy())
    assert grad_a.to_vector().tobytes() == grad_a2.to_vector().tobytes()
    assert not np.allclose(grad_a.to_vector(), grad_b.to_vector())


def test_batch_gradient_is_mean_of_single_gradients():
    gs = sample_uniform_games(stream(5, 99), 6, 2)
    w = init_params(NetworkShape(2, 2, 16), 8)
    opp = np.random.default_rng(0).dirichlet(np.ones(2), 6)
    _, grad, _, _ = batch_loss_and_gradient(w, gs.u1, gs.u2, opp)
    singles = [loss_and_gradient(w, g, "row", OpponentFeedback("full_mixed", strategy=opp[i]))[1].to_vector()
               for i, g in enumerate(gs)]
    np.testing.assert_allclose(grad.to_vector(), np.mean(singles, axis=0), atol=1e-14)


def test_feedback_validation():
    with pytest.raises(ValueError):
        OpponentFeedback("realized_action")
    with pytest.raises(ValueError):
        OpponentFeedback("bogus", strategy=np.ones(2) / 2)
    np.testing.assert_array_equal(OpponentFeedback("realized_action", action=1).vector(3), [0, 1, 0])
    with pytest.raises(ValueError):
        OpponentFeedback("realized_action", action=3).vector(3)


def test_apply_update_rejects_non_finite():
    w = init_params(NetworkShape(2, 1, 10), 0)
    g = w.zeros_like()
    g.weights[0][0, 0] = np.inf
    with pytest.raises(NonFiniteUpdate):
        apply_update(w, g, 0.1, step=12)
    assert apply_update(w, g.zeros_like(), 0.1).to_vector().tobytes() == w.to_vector().tobytes()


def test_vector_roundtrip():
    w = init_params(NetworkShape(3, 2, 20), 2)
    v = NetworkParams.from_vector(w.shape, w.to_vector())
    assert v.to_vector().tobytes() == w.to_vector().tobytes()
    with pytest.raises(ValueError):
        NetworkParams.from_vector(w.shape, w.to_vector()[:-1])


# ---------------------------------------------------------------- checkpoints


def test_checkpoint_roundtrip(tmp_path):
    w = init_params(NetworkShape(3, 2, 20), 11)
    path = tmp_path / "p1.ckpt"
    save_checkpoint(path, w, step=77, seed=2 ** 64 - 1)
    back, step, seed = load_checkpoint(path)
    assert (step, seed) == (77, 2 ** 64 - 1)
    assert back.shape == w.shape
    assert back.to_vector().tobytes() == w.to_vector().tobytes()


def test_checkpoint_layout():
    w = init_params(NetworkShape(2, 1, 10), 0)
    data = checkpoint_bytes(w, 5, 9)
    assert data[:8] == MAGIC
    assert len(data) == 8 + 4 * 4 + 8 * 2 + 8 * param_count(w.shape)
    # first parameter is W1[0, 0], little-endian float64
    assert np.frombuffer(data[40:48], "<f8")[0] == w.weights[0][0, 0]


@pytest.mark.parametrize("corrupt", [
    lambda d: b"XXXXXXXX" + d[8:],
    lambda d: d[:8] + (2).to_bytes(4, "little") + d[12:],
    lambda d: d[:-8],
    lambda d: d[:20],
    lambda d: d[:12] + (1).to_bytes(4, "little") + d[16:],
])
def test_corrupt_checkpoints_are_rejected(corrupt):
    data = checkpoint_bytes(init_params(NetworkShape(2, 1, 10), 0), 1, 1)
    with pytest.raises(CheckpointFormatError):
        parse_checkpoint(corrupt(data))


def test_game_shape_checked_by_forward():
    w = init_params(NetworkShape(2, 1, 10), 0)
    with pytest.raises(ShapeMismatch):
        forward(w, Game(np.eye(3), np.eye(3)))


def test_finite_difference_error_shrinks_quadratically():
    from nashnet.network import finite_difference_gradient

    params, g, role, fb, loss = instances(1, seed=7)[0]
    _, exact = loss_and_gradient(params, g, role, fb, loss)
    errs = [np.abs(finite_difference_gradient(params, g, role, fb, loss, h=h).to_vector()
                   - exact.to_vector()).max() for h in (1e-2, 5e-3)]
    # order h^2 truncation error: halving h cuts the error by about four
    assert errs[1] < errs[0] / 2.5
