import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nsg import autodiff as ad


def rnd(seed, *shape):
    return np.random.Generator(np.random.PCG64(seed)).normal(size=shape)


# --- linear -----------------------------------------------------------------


def test_linear_identity_weight_passes_input_through():
    x = ad.Tensor(rnd(0, 3, 4))
    out = ad.linear(None, x, ad.Tensor(np.eye(4)), ad.Tensor(np.zeros(4)))
    assert np.array_equal(out.data, x.data)


def test_linear_zero_input_broadcasts_bias():
    b = ad.Tensor(rnd(1, 4))
    out = ad.linear(None, ad.Tensor(np.zeros((5, 3))), ad.Tensor(np.zeros((3, 4))), b)
    assert np.array_equal(out.data, np.tile(b.data, (5, 1)))


def test_linear_bias_gradient_is_batch_count():
    x = ad.Tensor(rnd(2, 6, 3))
    w = ad.Tensor(rnd(3, 3, 4))
    b = ad.Tensor(rnd(4, 4))
    err = ad.grad_check(lambda tape: ad.sum_all(tape, ad.linear(tape, x, w, b)), [b])
    assert err <= 1e-8
    tape = ad.Tape()
    grads = ad.backward(tape, ad.sum_all(tape, ad.linear(tape, x, w, b)), [b])
    assert np.allclose(grads[0], 6.0)


def test_linear_shape_mismatch():
    with pytest.raises(ValueError):
        ad.linear(None, ad.Tensor(np.zeros((2, 3))), ad.Tensor(np.zeros((4, 5))), ad.Tensor(np.zeros(5)))


# --- relu ---------------------------------------------------------------------


def test_relu_values_and_gradient_mask():
    x = ad.Tensor(np.array([-2.0, -0.5, 0.0, 0.5, 2.0]))
    assert np.array_equal(ad.relu(None, x).data, [0, 0, 0, 0.5, 2.0])
    tape = ad.Tape()
    loss = ad.sum_all(tape, ad.relu(tape, x))
    (g,) = ad.backward(tape, loss, [x])
    assert np.array_equal(g, [0, 0, 0, 1, 1])  # subgradient at the kink is 0


def test_relu_gradient_matches_fd_away_from_kink():
    vals = rnd(5, 4, 4)
    vals[np.abs(vals) < 0.05] = 0.5
    x = ad.Tensor(vals)
    proj = ad.Tensor(rnd(6, 4, 4))
    err = ad.grad_check(lambda tape: ad.sum_all(tape, ad.mul(tape, ad.relu(tape, x), proj)), [x])
    assert err <= 1e-6


# --- batch norm ------------------------------------------------------------------


def test_batch_norm_train_normalizes():
    x = ad.Tensor(rnd(7, 32, 5) * 3 + 1)
    mean, var = np.zeros(5), np.ones(5)
    out = ad.batch_norm(None, x, ad.Tensor(np.ones(5)), ad.Tensor(np.zeros(5)), mean, var, train=True)
    assert np.allclose(out.data.mean(axis=0), 0, atol=1e-12)
    assert np.allclose(out.data.var(axis=0), 1, atol=1e-3)
    assert not np.allclose(mean, 0)  # running statistics got updated


def test_batch_norm_constant_column_goes_to_zero():
    x = ad.Tensor(np.full((8, 3), 2.5))
    out = ad.batch_norm(None, x, ad.Tensor(np.ones(3)), ad.Tensor(np.zeros(3)), np.zeros(3), np.ones(3), train=True)
    assert np.allclose(out.data, 0.0)


def test_batch_norm_eval_uses_frozen_stats():
    x = ad.Tensor(rnd(8, 4, 3))
    mean, var = np.array([1.0, 2.0, 3.0]), np.array([4.0, 1.0, 0.25])
    args = (ad.Tensor(np.ones(3)), ad.Tensor(np.zeros(3)), mean, var)
    out1 = ad.batch_norm(None, x, *args, train=False)
    out2 = ad.batch_norm(None, x, *args, train=False)
    assert np.array_equal(out1.data, out2.data)
    expected = (x.data - mean) / np.sqrt(var + 1e-5)
    assert np.allclose(out1.data, expected)


def test_batch_norm_rejects_tiny_train_batches():
    with pytest.raises(ValueError):
        ad.batch_norm(
            None, ad.Tensor(np.zeros((1, 3))), ad.Tensor(np.ones(3)), ad.Tensor(np.zeros(3)),
            np.zeros(3), np.ones(3), train=True,
        )


# --- softmax groups -----------------------------------------------------------------


def test_softmax_groups_of_zeros_is_uniform():
    out = ad.softmax_groups(None, ad.Tensor(np.zeros((2, 12))), 4)
    assert np.allclose(out.data, 0.25)


@given(st.integers(0, 2**31), st.integers(2, 5), st.integers(1, 6))
def test_softmax_groups_sum_to_one_and_positive(seed, group, rows):
    x = ad.Tensor(rnd(seed, rows, 4 * group) * 10)
    out = ad.softmax_groups(None, x, group).data.reshape(rows, 4, group)
    assert np.all(out > 0)
    assert np.max(np.abs(out.sum(axis=-1) - 1.0)) < 1e-12


def test_softmax_groups_shift_invariance():
    x = rnd(9, 1, 6)
    shifted = x.copy()
    shifted[0, :3] += 100.0  # shift one whole group
    a = ad.softmax_groups(None, ad.Tensor(x), 3).data
    b = ad.softmax_groups(None, ad.Tensor(shifted), 3).data
    assert np.allclose(a, b, atol=1e-12)


def test_softmax_groups_shape_guard():
    with pytest.raises(ValueError):
        ad.softmax_groups(None, ad.Tensor(np.zeros((2, 7))), 3)


# --- backward --------------------------------------------------------------------


def test_backward_of_parameter_itself_is_one():
    p = ad.Tensor(np.asarray(2.5))
    (g,) = ad.backward(ad.Tape(), p, [p])
    assert g == 1.0


def test_backward_constant_loss_gives_zeros():
    p = ad.Tensor(rnd(0, 3))
    (g,) = ad.backward(ad.Tape(), ad.Tensor(np.asarray(1.0)), [p])
    assert np.array_equal(g, np.zeros(3))


def test_backward_sum_of_independent_terms_is_sum_of_gradients():
    a = ad.Tensor(np.asarray(2.0))
    b = ad.Tensor(np.asarray(3.0))
    tape = ad.Tape()
    loss = ad.add(tape, ad.mul(tape, a, a), ad.mul(tape, b, b))  # a^2 + b^2
    ga, gb = ad.backward(tape, loss, [a, b])
    assert ga == pytest.approx(4.0) and gb == pytest.approx(6.0)


def test_backward_unused_parameter_gets_zero():
    a = ad.Tensor(np.asarray(2.0))
    unused = ad.Tensor(rnd(1, 4))
    tape = ad.Tape()
    loss = ad.mul(tape, a, a)
    _, g = ad.backward(tape, loss, [a, unused])
    assert np.array_equal(g, np.zeros(4))


def test_backward_rejects_non_scalar_loss():
    x = ad.Tensor(rnd(2, 3))
    tape = ad.Tape()
    out = ad.relu(tape, x)
    with pytest.raises(ValueError):
        ad.backward(tape, out, [x])


def test_backward_rejects_disconnected_loss():
    x = ad.Tensor(rnd(3, 3))
    tape = ad.Tape()
    ad.sum_all(tape, x)  # tape is non-empty
    stray = ad.Tensor(np.asarray(1.0))
    with pytest.raises(ValueError):
        ad.backward(tape, stray, [x])


def test_repeated_input_accumulates():
    a = ad.Tensor(np.asarray(3.0))
    tape = ad.Tape()
    (g,) = ad.backward(tape, ad.mul(tape, a, a), [a])
    assert g == pytest.approx(6.0)


# --- adam --------------------------------------------------------------------------


def test_adam_zero_gradient_is_identity():
    p = ad.Tensor(rnd(4, 3, 3))
    before = p.data.copy()
    state = ad.AdamState.for_params([p])
    for _ in range(5):
        ad.adam_step([p], [np.zeros((3, 3))], state)
    assert np.array_equal(p.data, before)


def test_adam_first_step_hand_value():
    # t=1, grad 1: m_hat = v_hat = 1, so p <- 1 - lr / (1 + eps)
    p = ad.Tensor(np.asarray(1.0))
    state = ad.AdamState.for_params([p], learning_rate=1e-4)
    ad.adam_step([p], [np.asarray(1.0)], state)
    assert p.data == pytest.approx(1.0 - 1e-4 / (1.0 + 1e-8), abs=1e-15)


def test_adam_is_deterministic():
    def run():
        p = ad.Tensor(rnd(5, 4))
        state = ad.AdamState.for_params([p], learning_rate=1e-3)
        rng = np.random.Generator(np.random.PCG64(17))
        for _ in range(20):
            ad.adam_step([p], [rng.normal(size=4)], state)
        return p.data

    assert np.array_equal(run(), run())


def test_adam_shape_mismatch():
    p = ad.Tensor(rnd(6, 3))
    state = ad.AdamState.for_params([p])
    with pytest.raises(ValueError):
        ad.adam_step([p], [np.zeros(4)], state)


# --- grad_check ----------------------------------------------------------------------


def test_grad_check_quadratic_form_is_tight():
    a = rnd(7, 4, 4)
    q = ad.Tensor(a @ a.T + 4 * np.eye(4))
    x = ad.Tensor(rnd(8, 4))

    def f(tape):
        xr = ad.reshape(tape, x, (1, 4))
        return ad.sum_all(tape, ad.mul(tape, xr, ad.matmul(tape, xr, q)))

    assert ad.grad_check(f, [x]) <= 1e-8


def test_grad_check_constant_function_is_zero_error():
    x = ad.Tensor(rnd(9, 3))
    const = ad.Tensor(np.asarray(2.0))
    assert ad.grad_check(lambda tape: const, [x]) == 0.0


def test_grad_check_reports_nonfinite():
    x = ad.Tensor(np.asarray(0.0))

    def f(tape):
        return ad.log(tape, x)  # log(0) = -inf

    with pytest.raises(FloatingPointError):
        ad.grad_check(f, [x])


# --- tape determinism ------------------------------------------------------------------


def test_tape_replay_is_deterministic():
    def run():
        x = ad.Tensor(rnd(11, 4, 6))
        w = ad.Tensor(rnd(12, 6, 3))
        b = ad.Tensor(rnd(13, 3))
        tape = ad.Tape()
        out = ad.softmax_groups(tape, ad.linear(tape, x, w, b), 3)
        loss = ad.sum_all(tape, ad.mul(tape, out, out))
        return out.data, ad.backward(tape, loss, [w, b])

    o1, g1 = run()
    o2, g2 = run()
    assert np.array_equal(o1, o2)
    assert all(np.array_equal(a, b) for a, b in zip(g1, g2))
