import numpy as np
import pytest

from nsg import autodiff as ad
from nsg.algebra import partial_to_cube, table_to_cube
from nsg.network import (
    CheckpointError,
    KnownMask,
    forward_pass,
    init_network,
    load_checkpoint,
    save_checkpoint,
)

from conftest import NILPOTENT_5, partial, table


def softmax_batch(seed, rows, n):
    rng = np.random.Generator(np.random.PCG64(seed))
    raw = rng.normal(size=(rows, n * n, n))
    e = np.exp(raw - raw.max(axis=-1, keepdims=True))
    return (e / e.sum(axis=-1, keepdims=True)).reshape(rows, n**3)


def test_parameter_count_n5_depth2():
    # 125*3125+3125 + 3125*3125+3125 + 3125*125+125 + 2*(2*3125)
    assert init_network(5, 2, seed=0).param_count() == 10_565_750


def test_layer_dims_n2_depth1():
    assert init_network(2, 1, seed=0).dims == [8, 32, 8]


def test_same_seed_gives_identical_parameters():
    assert init_network(3, 2, seed=42) == init_network(3, 2, seed=42)
    assert init_network(3, 2, seed=42) != init_network(3, 2, seed=43)


def test_init_rejects_bad_dims():
    with pytest.raises(ValueError):
        init_network(1, 1, seed=0)
    with pytest.raises(ValueError):
        init_network(3, 0, seed=0)


def test_known_mask_validation():
    with pytest.raises(ValueError):
        KnownMask(np.ones((2, 3), dtype=bool))


def test_output_groups_sum_to_one():
    params = init_network(3, 1, seed=1)
    batch = softmax_batch(0, 6, 3)
    masks = np.random.Generator(np.random.PCG64(1)).random((6, 3, 3)) < 0.5
    out = forward_pass(params, batch, masks, mode="eval")
    sums = out.data.reshape(6, 9, 3).sum(axis=-1)
    assert np.max(np.abs(sums - 1.0)) < 1e-12


def test_fully_known_input_passes_through_exactly(nilpotent5):
    params = init_network(5, 1, seed=2)
    cube = table_to_cube(nilpotent5).values[None, :]
    masks = np.ones((1, 5, 5), dtype=bool)
    out = forward_pass(params, cube, masks, mode="eval")
    assert np.array_equal(out.data, cube)


def test_unknown_groups_are_strictly_positive():
    params = init_network(3, 1, seed=3)
    p = partial("11? ?2? 3??")
    cube = partial_to_cube(p).values[None, :]
    out = forward_pass(params, cube, p.known_mask()[None], mode="eval").data
    known_flags = np.repeat(p.known_mask().reshape(-1), 3)
    assert np.all(out[0][~known_flags] > 0.0)
    assert np.array_equal(out[0][known_flags], cube[0][known_flags])


def test_substitution_is_idempotent():
    params = init_network(3, 1, seed=4)
    p = partial("11? ?2? 3??")
    cube = partial_to_cube(p).values[None, :]
    masks = p.known_mask()[None]
    once = forward_pass(params, cube, masks, mode="eval").data
    again = forward_pass(params, once, masks, mode="eval").data
    known_flags = np.repeat(p.known_mask().reshape(-1), 3)
    assert np.array_equal(once[0][known_flags], again[0][known_flags])


def test_eval_mode_is_deterministic():
    params = init_network(3, 2, seed=5)
    batch = softmax_batch(6, 4, 3)
    masks = np.zeros((4, 3, 3), dtype=bool)
    a = forward_pass(params, batch, masks, mode="eval").data
    b = forward_pass(params, batch, masks, mode="eval").data
    assert np.array_equal(a, b)


def test_known_masks_accept_list_of_known_mask():
    params = init_network(2, 1, seed=6)
    batch = softmax_batch(7, 2, 2)
    masks = [KnownMask(np.eye(2, dtype=bool)), KnownMask(np.zeros((2, 2), dtype=bool))]
    out = forward_pass(params, batch, masks, mode="eval")
    assert out.data.shape == (2, 8)


def test_gradient_of_substituted_groups_is_exactly_zero():
    params = init_network(3, 1, seed=7)
    batch = softmax_batch(8, 4, 3)
    rng = np.random.Generator(np.random.PCG64(9))
    masks = rng.random((4, 3, 3)) < 0.5
    picked = np.repeat(masks.reshape(4, 9), 3, axis=1)  # coordinates of known groups
    tape = ad.Tape()
    out = forward_pass(params, batch, masks, mode="train", tape=tape)
    loss = ad.sum_all(tape, ad.mul(tape, out, ad.Tensor(picked.astype(float))))
    grads = ad.backward(tape, loss, params.trainable())
    assert all(np.all(g == 0.0) for g in grads)


def test_forward_shape_guards():
    params = init_network(3, 1, seed=8)
    with pytest.raises(ValueError):
        forward_pass(params, np.zeros((2, 26)), np.ones((2, 3, 3), bool))
    with pytest.raises(ValueError):
        forward_pass(params, softmax_batch(0, 2, 3), np.ones((3, 3, 3), bool))
    with pytest.raises(ValueError):
        forward_pass(params, softmax_batch(0, 2, 3), np.ones((2, 3, 3), bool), mode="jit")


# --- checkpoints ------------------------------------------------------------------


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    params = init_network(3, 2, seed=11)
    params.bn_mean[0][:] = 0.25  # non-default running stats must survive
    params.bn_var[1][:] = 2.0
    path = tmp_path / "model.nsgm"
    save_checkpoint(params, path)
    loaded = load_checkpoint(path)
    assert loaded == params
    save_checkpoint(loaded, tmp_path / "again.nsgm")
    assert (tmp_path / "again.nsgm").read_bytes() == path.read_bytes()


def test_truncated_checkpoint_is_rejected(tmp_path):
    params = init_network(2, 1, seed=12)
    path = tmp_path / "model.nsgm"
    save_checkpoint(params, path)
    blob = path.read_bytes()
    for cut in (3, 10, len(blob) - 17):
        clipped = tmp_path / "clipped.nsgm"
        clipped.write_bytes(blob[:cut])
        with pytest.raises(CheckpointError):
            load_checkpoint(clipped)


def test_wrong_magic_is_rejected(tmp_path):
    params = init_network(2, 1, seed=13)
    path = tmp_path / "model.nsgm"
    save_checkpoint(params, path)
    blob = bytearray(path.read_bytes())
    blob[:5] = b"NSGM9"
    bad = tmp_path / "bad.nsgm"
    bad.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)
