"""Finite-difference verification of every primitive and of the composed model.

Each check compares reverse-mode gradients against central differences at
seeded random points chosen away from relu kinks and clamp floors, and
returns the max relative error per check. The composed check runs the full
network plus associator loss at reduced width (n=3, depth 1) and sweeps all
parameter coordinates.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from . import autodiff as ad
from .network import forward_pass, init_network
from .objective import al_loss, kl_loss

THRESHOLD = 1e-4
POINTS = 10


def _rng(seed: int, point: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64([seed, point]))


def _softmax_rows(raw: np.ndarray, group: int) -> np.ndarray:
    shaped = raw.reshape(raw.shape[0], -1, group)
    e = np.exp(shaped - shaped.max(axis=-1, keepdims=True))
    return (e / e.sum(axis=-1, keepdims=True)).reshape(raw.shape)


def _primitive_checks(seed: int) -> dict[str, Callable[[int], float]]:
    def check_linear(point):
        r = _rng(seed + 11, point)
        x = ad.Tensor(r.normal(size=(3, 4)))
        w = ad.Tensor(r.normal(size=(4, 5)))
        b = ad.Tensor(r.normal(size=5))
        proj = r.normal(size=(3, 5))
        f = lambda tape: ad.sum_all(tape, ad.mul(tape, ad.linear(tape, x, w, b), ad.Tensor(proj)))
        return ad.grad_check(f, [x, w, b])

    def check_matmul_batched(point):
        r = _rng(seed + 12, point)
        a = ad.Tensor(r.normal(size=(2, 3, 4)))
        b = ad.Tensor(r.normal(size=(2, 4, 5)))
        proj = r.normal(size=(2, 3, 5))
        f = lambda tape: ad.sum_all(tape, ad.mul(tape, ad.matmul(tape, a, b), ad.Tensor(proj)))
        return ad.grad_check(f, [a, b])

    def check_relu(point):
        r = _rng(seed + 13, point)
        vals = r.normal(size=(4, 6))
        vals[np.abs(vals) < 1e-2] = 1e-2  # keep clear of the kink
        x = ad.Tensor(vals)
        proj = r.normal(size=(4, 6))
        f = lambda tape: ad.sum_all(tape, ad.mul(tape, ad.relu(tape, x), ad.Tensor(proj)))
        return ad.grad_check(f, [x])

    def check_log_clamp(point):
        r = _rng(seed + 14, point)
        x = ad.Tensor(r.uniform(0.1, 2.0, size=(3, 5)))
        proj = r.normal(size=(3, 5))
        f = lambda tape: ad.sum_all(
            tape, ad.mul(tape, ad.log(tape, ad.clamp_min(tape, x, 1e-12)), ad.Tensor(proj))
        )
        return ad.grad_check(f, [x])

    def check_softmax_groups(point):
        r = _rng(seed + 15, point)
        x = ad.Tensor(r.normal(size=(2, 12)))
        proj = r.normal(size=(2, 12))
        f = lambda tape: ad.sum_all(
            tape, ad.mul(tape, ad.softmax_groups(tape, x, 3), ad.Tensor(proj))
        )
        return ad.grad_check(f, [x])

    def check_batch_norm_train(point):
        r = _rng(seed + 16, point)
        x = ad.Tensor(r.normal(size=(6, 5)))
        gamma = ad.Tensor(r.uniform(0.5, 1.5, size=5))
        beta = ad.Tensor(r.normal(size=5))
        mean, var = np.zeros(5), np.ones(5)
        proj = r.normal(size=(6, 5))
        f = lambda tape: ad.sum_all(
            tape,
            ad.mul(
                tape, ad.batch_norm(tape, x, gamma, beta, mean, var, train=True), ad.Tensor(proj)
            ),
        )
        return ad.grad_check(f, [x, gamma, beta])

    def check_batch_norm_eval(point):
        r = _rng(seed + 17, point)
        x = ad.Tensor(r.normal(size=(3, 5)))
        gamma = ad.Tensor(r.uniform(0.5, 1.5, size=5))
        beta = ad.Tensor(r.normal(size=5))
        mean = r.normal(size=5)
        var = r.uniform(0.5, 2.0, size=5)
        proj = r.normal(size=(3, 5))
        f = lambda tape: ad.sum_all(
            tape,
            ad.mul(
                tape, ad.batch_norm(tape, x, gamma, beta, mean, var, train=False), ad.Tensor(proj)
            ),
        )
        return ad.grad_check(f, [x, gamma, beta])

    def check_kl_through_softmax(point):
        r = _rng(seed + 18, point)
        logits = ad.Tensor(r.normal(size=(2, 8)))
        target = _softmax_rows(r.normal(size=(2, 8)), 2)
        f = lambda tape: kl_loss(
            tape, ad.Tensor(target), ad.softmax_groups(tape, logits, 2)
        )
        return ad.grad_check(f, [logits])

    def check_al_loss(point):
        r = _rng(seed + 19, point)
        logits = ad.Tensor(r.normal(size=(2, 27)))
        f = lambda tape: al_loss(tape, ad.softmax_groups(tape, logits, 3), 3)
        return ad.grad_check(f, [logits])

    return {
        "linear": check_linear,
        "matmul_batched": check_matmul_batched,
        "relu": check_relu,
        "log_clamp": check_log_clamp,
        "softmax_groups": check_softmax_groups,
        "batch_norm_train": check_batch_norm_train,
        "batch_norm_eval": check_batch_norm_eval,
        "kl_through_softmax": check_kl_through_softmax,
        "al_loss": check_al_loss,
    }


def composed_check(seed: int, points: int = POINTS) -> float:
    """Full network + associator loss at n=3, depth 1, sweeping every parameter.

    The eval-mode pass sweeps every coordinate. In train mode the hidden-layer
    biases are inert by construction (batch norm subtracts the batch mean, so a
    uniform shift cancels), which finite differences cannot resolve against
    rounding noise; the train-mode pass therefore sweeps everything else and
    instead asserts that the reverse-mode bias gradients vanish outright.
    """
    n = 3
    worst = 0.0
    for point in range(points):
        r = _rng(seed + 31, point)
        params = init_network(n, depth=1, seed=int(r.integers(2**31)))
        batch = _softmax_rows(r.normal(size=(4, n**3)), n)
        masks = r.random((4, n, n)) < 0.5

        def f(tape, mode):
            return al_loss(tape, forward_pass(params, batch, masks, mode=mode, tape=tape), n)

        worst = max(worst, ad.grad_check(lambda tape: f(tape, "eval"), params.trainable()))

        hidden_biases = params.biases[:-1]
        inert = {id(b) for b in hidden_biases}
        live = [t for t in params.trainable() if id(t) not in inert]
        worst = max(worst, ad.grad_check(lambda tape: f(tape, "train"), live))
        tape = ad.Tape()
        bias_grads = ad.backward(tape, f(tape, "train"), hidden_biases)
        dead = max(float(np.abs(g).max()) for g in bias_grads)
        if dead > 1e-10:
            raise AssertionError(f"hidden bias gradient should vanish under batch norm, got {dead}")
    return worst


def run_suite(seed: int, points: int = POINTS) -> dict[str, float]:
    """All checks; returns max relative error per check name."""
    results = {}
    for name, check in _primitive_checks(seed).items():
        results[name] = max(check(point) for point in range(points))
    results["network_al_composed"] = composed_check(seed, points)
    return results
