"""Reverse-mode automatic differentiation over dense float64 arrays.

A Tape records primitive applications in execution order (so it is already
topologically sorted); backward() walks it once in reverse. Passing tape=None
to any primitive computes values without recording, which is how eval-mode
forward passes and finite-difference probes run.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


class Tensor:
    """A float64 array plus identity; gradients are keyed by object identity."""

    __slots__ = ("data",)

    def __init__(self, data):
        self.data = np.asarray(data, dtype=np.float64)

    @property
    def shape(self):
        return self.data.shape

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


@dataclass
class _Node:
    out: Tensor
    inputs: tuple[Tensor, ...]
    backward_fn: Callable[[np.ndarray], tuple]


class Tape:
    """Execution-ordered record of primitive applications."""

    __slots__ = ("nodes",)

    def __init__(self):
        self.nodes: list[_Node] = []

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], backward_fn) -> None:
        self.nodes.append(_Node(out, inputs, backward_fn))

    def __len__(self):
        return len(self.nodes)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    # reduce a gradient back to the shape of a broadcast operand
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# primitives


def add(tape: Optional[Tape], a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data)
    if tape is not None:
        tape.record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))
    return out


def sub(tape: Optional[Tape], a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data - b.data)
    if tape is not None:
        tape.record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))
    return out


def mul(tape: Optional[Tape], a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data)
    if tape is not None:
        tape.record(
            out,
            (a, b),
            lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        )
    return out


def scale(tape: Optional[Tape], a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data * c)
    if tape is not None:
        tape.record(out, (a,), lambda g: (g * c,))
    return out


def matmul(tape: Optional[Tape], a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != b.data.ndim or a.data.ndim not in (2, 3):
        raise ValueError(f"matmul expects both 2-d or both 3-d, got {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)
    if tape is not None:
        tape.record(
            out,
            (a, b),
            lambda g: (g @ np.swapaxes(b.data, -1, -2), np.swapaxes(a.data, -1, -2) @ g),
        )
    return out


def linear(tape: Optional[Tape], x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map x @ w + b with gradients for all three arguments."""
    if x.data.shape[-1] != w.data.shape[0] or w.data.shape[1] != b.data.shape[-1]:
        raise ValueError(f"linear shape mismatch: {x.shape} @ {w.shape} + {b.shape}")
    return add(tape, matmul(tape, x, w), b)


def relu(tape: Optional[Tape], x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0.0))
    if tape is not None:
        tape.record(out, (x,), lambda g: (g * (x.data > 0.0),))  # subgradient 0 at the kink
    return out


def log(tape: Optional[Tape], x: Tensor) -> Tensor:
    out = Tensor(np.log(x.data))
    if tape is not None:
        tape.record(out, (x,), lambda g: (g / x.data,))
    return out


def clamp_min(tape: Optional[Tape], x: Tensor, floor: float) -> Tensor:
    out = Tensor(np.maximum(x.data, floor))
    if tape is not None:
        tape.record(out, (x,), lambda g: (g * (x.data > floor),))
    return out


def reshape(tape: Optional[Tape], x: Tensor, shape: tuple) -> Tensor:
    out = Tensor(x.data.reshape(shape))
    if tape is not None:
        tape.record(out, (x,), lambda g: (g.reshape(x.shape),))
    return out


def transpose(tape: Optional[Tape], x: Tensor, axes: tuple) -> Tensor:
    out = Tensor(np.transpose(x.data, axes))
    if tape is not None:
        inv = np.argsort(axes)
        tape.record(out, (x,), lambda g: (np.transpose(g, inv),))
    return out


def sum_all(tape: Optional[Tape], x: Tensor) -> Tensor:
    out = Tensor(x.data.sum())
    if tape is not None:
        tape.record(out, (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))
    return out


def softmax_groups(tape: Optional[Tape], x: Tensor, group: int) -> Tensor:
    """Softmax applied independently within each consecutive run of `group` entries."""
    if x.data.shape[-1] % group != 0:
        raise ValueError(f"last dim {x.data.shape[-1]} not divisible by group {group}")
    shaped = x.data.reshape(x.data.shape[:-1] + (-1, group))
    shifted = shaped - shaped.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(s.reshape(x.shape))
    if tape is not None:
        def backward(g):
            gs = g.reshape(s.shape)
            dx = s * (gs - (gs * s).sum(axis=-1, keepdims=True))
            return (dx.reshape(x.shape),)

        tape.record(out, (x,), backward)
    return out


def substitute(tape: Optional[Tape], x: Tensor, replacement: np.ndarray, mask: np.ndarray) -> Tensor:
    """Hard overwrite where mask is true; the replacement carries no gradient."""
    out = Tensor(np.where(mask, replacement, x.data))
    if tape is not None:
        tape.record(out, (x,), lambda g: (g * ~mask,))
    return out


def batch_norm(
    tape: Optional[Tape],
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    train: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Batch normalization over axis 0 of a (batch, d) tensor.

    Train mode normalizes by batch statistics and updates the running arrays
    in place (unbiased variance for the running estimate); eval mode uses the
    running statistics and touches nothing.
    """
    m = x.data.shape[0]
    if train:
        if m < 2:
            raise ValueError(f"batch_norm in train mode needs batch >= 2, got {m}")
        mean = x.data.mean(axis=0)
        var = x.data.var(axis=0)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var * (m / (m - 1.0))
    else:
        mean = running_mean
        var = running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv_std
    out = Tensor(gamma.data * xhat + beta.data)
    if tape is not None:
        if train:
            def backward(g):
                dgamma = (g * xhat).sum(axis=0)
                dbeta = g.sum(axis=0)
                dx = (gamma.data * inv_std) * (
                    g - g.mean(axis=0) - xhat * (g * xhat).mean(axis=0)
                )
                return (dx, dgamma, dbeta)
        else:
            def backward(g):
                return (g * gamma.data * inv_std, (g * xhat).sum(axis=0), g.sum(axis=0))

        tape.record(out, (x, gamma, beta), backward)
    return out


# ---------------------------------------------------------------------------
# reverse pass


def backward(tape: Tape, loss: Tensor, params: Sequence[Tensor]) -> list[np.ndarray]:
    """Gradients of a scalar loss for each parameter; unused parameters get zeros.

    A loss that is itself one of the parameters has gradient 1 with respect to
    itself; a constant loss gives all-zero gradients.
    """
    if loss.data.ndim != 0:
        raise ValueError(f"loss must be a scalar, got shape {loss.shape}")
    produced = any(node.out is loss for node in tape.nodes)
    if tape.nodes and not produced and all(loss is not p for p in params):
        raise ValueError("loss is disconnected from this tape")
    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}
    for node in reversed(tape.nodes):
        g = grads.get(id(node.out))
        if g is None:
            continue
        for inp, gi in zip(node.inputs, node.backward_fn(g)):
            if gi is None:
                continue
            acc = grads.get(id(inp))
            grads[id(inp)] = gi if acc is None else acc + gi
    return [grads.get(id(p), np.zeros_like(p.data)) for p in params]


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[Tensor], learning_rate: float = 1e-4, **kw) -> "AdamState":
        state = cls(learning_rate=learning_rate, **kw)
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
        return state


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: AdamState) -> AdamState:
    """One bias-corrected Adam update, applied to the parameters in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads, and state must align")
    state.step += 1
    c1 = 1.0 - state.beta1**state.step
    c2 = 1.0 - state.beta2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.data.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.data.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return state


# ---------------------------------------------------------------------------
# finite-difference verification


def grad_check(
    f: Callable[[Optional[Tape]], Tensor],
    params: Sequence[Tensor],
    step: float = 1e-5,
) -> float:
    """Max relative error between reverse-mode and central finite differences.

    `f(tape)` must evaluate the scalar under test from `params`, recording on
    the tape when one is given. Relative error per coordinate is
    |g_ad - g_fd| / max(1e-12, |g_ad| + |g_fd|).
    """
    tape = Tape()
    loss = f(tape)
    ad_grads = backward(tape, loss, params)
    worst = 0.0
    for p, g_ad in zip(params, ad_grads):
        flat = p.data.reshape(-1)
        g_flat = g_ad.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + step
            hi = float(f(None).data)
            flat[idx] = orig - step
            lo = float(f(None).data)
            flat[idx] = orig
            g_fd = (hi - lo) / (2.0 * step)
            if not np.isfinite(g_fd) or not np.isfinite(g_flat[idx]):
                raise FloatingPointError("non-finite value during gradient check")
            err = abs(g_flat[idx] - g_fd) / max(1e-12, abs(g_flat[idx]) + abs(g_fd))
            if err > worst:
                worst = err
    return worst
