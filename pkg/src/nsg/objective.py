"""Loss functions and evaluation metrics.

Two losses: plain KL reconstruction against the clean table, and the
associator loss, the KL divergence between the distributions of
left-associated and right-associated double products derived from the
network output alone. Both exist in a tape-differentiable batched form
(for training) and a plain-cube form (for analysis and tests).

All logs are guarded by a 1e-12 floor with the 0*log(0) = 0 convention;
one-hot targets would otherwise produce infinities.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .algebra import CayleyTable, ProbabilityCube, is_associative

CLAMP_FLOOR = 1e-12


@dataclass(frozen=True)
class TripleDistributions:
    """P{(e_i*e_j)*e_k = e_l} and P{e_i*(e_j*e_k) = e_l} as (n,n,n,n) arrays."""

    left: np.ndarray
    right: np.ndarray


@dataclass(frozen=True)
class MetricsReport:
    guess_rate: float
    associative_rate: float
    n_tables: int
    loss_name: str
    checkpoint_id: str
    mask_fraction: float
    seed: int

    def to_json_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# tape-differentiable batched losses; rows are flattened cubes of shape (B, n**3)


def kl_loss(tape: Optional[ad.Tape], x: ad.Tensor, y: ad.Tensor) -> ad.Tensor:
    """Batch-mean KL(x || y) = sum x*log(x/y), clamped, x typically a constant target."""
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    batch = x.shape[0] if len(x.shape) > 1 else 1
    lx = ad.log(tape, ad.clamp_min(tape, x, CLAMP_FLOOR))
    ly = ad.log(tape, ad.clamp_min(tape, y, CLAMP_FLOOR))
    per_coord = ad.mul(tape, x, ad.sub(tape, lx, ly))
    return ad.scale(tape, ad.sum_all(tape, per_coord), 1.0 / batch)


def double_product_tensors(tape: Optional[ad.Tape], y: ad.Tensor, n: int) -> tuple[ad.Tensor, ad.Tensor]:
    """Left- and right-association distributions of a (B, n**3) batch, as (B, n**4)."""
    batch = y.shape[0]
    # left[b,(ij),(kl)] = sum_m y[b,i,j,m] * y[b,m,k,l]
    left = ad.matmul(
        tape,
        ad.reshape(tape, y, (batch, n * n, n)),
        ad.reshape(tape, y, (batch, n, n * n)),
    )
    left = ad.reshape(tape, left, (batch, n**4))
    # right[b,i,j,k,l] = sum_m y[b,i,m,l] * y[b,j,k,m]: contract an (i,l,m) view
    # against an (m,j,k) view, then put the axes back in (i,j,k,l) order.
    grid = ad.reshape(tape, y, (batch, n, n, n))
    iml = ad.reshape(tape, ad.transpose(tape, grid, (0, 1, 3, 2)), (batch, n * n, n))
    mjk = ad.reshape(tape, ad.transpose(tape, grid, (0, 3, 1, 2)), (batch, n, n * n))
    right = ad.reshape(tape, ad.matmul(tape, iml, mjk), (batch, n, n, n, n))
    right = ad.reshape(tape, ad.transpose(tape, right, (0, 1, 3, 4, 2)), (batch, n**4))
    return left, right


def al_loss(tape: Optional[ad.Tape], y: ad.Tensor, n: int, symmetric: bool = False) -> ad.Tensor:
    """Batch-mean associator loss: KL(left-association || right-association).

    symmetric=True averages both argument orders; the default keeps the
    one-sided form.
    """
    left, right = double_product_tensors(tape, y, n)
    loss = kl_loss(tape, left, right)
    if symmetric:
        loss = ad.scale(tape, ad.add(tape, loss, kl_loss(tape, right, left)), 0.5)
    return loss


# ---------------------------------------------------------------------------
# plain-cube forms


def kl_divergence(x: ProbabilityCube, y: ProbabilityCube) -> float:
    """KL(x || y) summed over all n**3 coordinates."""
    if x.n != y.n:
        raise ValueError(f"cube size mismatch: n={x.n} vs n={y.n}")
    out = kl_loss(None, ad.Tensor(x.values[None, :]), ad.Tensor(y.values[None, :]))
    return float(out.data)


def triple_products(y: ProbabilityCube) -> TripleDistributions:
    """Distributions of both double products; each sums to 1 over the last axis."""
    g = y.as_grid()
    left = np.einsum("ijm,mkl->ijkl", g, g)
    right = np.einsum("iml,jkm->ijkl", g, g)
    return TripleDistributions(left=left, right=right)


def associator_loss(y: ProbabilityCube, symmetric: bool = False) -> float:
    """KL divergence between the two double-product distributions of a single cube."""
    out = al_loss(None, ad.Tensor(y.values[None, :]), y.n, symmetric=symmetric)
    return float(out.data)


# ---------------------------------------------------------------------------
# metrics


def guess_rate(outputs: Sequence[CayleyTable], originals: Sequence[CayleyTable]) -> float:
    """Fraction of outputs identical to their pre-noise originals, whole tables."""
    if len(outputs) != len(originals):
        raise ValueError(f"length mismatch: {len(outputs)} outputs vs {len(originals)} originals")
    if not outputs:
        raise ValueError("empty input")
    hits = sum(1 for out, orig in zip(outputs, originals) if out == orig)
    return hits / len(outputs)


def associative_rate(outputs: Sequence[CayleyTable]) -> float:
    """Fraction of outputs that are associative."""
    if not outputs:
        raise ValueError("empty input")
    return sum(1 for t in outputs if is_associative(t)) / len(outputs)
