"""The denoising autoencoder: n**3 input, hidden layers of width n**5, softmax output.

The output is post-processed so that every (i, j) group the input marked as
known is overwritten by the input's exact one-hot group; gradients flow only
through the groups that were unknown.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad

CHECKPOINT_MAGIC = b"NSGM1"


class CheckpointError(ValueError):
    """Unreadable, truncated, or wrong-version checkpoint file."""


@dataclass(frozen=True)
class KnownMask:
    """Boolean n x n grid marking the cells filled in an input partial table."""

    grid: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.grid, dtype=bool)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"mask must be a square grid, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "grid", arr)

    @property
    def n(self) -> int:
        return self.grid.shape[0]


class ModelParams:
    """All weights, biases, and batch-norm state of one autoencoder."""

    def __init__(self, n, depth, weights, biases, bn_gamma, bn_beta, bn_mean, bn_var, seed):
        self.n = n
        self.depth = depth
        self.weights = [w if isinstance(w, ad.Tensor) else ad.Tensor(w) for w in weights]
        self.biases = [b if isinstance(b, ad.Tensor) else ad.Tensor(b) for b in biases]
        self.bn_gamma = [g if isinstance(g, ad.Tensor) else ad.Tensor(g) for g in bn_gamma]
        self.bn_beta = [b if isinstance(b, ad.Tensor) else ad.Tensor(b) for b in bn_beta]
        self.bn_mean = [np.asarray(m, dtype=np.float64) for m in bn_mean]
        self.bn_var = [np.asarray(v, dtype=np.float64) for v in bn_var]
        self.seed = seed

    @property
    def dims(self) -> list[int]:
        return [self.n**3] + [self.n**5] * self.depth + [self.n**3]

    def trainable(self) -> list[ad.Tensor]:
        """Parameters updated by the optimizer, in checkpoint order."""
        out: list[ad.Tensor] = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        for g, b in zip(self.bn_gamma, self.bn_beta):
            out.extend((g, b))
        return out

    def param_count(self) -> int:
        return sum(t.data.size for t in self.trainable())

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.n,
            self.depth,
            [w.data.copy() for w in self.weights],
            [b.data.copy() for b in self.biases],
            [g.data.copy() for g in self.bn_gamma],
            [b.data.copy() for b in self.bn_beta],
            [m.copy() for m in self.bn_mean],
            [v.copy() for v in self.bn_var],
            self.seed,
        )

    def _arrays(self) -> list[np.ndarray]:
        arrs = []
        for w, b in zip(self.weights, self.biases):
            arrs.extend((w.data, b.data))
        for g, b, m, v in zip(self.bn_gamma, self.bn_beta, self.bn_mean, self.bn_var):
            arrs.extend((g.data, b.data, m, v))
        return arrs

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        if (self.n, self.depth, self.seed) != (other.n, other.depth, other.seed):
            return False
        mine, theirs = self._arrays(), other._arrays()
        return len(mine) == len(theirs) and all(
            np.array_equal(a, b) for a, b in zip(mine, theirs)
        )


def init_network(n: int, depth: int, seed: int) -> ModelParams:
    """Glorot-uniform weights, zero biases, identity batch-norm, all seeded."""
    if n < 2:
        raise ValueError(f"cardinality must be >= 2, got {n}")
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    dims = [n**3] + [n**5] * depth + [n**3]
    rng = np.random.Generator(np.random.PCG64(seed))
    weights, biases = [], []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (d_in + d_out))
        weights.append(rng.uniform(-limit, limit, size=(d_in, d_out)))
        biases.append(np.zeros(d_out))
    hidden = dims[1:-1]
    return ModelParams(
        n=n,
        depth=depth,
        weights=weights,
        biases=biases,
        bn_gamma=[np.ones(d) for d in hidden],
        bn_beta=[np.zeros(d) for d in hidden],
        bn_mean=[np.zeros(d) for d in hidden],
        bn_var=[np.ones(d) for d in hidden],
        seed=seed,
    )


def _group_mask(masks, n: int, batch: int) -> np.ndarray:
    if isinstance(masks, np.ndarray):
        grids = masks
    else:
        grids = np.stack([m.grid for m in masks])
    if grids.shape != (batch, n, n):
        raise ValueError(f"expected {batch} masks of shape ({n},{n}), got {grids.shape}")
    return np.repeat(grids.reshape(batch, n * n).astype(bool), n, axis=1)


def forward_pass(
    params: ModelParams,
    batch,
    masks,
    mode: str = "eval",
    tape: Optional[ad.Tape] = None,
) -> ad.Tensor:
    """Run the autoencoder on a (batch, n**3) stack of flattened cubes.

    masks is a list of KnownMask or a (batch, n, n) boolean array; output
    groups at known cells are replaced by the input's one-hot groups.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = batch if isinstance(batch, ad.Tensor) else ad.Tensor(batch)
    n = params.n
    if x.data.ndim != 2 or x.data.shape[1] != n**3:
        raise ValueError(f"batch must be (B, {n**3}), got {x.shape}")
    mask = _group_mask(masks, n, x.data.shape[0])
    inputs = x.data
    h = x
    for i in range(params.depth):
        h = ad.linear(tape, h, params.weights[i], params.biases[i])
        h = ad.batch_norm(
            tape,
            h,
            params.bn_gamma[i],
            params.bn_beta[i],
            params.bn_mean[i],
            params.bn_var[i],
            train=(mode == "train"),
        )
        h = ad.relu(tape, h)
    out = ad.linear(tape, h, params.weights[-1], params.biases[-1])
    probs = ad.softmax_groups(tape, out, n)
    return ad.substitute(tape, probs, inputs, mask)


# ---------------------------------------------------------------------------
# checkpoint file: magic, u64 little-endian header length, JSON header, then
# the raw little-endian float64 arrays in trainable order followed by the
# batch-norm running statistics.


def _array_order(params: ModelParams) -> list[np.ndarray]:
    return params._arrays()


def save_checkpoint(params: ModelParams, path) -> None:
    arrays = _array_order(params)
    header = {
        "n": params.n,
        "depth": params.depth,
        "seed": params.seed,
        "dims": params.dims,
        "value_count": int(sum(a.size for a in arrays)),
    }
    blob = json.dumps(header, sort_keys=True).encode("ascii")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(CHECKPOINT_MAGIC) + 8:
        raise CheckpointError(f"{path}: truncated checkpoint")
    if raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic or unsupported checkpoint version")
    off = len(CHECKPOINT_MAGIC)
    hlen = int.from_bytes(raw[off : off + 8], "little")
    off += 8
    if len(raw) < off + hlen:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[off : off + hlen].decode("ascii"))
        n, depth, seed = header["n"], header["depth"], header["seed"]
        value_count = header["value_count"]
    except (ValueError, KeyError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from None
    off += hlen
    if len(raw) - off != 8 * value_count:
        raise CheckpointError(
            f"{path}: expected {8 * value_count} payload bytes, found {len(raw) - off}"
        )
    flat = np.frombuffer(raw[off:], dtype="<f8").astype(np.float64)

    dims = [n**3] + [n**5] * depth + [n**3]
    cursor = 0

    def take(shape) -> np.ndarray:
        nonlocal cursor
        size = int(np.prod(shape))
        chunk = flat[cursor : cursor + size].reshape(shape)
        cursor += size
        return chunk.copy()

    weights, biases = [], []
    for a, b in zip(dims[:-1], dims[1:]):
        weights.append(take((a, b)))
        biases.append(take((b,)))
    bn_gamma, bn_beta, bn_mean, bn_var = [], [], [], []
    for d in dims[1:-1]:
        bn_gamma.append(take((d,)))
        bn_beta.append(take((d,)))
        bn_mean.append(take((d,)))
        bn_var.append(take((d,)))
    if cursor != value_count:
        raise CheckpointError(f"{path}: payload does not match declared dimensions")
    return ModelParams(n, depth, weights, biases, bn_gamma, bn_beta, bn_mean, bn_var, seed)


def checkpoint_id(path) -> str:
    """Content hash of a checkpoint file."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
