"""Training loop with per-batch masking, Adam updates, and early stopping.

Training tables are stored clean; every batch draws a fresh random mask per
table, encodes the masked table as a probability cube, and feeds it through
the network. Validation uses the bundle's fixed masks. Early stopping watches
the validation loss; the parameters from the best validation epoch are
returned.
"""
from __future__ import annotations

import math
import sys
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .algebra import (
    CayleyTable,
    PartialTable,
    one_hot_rows,
    partial_cube_rows,
)
from .dataset import DatasetBundle
from .network import ModelParams, forward_pass, init_network
from .objective import MetricsReport, al_loss, associative_rate, guess_rate, kl_loss

LOSS_NAMES = ("kl", "al")


@dataclass(frozen=True)
class TrainSeeds:
    init: int = 0
    mask: int = 1
    shuffle: int = 2

    @classmethod
    def from_master(cls, seed: int) -> "TrainSeeds":
        states = np.random.SeedSequence(seed).spawn(3)
        return cls(*(int(s.generate_state(1)[0]) for s in states))


@dataclass(frozen=True)
class TrainConfig:
    loss_name: str = "al"
    learning_rate: float = 1e-4
    max_epochs: int = 1000
    patience: int = 10
    batch_size: int = 256
    mask_fraction: float = 0.5
    depth: int = 2
    seeds: TrainSeeds = field(default_factory=TrainSeeds)

    def __post_init__(self):
        if self.loss_name not in LOSS_NAMES:
            raise ValueError(f"loss_name must be one of {LOSS_NAMES}, got {self.loss_name!r}")
        for name in ("learning_rate", "max_epochs", "patience", "batch_size", "depth"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.mask_fraction <= 1.0:
            raise ValueError("mask_fraction must be in [0, 1]")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: Optional[float]
    val_loss: float
    seconds: float


@dataclass
class TrainHistory:
    epochs: list[EpochRecord] = field(default_factory=list)
    stopping_reason: str = ""
    best_epoch: int = 0

    def best_val_loss(self) -> float:
        return min(rec.val_loss for rec in self.epochs)

    def to_json_lines(self) -> str:
        import json

        lines = [
            json.dumps(
                {
                    "epoch": rec.epoch,
                    "train_loss": rec.train_loss,
                    "val_loss": rec.val_loss,
                    "seconds": rec.seconds,
                },
                sort_keys=True,
            )
            for rec in self.epochs
        ]
        lines.append(
            json.dumps(
                {"stopping_reason": self.stopping_reason, "best_epoch": self.best_epoch},
                sort_keys=True,
            )
        )
        return "\n".join(lines) + "\n"


def _batch_loss(tape, cfg: TrainConfig, output: ad.Tensor, target: np.ndarray, n: int) -> ad.Tensor:
    if cfg.loss_name == "kl":
        return kl_loss(tape, ad.Tensor(target), output)
    return al_loss(tape, output, n)


def _masked_inputs(onehot: np.ndarray, mask_cells: np.ndarray, n: int):
    """Replace masked (i,j) groups of one-hot rows with uniform 1/n groups.

    mask_cells is (B, m) flat cell indices to erase; returns the input rows
    and the (B, n, n) known-cell grids.
    """
    b = onehot.shape[0]
    known = np.ones((b, n * n), dtype=bool)
    if mask_cells.size:
        known[np.arange(b)[:, None], mask_cells] = False
    cubes = onehot.reshape(b, n * n, n).copy()
    cubes[~known] = 1.0 / n
    return cubes.reshape(b, n**3), known.reshape(b, n, n)


def _validation_arrays(pairs: Sequence[tuple[PartialTable, CayleyTable]], n: int):
    part_cells = np.stack([p.cells for p, _ in pairs])
    orig_cells = np.stack([t.cells for _, t in pairs])
    return (
        partial_cube_rows(part_cells),
        part_cells >= 0,
        one_hot_rows(orig_cells),
    )


def _dataset_loss(params, cfg, cubes, known, targets, batch_size) -> float:
    """Mean loss over a fixed dataset in eval mode."""
    total = 0.0
    count = 0
    for start in range(0, cubes.shape[0], batch_size):
        sl = slice(start, start + batch_size)
        out = forward_pass(params, cubes[sl], known[sl], mode="eval")
        loss = _batch_loss(None, cfg, out, targets[sl], params.n)
        rows = cubes[sl].shape[0]
        total += float(loss.data) * rows
        count += rows
    return total / count


def train(
    cfg: TrainConfig, bundle: DatasetBundle, verbose: bool = False
) -> tuple[ModelParams, TrainHistory]:
    """Train on the bundle; returns the best-validation-epoch parameters and history.

    Batches whose size would fall below 2 (batch norm needs at least 2 rows)
    are dropped. Identical configs and bundles reproduce identical results.
    """
    if not bundle.train:
        raise ValueError("training set is empty")
    if len(bundle.train) < 2:
        raise ValueError("training set must contain at least 2 tables")
    if not bundle.validation:
        raise ValueError("validation set is empty")
    n = bundle.n
    nn = n * n
    params = init_network(n, cfg.depth, cfg.seeds.init)
    trainable = params.trainable()
    opt = ad.AdamState.for_params(trainable, learning_rate=cfg.learning_rate)
    shuffle_rng = np.random.Generator(np.random.PCG64(cfg.seeds.shuffle))
    mask_rng = np.random.Generator(np.random.PCG64(cfg.seeds.mask))

    train_onehot = one_hot_rows(np.stack([t.cells for t in bundle.train]))
    val_cubes, val_known, val_targets = _validation_arrays(bundle.validation, n)
    cells_to_mask = math.floor(cfg.mask_fraction * nn)

    history = TrainHistory()
    start = time.perf_counter()
    val_loss = _dataset_loss(params, cfg, val_cubes, val_known, val_targets, cfg.batch_size)
    history.epochs.append(EpochRecord(0, None, val_loss, time.perf_counter() - start))
    if verbose:
        print(f"epoch 0 (untrained): val_loss={val_loss:.6f}", file=sys.stderr)

    best_val = val_loss
    best_epoch = 0
    best_params = params.copy()
    stale = 0
    stopping_reason = "max-epochs"

    num_rows = train_onehot.shape[0]
    for epoch in range(1, cfg.max_epochs + 1):
        tick = time.perf_counter()
        order = shuffle_rng.permutation(num_rows)
        loss_sum = 0.0
        loss_rows = 0
        for lo in range(0, num_rows, cfg.batch_size):
            rows = order[lo : lo + cfg.batch_size]
            if rows.size < 2:
                continue
            mask_cells = np.stack(
                [mask_rng.choice(nn, size=cells_to_mask, replace=False) for _ in rows]
            ) if cells_to_mask else np.empty((rows.size, 0), dtype=np.int64)
            inputs, known = _masked_inputs(train_onehot[rows], mask_cells, n)
            tape = ad.Tape()
            out = forward_pass(params, inputs, known, mode="train", tape=tape)
            loss = _batch_loss(tape, cfg, out, train_onehot[rows], n)
            value = float(loss.data)
            if not np.isfinite(value):
                raise RuntimeError(
                    f"non-finite training loss {value} at epoch {epoch}, batch offset {lo}"
                )
            grads = ad.backward(tape, loss, trainable)
            ad.adam_step(trainable, grads, opt)
            loss_sum += value * rows.size
            loss_rows += rows.size
        train_loss = loss_sum / max(loss_rows, 1)
        val_loss = _dataset_loss(params, cfg, val_cubes, val_known, val_targets, cfg.batch_size)
        if not np.isfinite(val_loss):
            raise RuntimeError(f"non-finite validation loss at epoch {epoch}")
        history.epochs.append(
            EpochRecord(epoch, train_loss, val_loss, time.perf_counter() - tick)
        )
        if verbose:
            print(
                f"epoch {epoch}: train_loss={train_loss:.6f} val_loss={val_loss:.6f}",
                file=sys.stderr,
            )
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = params.copy()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                stopping_reason = "early-stop"
                break

    history.stopping_reason = stopping_reason
    history.best_epoch = best_epoch
    return best_params, history


# ---------------------------------------------------------------------------
# held-out evaluation


def predict_cubes(
    params: ModelParams, partials: Sequence[PartialTable], batch_size: int = 512
) -> np.ndarray:
    """Eval-mode outputs for a list of partial tables, as (N, n**3) rows."""
    for p in partials:
        if p.n != params.n:
            raise ValueError(f"partial with n={p.n} fed to an n={params.n} model")
    cells = np.stack([p.cells for p in partials])
    cubes = partial_cube_rows(cells)
    known = cells >= 0
    chunks = []
    for lo in range(0, cubes.shape[0], batch_size):
        sl = slice(lo, lo + batch_size)
        chunks.append(forward_pass(params, cubes[sl], known[sl], mode="eval").data)
    return np.concatenate(chunks, axis=0)


def rounded_tables(outputs: np.ndarray, n: int) -> list[CayleyTable]:
    """Argmax-round each output row to a table; ties break to the smallest index."""
    cells = outputs.reshape(-1, n * n, n).argmax(axis=2).reshape(-1, n, n)
    return [CayleyTable(c) for c in cells]


def evaluate(
    params: ModelParams,
    pairs: Sequence[tuple[PartialTable, CayleyTable]],
    loss_name: str = "",
    checkpoint_id: str = "",
    mask_fraction: Optional[float] = None,
    seed: int = 0,
    batch_size: int = 512,
) -> MetricsReport:
    """Guess rate and associative rate of the rounded model outputs on (partial, original) pairs."""
    if not pairs:
        raise ValueError("no pairs to evaluate")
    for part, orig in pairs:
        if part.n != params.n or orig.n != params.n:
            raise ValueError("pair cardinality does not match the model")
    outputs = predict_cubes(params, [p for p, _ in pairs], batch_size=batch_size)
    tables = rounded_tables(outputs, params.n)
    originals = [orig for _, orig in pairs]
    if mask_fraction is None:
        unknown = sum(int((p.cells < 0).sum()) for p, _ in pairs)
        mask_fraction = unknown / (len(pairs) * params.n**2)
    return MetricsReport(
        guess_rate=guess_rate(tables, originals),
        associative_rate=associative_rate(tables),
        n_tables=len(pairs),
        loss_name=loss_name,
        checkpoint_id=checkpoint_id,
        mask_fraction=mask_fraction,
        seed=seed,
    )
