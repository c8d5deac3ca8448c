"""Dataset construction: class-level splits, orbit augmentation, masking, persistence.

Splitting happens at the level of equivalence classes so that no table in the
test set is isomorphic or anti-isomorphic to anything seen in training. The
validation and test sets carry one fixed mask per table, drawn once at build
time; training tables are stored clean and masked freshly per batch by the
trainer.

Directory layout: train.tbl, valid.tbl, valid_mask.tbl, test.tbl,
test_mask.tbl (table text format, 0 = unknown in mask files) plus meta.json
with the build parameters, counts, and per-file checksums.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .algebra import CayleyTable, PartialTable, UNKNOWN, load_tables, save_tables
from .enumeration import orbit

TABLE_FILES = ("train.tbl", "valid.tbl", "valid_mask.tbl", "test.tbl", "test_mask.tbl")


class DatasetError(ValueError):
    """Malformed, inconsistent, or corrupted dataset directory."""


@dataclass(frozen=True)
class SplitConfig:
    ratios: tuple[float, float, float]
    seed: int

    def __post_init__(self):
        if len(self.ratios) != 3 or any(r < 0 for r in self.ratios):
            raise ValueError("ratios must be three non-negative reals")
        if abs(sum(self.ratios) - 1.0) > 1e-12:
            raise ValueError(f"ratios must sum to 1, got {sum(self.ratios)}")


@dataclass(frozen=True)
class NoiseConfig:
    mask_fraction: float
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.mask_fraction <= 1.0:
            raise ValueError(f"mask_fraction must be in [0, 1], got {self.mask_fraction}")


@dataclass
class DatasetBundle:
    n: int
    train: list[CayleyTable]
    validation: list[tuple[PartialTable, CayleyTable]]
    test: list[tuple[PartialTable, CayleyTable]]
    seed: int
    ratios: tuple[float, float, float]
    mask_fraction: float

    def __eq__(self, other):
        if not isinstance(other, DatasetBundle):
            return NotImplemented
        return (
            self.n == other.n
            and self.train == other.train
            and self.validation == other.validation
            and self.test == other.test
            and self.seed == other.seed
            and tuple(self.ratios) == tuple(other.ratios)
            and self.mask_fraction == other.mask_fraction
        )


def split_classes(
    classes: Sequence[CayleyTable], cfg: SplitConfig
) -> tuple[list[CayleyTable], list[CayleyTable], list[CayleyTable]]:
    """Seeded shuffle, then floor-allocated counts per ratio; the remainder goes to test."""
    if not classes:
        raise ValueError("empty class list")
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    order = rng.permutation(len(classes))
    n_train = math.floor(cfg.ratios[0] * len(classes))
    n_valid = math.floor(cfg.ratios[1] * len(classes))
    shuffled = [classes[i] for i in order]
    return (
        shuffled[:n_train],
        shuffled[n_train : n_train + n_valid],
        shuffled[n_train + n_valid :],
    )


def augment(classes: Sequence[CayleyTable]) -> list[CayleyTable]:
    """Concatenated orbits of the given representatives, each orbit sorted, deduplicated."""
    out: list[CayleyTable] = []
    seen: set[CayleyTable] = set()
    for rep in classes:
        for member in sorted(orbit(rep), key=lambda t: t.cells.tobytes()):
            if member not in seen:
                seen.add(member)
                out.append(member)
    return out


def mask_random(
    t: CayleyTable, cfg: NoiseConfig, rng: np.random.Generator | None = None
) -> PartialTable:
    """Erase floor(mask_fraction * n**2) distinct cells chosen uniformly."""
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(cfg.seed))
    n = t.n
    m = math.floor(cfg.mask_fraction * n * n)
    cells = t.cells.astype(np.int8).copy()
    if m > 0:
        chosen = rng.choice(n * n, size=m, replace=False)
        cells.reshape(-1)[chosen] = UNKNOWN
    return PartialTable(cells)


def build_bundle(
    n: int,
    classes: Sequence[CayleyTable],
    ratios: tuple[float, float, float],
    mask_fraction: float,
    seed: int,
) -> DatasetBundle:
    """Split classes, augment each split by its orbits, mask validation and test."""
    seqs = np.random.SeedSequence(seed).spawn(3)
    split_seed = int(seqs[0].generate_state(1)[0])
    train_classes, valid_classes, test_classes = split_classes(
        classes, SplitConfig(ratios=tuple(ratios), seed=split_seed)
    )
    noise = NoiseConfig(mask_fraction=mask_fraction, seed=seed)

    def masked_pairs(tables, seq):
        rng = np.random.Generator(np.random.PCG64(seq))
        return [(mask_random(t, noise, rng), t) for t in tables]

    return DatasetBundle(
        n=n,
        train=augment(train_classes),
        validation=masked_pairs(augment(valid_classes), seqs[1]),
        test=masked_pairs(augment(test_classes), seqs[2]),
        seed=seed,
        ratios=tuple(ratios),
        mask_fraction=mask_fraction,
    )


# ---------------------------------------------------------------------------
# persistence


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def save_bundle(bundle: DatasetBundle, path) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    save_tables(root / "train.tbl", bundle.n, bundle.train)
    save_tables(root / "valid.tbl", bundle.n, [orig for _, orig in bundle.validation])
    save_tables(root / "valid_mask.tbl", bundle.n, [part for part, _ in bundle.validation])
    save_tables(root / "test.tbl", bundle.n, [orig for _, orig in bundle.test])
    save_tables(root / "test_mask.tbl", bundle.n, [part for part, _ in bundle.test])
    meta = {
        "n": bundle.n,
        "seed": bundle.seed,
        "ratios": list(bundle.ratios),
        "mask_fraction": bundle.mask_fraction,
        "mask_policy": "one-mask-per-table",
        "counts": {
            "train": len(bundle.train),
            "validation": len(bundle.validation),
            "test": len(bundle.test),
        },
        "checksums": {name: _sha256(root / name) for name in TABLE_FILES},
    }
    with open(root / "meta.json", "w", encoding="ascii") as fh:
        json.dump(meta, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_bundle(path) -> DatasetBundle:
    root = Path(path)
    try:
        with open(root / "meta.json", "r", encoding="ascii") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        raise DatasetError(f"{root}: missing meta.json") from None
    except ValueError as exc:
        raise DatasetError(f"{root}: unreadable meta.json: {exc}") from None
    for name in TABLE_FILES:
        if not (root / name).exists():
            raise DatasetError(f"{root}: missing {name}")
        digest = _sha256(root / name)
        if digest != meta["checksums"].get(name):
            raise DatasetError(f"{root}/{name}: checksum failure")
    n = meta["n"]

    def read(name, partial=False):
        file_n, tables = load_tables(root / name, partial=partial)
        if file_n != n:
            raise DatasetError(f"{root}/{name}: cardinality {file_n} does not match meta n={n}")
        return tables

    train = read("train.tbl")
    valid_masks = read("valid_mask.tbl", partial=True)
    valid_origs = read("valid.tbl")
    test_masks = read("test_mask.tbl", partial=True)
    test_origs = read("test.tbl")
    counts = meta["counts"]
    actual = (len(train), len(valid_origs), len(test_origs))
    declared = (counts["train"], counts["validation"], counts["test"])
    if actual != declared or len(valid_masks) != len(valid_origs) or len(test_masks) != len(test_origs):
        raise DatasetError(f"{root}: table counts {actual} do not match meta.json {declared}")
    valid = list(zip(valid_masks, valid_origs))
    test = list(zip(test_masks, test_origs))
    return DatasetBundle(
        n=n,
        train=train,
        validation=valid,
        test=test,
        seed=meta["seed"],
        ratios=tuple(meta["ratios"]),
        mask_fraction=meta["mask_fraction"],
    )


def dataset_fingerprint(path) -> str:
    """Stable content hash of a dataset directory, for report provenance."""
    root = Path(path)
    h = hashlib.sha256()
    for name in TABLE_FILES + ("meta.json",):
        h.update(name.encode())
        h.update(_sha256(root / name).encode())
    return h.hexdigest()
