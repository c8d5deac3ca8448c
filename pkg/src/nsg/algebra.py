"""Cayley tables, partial tables, probability cubes, and the maps between them.

Elements are 0-based everywhere in code; the text file format is 1-based with
``0`` marking an unknown cell, so a file cell ``v`` maps to element ``v - 1``.
A probability cube stores P(e_i * e_j = e_k) flattened lexicographically, so
the flat index of (i, j, k) is ``i*n**2 + j*n + k``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

UNKNOWN = -1

SUM_TOL = 1e-9  # tolerance for per-(i,j) probability sums in stored cubes


class TableFormatError(ValueError):
    """A table file that cannot be parsed or violates the declared cardinality."""


def _as_cells(cells, n_expected=None) -> np.ndarray:
    arr = np.ascontiguousarray(cells, dtype=np.int8)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"cells must be a square grid, got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise ValueError("cardinality must be positive")
    if n_expected is not None and arr.shape[0] != n_expected:
        raise ValueError(f"expected an {n_expected}x{n_expected} grid, got {arr.shape}")
    return arr


class CayleyTable:
    """A total binary operation on {0..n-1}: cell (i, j) holds the index of e_i * e_j."""

    __slots__ = ("cells",)

    def __init__(self, cells):
        arr = _as_cells(cells)
        n = arr.shape[0]
        if arr.min() < 0 or arr.max() >= n:
            raise ValueError(f"cell values must lie in 0..{n - 1}")
        arr.setflags(write=False)
        object.__setattr__(self, "cells", arr)

    @property
    def n(self) -> int:
        return self.cells.shape[0]

    def flat(self) -> np.ndarray:
        """Row-major flattening of the grid."""
        return self.cells.reshape(-1)

    def __setattr__(self, name, value):
        raise AttributeError("CayleyTable is immutable")

    def __eq__(self, other):
        return (
            isinstance(other, CayleyTable)
            and self.n == other.n
            and self.cells.tobytes() == other.cells.tobytes()
        )

    def __hash__(self):
        return hash((self.n, self.cells.tobytes()))

    def __repr__(self):
        rows = ",".join("".join(str(v + 1) for v in row) for row in self.cells)
        return f"CayleyTable(n={self.n}, rows={rows})"


class PartialTable:
    """An n x n grid whose cells are either a known element index or unknown."""

    __slots__ = ("cells",)

    def __init__(self, cells):
        arr = _as_cells(cells)
        n = arr.shape[0]
        if arr.min() < UNKNOWN or arr.max() >= n:
            raise ValueError(f"cell values must lie in 0..{n - 1} or be UNKNOWN")
        arr.setflags(write=False)
        object.__setattr__(self, "cells", arr)

    @classmethod
    def fully_unknown(cls, n: int) -> "PartialTable":
        return cls(np.full((n, n), UNKNOWN, dtype=np.int8))

    @property
    def n(self) -> int:
        return self.cells.shape[0]

    def known_mask(self) -> np.ndarray:
        """Boolean grid marking filled cells."""
        return self.cells >= 0

    def __setattr__(self, name, value):
        raise AttributeError("PartialTable is immutable")

    def __eq__(self, other):
        return (
            isinstance(other, PartialTable)
            and self.n == other.n
            and self.cells.tobytes() == other.cells.tobytes()
        )

    def __hash__(self):
        return hash(("partial", self.n, self.cells.tobytes()))

    def __repr__(self):
        rows = ",".join("".join("?" if v < 0 else str(v + 1) for v in row) for row in self.cells)
        return f"PartialTable(n={self.n}, rows={rows})"


class ProbabilityCube:
    """P(e_i * e_j = e_k) as a flat float64 array of length n**3.

    Every (i, j) group of n consecutive entries must sum to 1 within SUM_TOL.
    """

    __slots__ = ("n", "values")

    def __init__(self, n: int, values):
        vals = np.ascontiguousarray(values, dtype=np.float64).reshape(-1)
        if n < 1:
            raise ValueError("cardinality must be positive")
        if vals.size != n**3:
            raise ValueError(f"expected {n**3} values for n={n}, got {vals.size}")
        if vals.min() < 0.0 or vals.max() > 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        sums = vals.reshape(n * n, n).sum(axis=1)
        if np.max(np.abs(sums - 1.0)) > SUM_TOL:
            raise ValueError("each (i, j) group must sum to 1")
        vals.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "values", vals)

    def as_grid(self) -> np.ndarray:
        """View as an (n, n, n) array indexed by (i, j, k)."""
        return self.values.reshape(self.n, self.n, self.n)

    def __setattr__(self, name, value):
        raise AttributeError("ProbabilityCube is immutable")

    def __eq__(self, other):
        return (
            isinstance(other, ProbabilityCube)
            and self.n == other.n
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        return f"ProbabilityCube(n={self.n})"


@dataclass(frozen=True)
class Permutation:
    """A bijection on {0..n-1} stored as an index array: i -> map[i]."""

    map: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.map, dtype=np.int64)
        n = arr.size
        if not np.array_equal(np.sort(arr), np.arange(n)):
            raise ValueError("map is not a bijection on 0..n-1")
        arr.setflags(write=False)
        object.__setattr__(self, "map", arr)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(np.arange(n))

    @property
    def n(self) -> int:
        return self.map.size

    def inverse(self) -> np.ndarray:
        inv = np.empty(self.n, dtype=np.int64)
        inv[self.map] = np.arange(self.n)
        return inv


# ---------------------------------------------------------------------------
# operations on tables


def is_associative(t: CayleyTable) -> bool:
    """True iff (a*b)*c == a*(b*c) for all triples."""
    c = t.cells.astype(np.int64)
    left = c[c, :]      # left[a,b,z] = (a*b)*z
    right = c[:, c]     # right[a,b,z] = a*(b*z)
    return bool(np.array_equal(left, right))


def opposite(t: CayleyTable) -> CayleyTable:
    """The reversed multiplication: a *op b = b * a."""
    return CayleyTable(t.cells.T)


def relabel(t: CayleyTable, p: Permutation) -> CayleyTable:
    """Transport the operation along p: result(p(i), p(j)) = p(t(i, j))."""
    if p.n != t.n:
        raise ValueError(f"permutation on {p.n} elements cannot relabel an n={t.n} table")
    inv = p.inverse()
    return CayleyTable(p.map[t.cells[np.ix_(inv, inv)]])


@lru_cache(maxsize=8)
def _perm_block(n: int) -> tuple[np.ndarray, np.ndarray]:
    """All n! permutations (lexicographic) and their inverses, as (P, n) index arrays."""
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    invs = np.empty_like(perms)
    rng = np.arange(n)
    for q in range(perms.shape[0]):
        invs[q, perms[q]] = rng
    return perms, invs


def orbit_candidates(cells: np.ndarray) -> np.ndarray:
    """All relabelings of the table and of its opposite: a (2*n!, n, n) stack.

    Contains duplicates whenever the table has symmetries; callers dedupe.
    """
    n = cells.shape[0]
    perms, invs = _perm_block(n)
    npms = perms.shape[0]
    out = np.empty((2 * npms, n, n), dtype=np.int8)
    for half, base in enumerate((cells, cells.T)):
        sub = np.asarray(base)[invs[:, :, None], invs[:, None, :]]
        out[half * npms:(half + 1) * npms] = perms[np.arange(npms)[:, None, None], sub]
    return out


def canonical_form(t: CayleyTable) -> CayleyTable:
    """Lexicographically smallest table in the isomorphism/anti-isomorphism orbit."""
    flat = orbit_candidates(t.cells).reshape(-1, t.n * t.n)
    best = min(row.tobytes() for row in flat)
    return CayleyTable(np.frombuffer(best, dtype=np.int8).reshape(t.n, t.n))


# ---------------------------------------------------------------------------
# conversions between tables and cubes


def table_to_cube(t: CayleyTable) -> ProbabilityCube:
    """One-hot encode: cube(i,j,k) = 1 iff t(i,j) = k."""
    return ProbabilityCube(t.n, one_hot_rows(t.cells[None, :, :])[0])


def one_hot_rows(cells: np.ndarray) -> np.ndarray:
    """One-hot encode a (B, n, n) stack of tables into (B, n**3) float64 rows."""
    b, n, _ = cells.shape
    out = np.zeros((b, n * n, n), dtype=np.float64)
    grid = np.ascontiguousarray(cells, dtype=np.int64).reshape(b, n * n)
    np.put_along_axis(out, grid[:, :, None], 1.0, axis=2)
    return out.reshape(b, n**3)


def partial_cube_rows(cells: np.ndarray) -> np.ndarray:
    """Encode a (B, n, n) stack of partial grids (UNKNOWN = -1) into (B, n**3) rows.

    Known cells become one-hot groups, unknown cells uniform 1/n groups,
    matching partial_to_cube row by row.
    """
    b, n, _ = cells.shape
    flat = np.ascontiguousarray(cells, dtype=np.int64).reshape(b, n * n)
    out = np.full((b, n * n, n), 1.0 / n, dtype=np.float64)
    rows, cols = np.nonzero(flat >= 0)
    out[rows, cols, :] = 0.0
    out[rows, cols, flat[rows, cols]] = 1.0
    return out.reshape(b, n**3)


def cube_to_table(c: ProbabilityCube) -> CayleyTable:
    """Round each (i, j) group to its argmax; ties break to the smallest k."""
    cells = np.argmax(c.values.reshape(c.n * c.n, c.n), axis=1)
    return CayleyTable(cells.reshape(c.n, c.n))


def partial_to_cube(p: PartialTable) -> ProbabilityCube:
    """Known cells become one-hot groups; unknown cells get the uniform 1/n group."""
    n = p.n
    vals = np.full((n * n, n), 1.0 / n, dtype=np.float64)
    flat = p.cells.reshape(-1)
    known = flat >= 0
    vals[known] = 0.0
    vals[known, flat[known]] = 1.0
    return ProbabilityCube(n, vals)


def associator_residual(c: ProbabilityCube, i: int, j: int, k: int, l: int) -> float:
    """sum_m c(i,j,m)*c(m,k,l) - c(i,m,l)*c(j,k,m); zero on associative one-hot cubes."""
    n = c.n
    for name, idx in (("i", i), ("j", j), ("k", k), ("l", l)):
        if not 0 <= idx < n:
            raise IndexError(f"index {name}={idx} out of range 0..{n - 1}")
    g = c.as_grid()
    left = float(np.dot(g[i, j, :], g[:, k, l]))
    right = float(np.dot(g[i, :, l], g[j, k, :]))
    return left - right


# ---------------------------------------------------------------------------
# table text format: first line "n=<cardinality>", then one table per line of
# n*n space-separated 1-based integers; 0 marks an unknown cell.


def format_table_line(cells: np.ndarray) -> str:
    return " ".join(str(int(v) + 1) for v in np.asarray(cells).reshape(-1))


def save_tables(path, n: int, tables: Iterable[CayleyTable | PartialTable]) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"n={n}\n")
        for t in tables:
            if t.n != n:
                raise ValueError(f"table with n={t.n} in a file declared n={n}")
            fh.write(format_table_line(t.cells) + "\n")


def _parse_header(line: str, path) -> int:
    if not line.startswith("n="):
        raise TableFormatError(f"{path}: first line must be 'n=<cardinality>', got {line!r}")
    try:
        n = int(line[2:])
    except ValueError:
        raise TableFormatError(f"{path}: bad cardinality in header {line!r}") from None
    if n < 1:
        raise TableFormatError(f"{path}: cardinality must be positive")
    return n


def load_tables(path, partial: bool = False):
    """Read a table file; returns (n, tables).

    With partial=True, 0-cells are allowed and PartialTable objects are returned.
    """
    tables: list = []
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().rstrip("\n")
        n = _parse_header(header, path)
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            toks = line.split()
            if len(toks) != n * n:
                raise TableFormatError(f"{path}:{lineno}: expected {n * n} cells, got {len(toks)}")
            try:
                vals = [int(tk) for tk in toks]
            except ValueError:
                raise TableFormatError(f"{path}:{lineno}: non-integer cell") from None
            lo = 0 if partial else 1
            if any(v < lo or v > n for v in vals):
                raise TableFormatError(f"{path}:{lineno}: cell value out of range for n={n}")
            grid = np.asarray(vals, dtype=np.int8).reshape(n, n) - 1
            tables.append(PartialTable(grid) if partial else CayleyTable(grid))
    return n, tables
