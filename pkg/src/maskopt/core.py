"""Domain types, sparsity patterns, Gram precomputation and synthetic layers.

Matrices are plain ``numpy.ndarray`` objects of dtype float64 in C
(row-major) order.  The wrappers below (:class:`MaskState`,
:class:`BinaryMask`, :class:`GramCache`) freeze their arrays on
construction so they can be shared between threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np


class MaskoptError(Exception):
    """Base class for all library errors."""


class ShapeError(MaskoptError, ValueError):
    pass


class BudgetError(MaskoptError, ValueError):
    pass


class PatternError(MaskoptError, ValueError):
    pass


class CapacityError(MaskoptError, ValueError):
    pass


class FormatError(MaskoptError):
    pass


class NumericalError(MaskoptError, ArithmeticError):
    pass


MASK_TOL = 1e-12
BUDGET_TOL = 1e-9


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a C-contiguous 2-D float64 array with finite entries."""
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{name} contains non-finite values")
    return arr


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, order="C", copy=True)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# Sparsity patterns
# ---------------------------------------------------------------------------
#
# Every pattern partitions the mask into equally sized groups of coordinates
# with a common per-group budget: one group for Unstructured, one per row for
# PerRow, one per (row, block) for NM.  ``groups(a)`` returns a 2-D view of
# shape (n_groups, group_size) whose rows enumerate coordinates in increasing
# flat index, so "lowest index within a group" is "lowest flat index".


@dataclass(frozen=True)
class Unstructured:
    k: int

    def check(self, shape: tuple[int, int]) -> None:
        total = shape[0] * shape[1]
        if not 0 <= self.k <= total:
            raise BudgetError(f"unstructured budget k={self.k} outside [0, {total}]")

    def group_budget(self, shape: tuple[int, int]) -> int:
        return self.k

    def groups(self, a: np.ndarray) -> np.ndarray:
        return a.reshape(1, -1)

    def budget(self, shape: tuple[int, int]) -> int:
        return self.k

    def __str__(self) -> str:
        return f"u:{self.k}"


@dataclass(frozen=True)
class PerRow:
    k_row: int

    def check(self, shape: tuple[int, int]) -> None:
        if not 0 <= self.k_row <= shape[1]:
            raise BudgetError(f"per-row budget {self.k_row} outside [0, {shape[1]}]")

    def group_budget(self, shape: tuple[int, int]) -> int:
        return self.k_row

    def groups(self, a: np.ndarray) -> np.ndarray:
        return a.reshape(a.shape[0], -1)

    def budget(self, shape: tuple[int, int]) -> int:
        return shape[0] * self.k_row

    def __str__(self) -> str:
        return f"row:{self.k_row}"


@dataclass(frozen=True)
class NM:
    """Keep at most ``m`` entries in each block of ``n`` consecutive columns."""

    n: int
    m: int

    def __post_init__(self):
        if not 0 < self.m <= self.n:
            raise PatternError(f"n:m pattern needs 0 < m <= n, got n={self.n}, m={self.m}")

    def check(self, shape: tuple[int, int]) -> None:
        if shape[1] % self.n != 0:
            raise PatternError(f"d_in={shape[1]} is not divisible by block size n={self.n}")

    def group_budget(self, shape: tuple[int, int]) -> int:
        return self.m

    def groups(self, a: np.ndarray) -> np.ndarray:
        return a.reshape(-1, self.n)

    def budget(self, shape: tuple[int, int]) -> int:
        return shape[0] * (shape[1] // self.n) * self.m

    def __str__(self) -> str:
        # "2:4" keeps 2 of every 4
        return f"{self.m}:{self.n}"


SparsityPattern = Union[Unstructured, PerRow, NM]


def group_topk(scores: np.ndarray, pattern: SparsityPattern, kb: int,
               exclude: np.ndarray | None = None) -> np.ndarray:
    """Boolean mask of the ``kb`` largest scores in every pattern group.

    Ties go to the lowest flat index.  Coordinates flagged in ``exclude`` are
    never selected.
    """
    shape = scores.shape
    s = np.array(scores, dtype=np.float64)
    if exclude is not None:
        s[exclude.astype(bool)] = -np.inf
    g = pattern.groups(s)
    if kb > g.shape[1]:
        raise BudgetError(f"group budget {kb} exceeds group size {g.shape[1]}")
    out = np.zeros(g.shape, dtype=bool)
    if kb > 0:
        order = np.argsort(-g, axis=1, kind="stable")[:, :kb]
        np.put_along_axis(out, order, True, axis=1)
        if exclude is not None and np.any(out & pattern.groups(exclude.astype(bool))):
            raise BudgetError(f"group budget {kb} exceeds non-excluded coordinates")
    return out.reshape(shape)


def group_sums(a: np.ndarray, pattern: SparsityPattern) -> np.ndarray:
    return pattern.groups(a).sum(axis=1)


# ---------------------------------------------------------------------------
# Masks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MaskState:
    """Continuous Frank-Wolfe iterate in the relaxed mask polytope."""

    values: np.ndarray
    pattern: SparsityPattern

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        v = self.values
        if v.ndim != 2:
            raise ShapeError(f"mask must be 2-D, got shape {v.shape}")
        self.pattern.check(v.shape)
        if v.size and (v.min() < -MASK_TOL or v.max() > 1 + MASK_TOL):
            raise NumericalError("mask entries outside [0, 1]")
        kb = self.pattern.group_budget(v.shape)
        if v.size and group_sums(v, self.pattern).max() > kb + BUDGET_TOL:
            raise BudgetError(f"mask exceeds group budget {kb}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def mass(self) -> float:
        return float(self.values.sum())


@dataclass(frozen=True)
class BinaryMask:
    """A 0/1 mask that is a vertex of the relaxed polytope for ``pattern``.

    Vertices may hold fewer ones than the budget (LMO outputs do); use
    :meth:`is_exact` for the finalized-mask condition.
    """

    values: np.ndarray
    pattern: SparsityPattern

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        v = self.values
        if v.ndim != 2:
            raise ShapeError(f"mask must be 2-D, got shape {v.shape}")
        self.pattern.check(v.shape)
        if not np.all((v == 0.0) | (v == 1.0)):
            raise NumericalError("binary mask has entries other than 0 and 1")
        kb = self.pattern.group_budget(v.shape)
        if v.size and group_sums(v, self.pattern).max() > kb:
            raise BudgetError(f"binary mask exceeds group budget {kb}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def count(self) -> int:
        return int(self.values.sum())

    def is_exact(self) -> bool:
        return satisfies_pattern(self.values, self.pattern)

    def as_state(self) -> MaskState:
        return MaskState(self.values, self.pattern)


def satisfies_pattern(values: np.ndarray, pattern: SparsityPattern) -> bool:
    """Check the exact finalized-mask condition for ``pattern``.

    Unstructured: exactly ``min(k, size)`` ones; PerRow: exactly ``k_row`` per
    row; NM: at most ``m`` per block.
    """
    v = np.asarray(values)
    if v.ndim != 2 or not np.all((v == 0.0) | (v == 1.0)):
        return False
    try:
        pattern.check(v.shape)
    except MaskoptError:
        return False
    sums = group_sums(v, pattern)
    if isinstance(pattern, Unstructured):
        return int(sums[0]) == min(pattern.k, v.size)
    if isinstance(pattern, PerRow):
        return bool(np.all(sums == pattern.k_row))
    return bool(np.all(sums <= pattern.m))


# ---------------------------------------------------------------------------
# Gram cache
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GramCache:
    G: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "G", _frozen(self.G))
        object.__setattr__(self, "H", _frozen(self.H))
        d = self.G.shape[0]
        if self.G.shape != (d, d) or self.H.ndim != 2 or self.H.shape[1] != d:
            raise ShapeError(f"inconsistent cache shapes G{self.G.shape}, H{self.H.shape}")

    @classmethod
    def from_gram(cls, W, G) -> "GramCache":
        W = as_matrix(W, "W")
        G = as_matrix(G, "G")
        if G.shape != (W.shape[1], W.shape[1]):
            raise ShapeError(f"G{G.shape} does not match W{W.shape}")
        return cls(G, W @ G)


def gram_precompute(X, W, batch_cols: int = 4096) -> GramCache:
    """Accumulate ``G = X X^T`` over column batches (left to right), then ``H = W G``."""
    X = as_matrix(X, "X")
    W = as_matrix(W, "W")
    if batch_cols < 1:
        raise ValueError("batch_cols must be >= 1")
    if X.shape[0] != W.shape[1]:
        raise ShapeError(f"X has {X.shape[0]} rows but W has {W.shape[1]} columns")
    d_in, B = X.shape
    G = np.zeros((d_in, d_in))
    for start in range(0, B, batch_cols):
        Xb = X[:, start:start + batch_cols]
        G += Xb @ Xb.T
    return GramCache(G, W @ G)


# ---------------------------------------------------------------------------
# Synthetic layers
# ---------------------------------------------------------------------------


def generate_synthetic_layer(d_out: int, d_in: int, B: int, seed: int,
                             outlier_cols: int = 0, outlier_scale: float = 1.0
                             ) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``W`` (d_out x d_in) then ``X`` (d_in x B) from N(0, 1).

    The generator is numpy's PCG64 (``numpy.random.default_rng(seed)``); W is
    drawn first, X second, both via ``standard_normal`` in row-major order.
    Rows ``0 .. outlier_cols-1`` of X (the inputs feeding weight columns of
    the same index) are multiplied by ``outlier_scale``.
    """
    if min(d_out, d_in, B) < 1:
        raise ValueError("d_out, d_in and B must be >= 1")
    if not 0 <= outlier_cols <= d_in:
        raise ValueError(f"outlier_cols must lie in [0, {d_in}]")
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((d_out, d_in))
    X = rng.standard_normal((d_in, B))
    X[:outlier_cols] *= outlier_scale
    return W, X
