"""Linear minimization oracles over the relaxed mask polytopes.

For a per-group budget ``b`` the polytope ``{M in [0,1]^n : sum(M) <= b}``
has the binary vectors with at most ``b`` ones as vertices, so minimizing
``<V, grad>`` means switching on the (up to) ``b`` most negative gradient
entries.  Per-row and n:m polytopes are Cartesian products of such pieces and
the oracle is applied group by group.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (NM, BinaryMask, BudgetError, PerRow, ShapeError,
                   SparsityPattern, Unstructured, as_matrix)


@dataclass(frozen=True)
class LmoRequest:
    grad: np.ndarray
    pattern: SparsityPattern
    frozen: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "grad", as_matrix(self.grad, "grad"))
        if self.frozen is not None:
            fr = np.asarray(self.frozen.values if isinstance(self.frozen, BinaryMask)
                            else self.frozen).astype(bool)
            if fr.shape != self.grad.shape:
                raise ShapeError(f"frozen mask {fr.shape} does not match grad {self.grad.shape}")
            object.__setattr__(self, "frozen", fr)


def _grouped_lmo(grad: np.ndarray, pattern: SparsityPattern, kb: int,
                 frozen: np.ndarray | None) -> np.ndarray:
    g = np.array(grad, dtype=np.float64)
    if frozen is not None:
        g[frozen] = np.inf
    groups = pattern.groups(g)
    if frozen is not None:
        free = pattern.groups(~frozen).sum(axis=1)
        if kb > free.min(initial=kb):
            raise BudgetError(f"budget {kb} exceeds the {free.min()} non-frozen "
                              f"coordinates of some group")
    elif kb > groups.shape[1]:
        raise BudgetError(f"budget {kb} exceeds group size {groups.shape[1]}")
    out = np.zeros(groups.shape)
    if kb > 0:
        # stable sort: equal gradients resolve to the lowest flat index
        idx = np.argsort(groups, axis=1, kind="stable")[:, :kb]
        vals = np.take_along_axis(groups, idx, axis=1)
        np.put_along_axis(out, idx, (vals < 0).astype(np.float64), axis=1)
    return out.reshape(grad.shape)


def lmo_unstructured(req: LmoRequest, k: int) -> BinaryMask:
    pattern = Unstructured(k)
    return BinaryMask(_grouped_lmo(req.grad, pattern, k, req.frozen), pattern)


def lmo_per_row(req: LmoRequest, k_row: int) -> BinaryMask:
    pattern = PerRow(k_row)
    return BinaryMask(_grouped_lmo(req.grad, pattern, k_row, req.frozen), pattern)


def lmo_nm(req: LmoRequest, n: int, m: int) -> BinaryMask:
    pattern = NM(n, m)
    pattern.check(req.grad.shape)
    return BinaryMask(_grouped_lmo(req.grad, pattern, m, req.frozen), pattern)


def lmo(req: LmoRequest, budget: int | None = None) -> BinaryMask:
    """Dispatch on ``req.pattern``; ``budget`` overrides the per-group budget."""
    p = req.pattern
    if isinstance(p, Unstructured):
        return lmo_unstructured(req, p.k if budget is None else budget)
    if isinstance(p, PerRow):
        return lmo_per_row(req, p.k_row if budget is None else budget)
    return lmo_nm(req, p.n, p.m if budget is None else budget)


def lmo_values(grad: np.ndarray, pattern: SparsityPattern, kb: int,
               frozen: np.ndarray | None = None) -> np.ndarray:
    """Raw-array oracle used inside the solver loop (no wrapper validation)."""
    return _grouped_lmo(grad, pattern, kb, frozen)
