"""Greedy mask-selection baselines: magnitude, Wanda, RIA and SparseGPT.

All scores are computed from ``W`` and the Gram matrix ``G = X X^T``; the
activation norm of input feature ``j`` is ``sqrt(G_jj)``.
"""

from __future__ import annotations

import numpy as np

from .core import (NM, BinaryMask, BudgetError, NumericalError, PerRow,
                   ShapeError, SparsityPattern, as_matrix, group_topk)


def _check_gram(W: np.ndarray, G) -> np.ndarray:
    G = as_matrix(G, "G")
    if G.shape != (W.shape[1], W.shape[1]):
        raise ShapeError(f"G{G.shape} does not match W{W.shape}")
    return G


def _activation_norms(G: np.ndarray) -> np.ndarray:
    diag = np.diag(G).copy()
    if np.any(diag < -1e-12):
        raise NumericalError("Gram matrix has a negative diagonal entry")
    return np.sqrt(np.clip(diag, 0.0, None))


def magnitude_scores(W) -> np.ndarray:
    return np.abs(as_matrix(W, "W"))


def wanda_scores(W, G) -> np.ndarray:
    W = as_matrix(W, "W")
    G = _check_gram(W, G)
    return np.abs(W) * _activation_norms(G)[None, :]


def _safe_reciprocal(s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s)
    np.divide(1.0, s, out=out, where=s != 0)
    return out


def ria_rescaled(W) -> np.ndarray:
    """``W'_ij = W_ij (1/sum_k |W_ik| + 1/sum_k |W_kj|)``; zero sums contribute 0."""
    W = as_matrix(W, "W")
    A = np.abs(W)
    scale = _safe_reciprocal(A.sum(axis=1))[:, None] + _safe_reciprocal(A.sum(axis=0))[None, :]
    return W * scale


def ria_scores(W, G) -> np.ndarray:
    W = as_matrix(W, "W")
    G = _check_gram(W, G)
    A = np.abs(W)
    rel = _safe_reciprocal(A.sum(axis=1))[:, None] + _safe_reciprocal(A.sum(axis=0))[None, :]
    return A * rel * _activation_norms(G)[None, :]


def saliency_mask(S, pattern: SparsityPattern) -> BinaryMask:
    """Keep the highest-saliency entries of every pattern group."""
    S = as_matrix(S, "saliency")
    pattern.check(S.shape)
    kb = min(pattern.group_budget(S.shape), pattern.groups(S).shape[1])
    return BinaryMask(group_topk(S, pattern, kb).astype(np.float64), pattern)


def greedy_single_weight_mask(w_row, G, k: int) -> np.ndarray:
    """Prune one weight at a time, always the one with the smallest ``w_q^2 G_qq``.

    Returns a 0/1 vector.  Among equal costs the highest index is pruned
    first, mirroring the lowest-index-wins rule of :func:`saliency_mask`.
    """
    w = np.asarray(w_row, dtype=np.float64).ravel()
    G = np.asarray(G, dtype=np.float64)
    d = w.size
    if not 0 <= k <= d:
        raise BudgetError(f"k={k} outside [0, {d}]")
    cost = w ** 2 * np.diag(G)
    alive = np.ones(d, dtype=bool)
    for _ in range(d - k):
        cand = np.flatnonzero(alive)
        c = cost[cand]
        # last occurrence of the minimum = highest index among ties
        q = cand[len(c) - 1 - int(np.argmin(c[::-1]))]
        alive[q] = False
    return alive.astype(np.float64)


def default_damping(G) -> float:
    return 0.01 * float(np.mean(np.diag(np.asarray(G))))


def sparsegpt_greedy_row(w_row, G, k: int, damping: float | None = None,
                         block: tuple[int, int] | None = None
                         ) -> tuple[np.ndarray, np.ndarray]:
    """Single-weight SparseGPT / OBS pruning of one row with reconstruction.

    Each step removes ``q = argmin w_q^2 / [H^-1]_qq`` over surviving
    coordinates (``H = G + damping I``), shifts the survivors by
    ``-(w_q / [H^-1]_qq) H^-1 e_q`` and downdates ``H^-1`` so that it stays the
    inverse of ``H`` restricted to the survivors.

    ``block=(n, m)`` restricts candidates to blocks of ``n`` columns that still
    hold more than ``m`` survivors, giving an n:m-feasible result; ``k`` is
    then ignored.

    Returns ``(mask, reconstructed_weights)``.
    """
    w = np.array(w_row, dtype=np.float64).ravel()
    G = np.asarray(G, dtype=np.float64)
    d = w.size
    if G.shape != (d, d):
        raise ShapeError(f"G{G.shape} does not match row of length {d}")
    if damping is None:
        damping = default_damping(G)
    if block is not None:
        n, m = block
        if d % n:
            raise ShapeError(f"row length {d} not divisible by block size {n}")
        k = (d // n) * m
    if not 0 <= k <= d:
        raise BudgetError(f"k={k} outside [0, {d}]")
    H = G + damping * np.eye(d)
    try:
        Hinv = np.linalg.inv(H)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("damped Gram matrix is singular") from exc
    alive = np.ones(d, dtype=bool)
    for _ in range(d - k):
        diag = np.diag(Hinv)
        if np.any(diag[alive] <= 0):
            raise NumericalError("inverse Hessian lost positive definiteness")
        score = np.full(d, np.inf)
        score[alive] = w[alive] ** 2 / diag[alive]
        if block is not None:
            counts = alive.reshape(-1, block[0]).sum(axis=1)
            score[np.repeat(counts <= block[1], block[0])] = np.inf
        q = int(np.argmin(score))
        col = Hinv[:, q].copy()
        w -= (w[q] / col[q]) * col
        w[q] = 0.0
        Hinv -= np.outer(col, col) / col[q]
        Hinv[q, :] = 0.0
        Hinv[:, q] = 0.0
        alive[q] = False
    return alive.astype(np.float64), w


def sparsegpt_mask(W, G, pattern: SparsityPattern, damping: float | None = None
                   ) -> tuple[BinaryMask, np.ndarray]:
    """Row-wise SparseGPT over a whole matrix.

    Unstructured budgets are split into per-row counts ``k // d_out`` with the
    remainder going to the first rows, since the method is row-wise by
    construction.  Returns the mask and the reconstructed weight matrix.
    """
    W = as_matrix(W, "W")
    G = _check_gram(W, G)
    pattern.check(W.shape)
    d_out, d_in = W.shape
    if damping is None:
        damping = default_damping(G)
    mask = np.zeros_like(W)
    What = np.zeros_like(W)
    if isinstance(pattern, PerRow):
        per_row = [pattern.k_row] * d_out
    elif isinstance(pattern, NM):
        per_row = [None] * d_out
    else:
        base, extra = divmod(pattern.k, d_out)
        per_row = [base + (i < extra) for i in range(d_out)]
    for i, kr in enumerate(per_row):
        if kr is None:
            mask[i], What[i] = sparsegpt_greedy_row(W[i], G, 0, damping, block=(pattern.n, pattern.m))
        else:
            mask[i], What[i] = sparsegpt_greedy_row(W[i], G, kr, damping)
    return BinaryMask(mask, pattern), What


def reconstruction_loss(W, What, G) -> float:
    """``||(What - W) X||_F^2`` evaluated through ``G``."""
    D = np.asarray(What) - np.asarray(W)
    return float(np.sum((D @ np.asarray(G)) * D))
