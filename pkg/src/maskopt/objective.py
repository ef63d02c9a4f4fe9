"""Layerwise pruning loss, its mask gradient, and spectral helpers.

The loss of a (possibly fractional) mask ``M`` is
``||W X - (M * W) X||_F^2 = Tr(D G D^T)`` with ``D = W * (1 - M)`` and
``G = X X^T``, so nothing here ever touches the calibration matrix itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BinaryMask, GramCache, MaskState, ShapeError, as_matrix


@dataclass(frozen=True)
class ObjectiveContext:
    W: np.ndarray
    cache: GramCache

    def __post_init__(self):
        W = as_matrix(self.W, "W")
        W.setflags(write=False)
        object.__setattr__(self, "W", W)
        d_out, d_in = W.shape
        if self.cache.G.shape != (d_in, d_in) or self.cache.H.shape != (d_out, d_in):
            raise ShapeError(f"cache G{self.cache.G.shape}/H{self.cache.H.shape} "
                             f"inconsistent with W{W.shape}")

    @classmethod
    def from_gram(cls, W, G) -> "ObjectiveContext":
        return cls(W, GramCache.from_gram(W, G))

    @property
    def shape(self) -> tuple[int, int]:
        return self.W.shape

    @property
    def G(self) -> np.ndarray:
        return self.cache.G

    @property
    def H(self) -> np.ndarray:
        return self.cache.H

    def dense_loss(self) -> float:
        """Loss of the all-zero mask, ``||W X||_F^2``."""
        return float(np.sum((self.W @ self.G) * self.W))


def _mask_values(M, shape) -> np.ndarray:
    if isinstance(M, (MaskState, BinaryMask)):
        M = M.values
    M = np.asarray(M, dtype=np.float64)
    if M.shape != shape:
        raise ShapeError(f"mask shape {M.shape} does not match W{shape}")
    return M


def loss(ctx: ObjectiveContext, M) -> float:
    M = _mask_values(M, ctx.shape)
    D = ctx.W * (1.0 - M)
    return float(np.sum((D @ ctx.G) * D))


def gradient(ctx: ObjectiveContext, M) -> np.ndarray:
    """``-2 W * (H - (W * M) G)``; cost does not depend on the sample count."""
    M = _mask_values(M, ctx.shape)
    return -2.0 * ctx.W * (ctx.H - (ctx.W * M) @ ctx.G)


def row_hessian(w_row, G) -> np.ndarray:
    """``Q = Diag(w) G Diag(w)``, the mask-space Hessian (up to a factor 2) of one row."""
    w = np.asarray(w_row, dtype=np.float64).ravel()
    G = np.asarray(G, dtype=np.float64)
    if G.ndim != 2 or G.shape != (w.size, w.size):
        raise ShapeError(f"G{G.shape} does not match row of length {w.size}")
    return w[:, None] * G * w[None, :]


def lambda_max(Q, iters: int = 20000, tol: float = 1e-10) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration.

    Stops once the eigen-residual ``||Q v - rho v||`` drops below
    ``tol * rho``; for symmetric ``Q`` that bounds the distance from ``rho``
    to the spectrum.
    """
    Q = np.asarray(Q, dtype=np.float64)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ShapeError(f"lambda_max needs a square matrix, got {Q.shape}")
    d = Q.shape[0]
    if d == 0 or not np.any(Q):
        return 0.0
    # fixed start so results are reproducible; random direction avoids
    # starting orthogonal to the top eigenvector on structured inputs
    v = np.random.default_rng(0x5eed).standard_normal(d)
    v /= np.linalg.norm(v)
    rho = 0.0
    for _ in range(iters):
        u = Q @ v
        rho = float(v @ u)
        if np.linalg.norm(u - rho * v) <= tol * abs(rho):
            break
        norm = np.linalg.norm(u)
        if norm == 0.0:
            return 0.0
        v = u / norm
    return max(rho, 0.0)


def lambda_max_full(ctx: ObjectiveContext, **kw) -> float:
    """Largest eigenvalue of the block-diagonal full-matrix Hessian (max over rows)."""
    return max((lambda_max(row_hessian(w, ctx.G), **kw) for w in ctx.W), default=0.0)


def fw_gap(grad, M, V) -> float:
    """Frank-Wolfe gap ``<M - V, grad>``."""
    grad = np.asarray(grad, dtype=np.float64)
    Mv = _mask_values(M, grad.shape)
    Vv = _mask_values(V, grad.shape)
    return float(np.sum((Mv - Vv) * grad))
