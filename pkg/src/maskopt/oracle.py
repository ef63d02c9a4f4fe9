"""Exhaustive mask search and numerical checks of the top-k rounding bound.

Everything here works in the row-wise mask space, where the loss of a row
mask ``m`` is ``f(m) = (1 - m)^T Q (1 - m)`` with ``Q = Diag(w) G Diag(w)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass

import numpy as np

from .baselines import saliency_mask, wanda_scores
from .core import BudgetError, CapacityError, ShapeError, Unstructured, group_topk
from .objective import lambda_max, row_hessian

MAX_ENUM_DIM = 24
_CHUNK = 1 << 15


def row_loss(Q: np.ndarray, m) -> float:
    z = 1.0 - np.asarray(m, dtype=np.float64)
    return float(z @ Q @ z)


def _enumerate_min(Q: np.ndarray, d: int, k: int) -> tuple[np.ndarray, float]:
    best_loss = math.inf
    best = None
    combos = itertools.combinations(range(d), k)
    while True:
        chunk = list(itertools.islice(combos, _CHUNK))
        if not chunk:
            break
        Z = np.ones((len(chunk), d))
        if k:
            Z[np.arange(len(chunk))[:, None], np.array(chunk)] = 0.0
        losses = np.einsum("ni,ij,nj->n", Z, Q, Z)
        i = int(np.argmin(losses))
        # strict < keeps the earliest combination on ties across chunks
        if losses[i] < best_loss:
            best_loss = float(losses[i])
            best = 1.0 - Z[i]
    return best, best_loss


def brute_force_row(w_row, G, k: int) -> tuple[np.ndarray, float]:
    """Best row mask with exactly ``k`` ones, by enumerating all C(d, k) supports.

    Supports are visited in ``itertools.combinations`` order and the first
    minimizer wins.
    """
    w = np.asarray(w_row, dtype=np.float64).ravel()
    d = w.size
    if d > MAX_ENUM_DIM:
        raise CapacityError(f"d_in={d} exceeds the enumeration limit of {MAX_ENUM_DIM}")
    if not 0 <= k <= d:
        raise BudgetError(f"k={k} outside [0, {d}]")
    return _enumerate_min(row_hessian(w, G), d, k)


def brute_force_unstructured(W, G, k: int) -> tuple[np.ndarray, float]:
    """Exact optimum of the coupled problem: ``k`` ones anywhere in the matrix."""
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2:
        raise ShapeError("W must be 2-D")
    d_out, d_in = W.shape
    n = d_out * d_in
    if n > MAX_ENUM_DIM:
        raise CapacityError(f"{d_out}x{d_in} exceeds the enumeration limit of {MAX_ENUM_DIM}")
    if not 0 <= k <= n:
        raise BudgetError(f"k={k} outside [0, {n}]")
    Qfull = np.zeros((n, n))
    for i in range(d_out):
        s = slice(i * d_in, (i + 1) * d_in)
        Qfull[s, s] = row_hessian(W[i], G)
    m, best = _enumerate_min(Qfull, n, k)
    return m.reshape(d_out, d_in), best


def fw_row(Q: np.ndarray, m0, k: int, T: int) -> np.ndarray:
    """Frank-Wolfe on ``f(m) = (1-m)^T Q (1-m)`` over ``{0 <= m <= 1, sum(m) <= k}``.

    Same iteration as the matrix solver (step ``2/(t+2)``, strictly negative
    gradient entries only, lowest index on ties) specialised to one row so
    that long reference runs stay cheap.
    """
    m = np.array(m0, dtype=np.float64).ravel()
    ones = np.ones(m.size)
    argsort = np.argsort
    for t in range(T):
        g = Q @ (m - ones)  # half the gradient; only signs and order matter
        idx = argsort(g, kind="stable")[:k]
        sel = idx[g[idx] < 0]
        eta = 2.0 / (t + 2)
        m *= 1.0 - eta
        m[sel] += eta
    return np.clip(m, 0.0, 1.0)


def top_k_indices(m: np.ndarray, k: int) -> np.ndarray:
    return np.flatnonzero(group_topk(m.reshape(1, -1), Unstructured(k), k).ravel())


def fill_to_mass(m: np.ndarray, k: int) -> np.ndarray:
    """Raise the top-k coordinates of ``m`` until ``sum(m) == k``.

    The deficit is spread evenly (water-filling, capped at 1) over the top-k
    coordinates still below 1.  Values outside the top-k are untouched and
    top-k values only grow, so the top-k set is preserved.
    """
    m = np.array(m, dtype=np.float64)
    deficit = k - m.sum()
    if deficit <= 0:
        return m
    top = top_k_indices(m, k)
    while deficit > 1e-15:
        open_ = top[m[top] < 1.0]
        if open_.size == 0:
            break
        share = deficit / open_.size
        room = 1.0 - m[open_]
        add = np.minimum(room, share)
        m[open_] += add
        deficit -= add.sum()
    return np.clip(m, 0.0, 1.0)


@dataclass
class BoundReport:
    d_in: int
    k: int
    r: int
    T: int
    raw_mass: float
    mass: float
    epsilon: float
    lambda_max: float
    tau: float
    bound_value: float
    f_eps: float
    f_ref: float
    f_hat: float
    f_int: float
    gap: float
    satisfied: bool

    def as_row(self) -> dict:
        return asdict(self)


def lemma_bound(epsilon: float, lam: float, k: int, r: int) -> float:
    s = min(k, r)
    return epsilon + 2.0 * lam * (s + math.sqrt(2.0 * r * s))


def verify_lemma_bound(w_row, G, k: int, T: int, ref_factor: int = 100,
                       m0=None) -> BoundReport:
    """Run row-wise Frank-Wolfe, round to top-k, and compare with the exhaustive optimum.

    ``epsilon`` is measured against a ``ref_factor``-times longer run.  When the
    iterate's mass falls short of ``k`` it is topped up with :func:`fill_to_mass`
    first; both masses are reported.  ``m0`` defaults to the Wanda mask.
    """
    w = np.asarray(w_row, dtype=np.float64).ravel()
    G = np.asarray(G, dtype=np.float64)
    d = w.size
    if d > MAX_ENUM_DIM:
        raise CapacityError(f"d_in={d} exceeds the enumeration limit of {MAX_ENUM_DIM}")
    if not 0 <= k <= d:
        raise BudgetError(f"k={k} outside [0, {d}]")
    Q = row_hessian(w, G)
    lam = lambda_max(Q)
    r = d - k
    if m0 is None:
        m0 = saliency_mask(wanda_scores(w.reshape(1, -1), G), Unstructured(k)).values.ravel()

    m_raw = fw_row(Q, m0, k, T)
    m_eps = fill_to_mass(m_raw, k)
    m_ref = fw_row(Q, m0, k, max(T * ref_factor, 1))
    f_eps = row_loss(Q, m_eps)
    f_ref = row_loss(Q, m_ref)
    epsilon = max(f_eps - f_ref, 0.0)

    top = top_k_indices(m_eps, k)
    m_hat = np.zeros(d)
    m_hat[top] = 1.0
    tau = float(m_eps.sum() - m_eps[top].sum())
    f_hat = row_loss(Q, m_hat)
    _, f_int = brute_force_row(w, G, k)

    bound = lemma_bound(epsilon, lam, k, r)
    scale = max(1.0, row_loss(Q, np.zeros(d)))
    gap = f_hat - f_int
    return BoundReport(
        d_in=d, k=k, r=r, T=T,
        raw_mass=float(m_raw.sum()), mass=float(m_eps.sum()),
        epsilon=epsilon, lambda_max=lam, tau=tau, bound_value=bound,
        f_eps=f_eps, f_ref=f_ref, f_hat=f_hat, f_int=f_int, gap=gap,
        satisfied=bool(gap <= bound + 1e-9 * scale),
    )
