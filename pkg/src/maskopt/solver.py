"""Frank-Wolfe mask optimization with optional saliency-based weight fixing."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .baselines import magnitude_scores, ria_scores, saliency_mask, wanda_scores
from .core import (BinaryMask, MaskState, SparsityPattern, group_sums,
                   group_topk)
from .lmo import lmo_values
from .objective import ObjectiveContext, fw_gap, gradient, loss

log = logging.getLogger(__name__)

WARMSTARTS = ("wanda", "ria", "magnitude")
Warmstart = Union[str, BinaryMask]


@dataclass
class SolverConfig:
    iterations: int
    pattern: SparsityPattern
    alpha: float = 0.0
    warmstart: Warmstart = "wanda"
    trace_every: int = 10
    # Off (default): fixed weights count as pruned while optimizing and are
    # only added back after thresholding.  On: gradients are taken at
    # M_t + fixed mask, so the free weights see the preserved ones.
    merge_fixed_into_iterate: bool = False

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.trace_every < 0:
            raise ValueError("trace_every must be >= 0")
        if isinstance(self.warmstart, str) and self.warmstart not in WARMSTARTS:
            raise ValueError(f"unknown warmstart {self.warmstart!r}")


@dataclass
class TraceRecord:
    step: int
    loss: float
    thresholded_loss: float
    gap: float
    residual: float


@dataclass
class SolveTrace:
    records: list[TraceRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


def step_size(t: int) -> float:
    return 2.0 / (t + 2)


def threshold_values(values: np.ndarray, pattern: SparsityPattern, kb: int | None = None,
                     exclude: np.ndarray | None = None) -> np.ndarray:
    if kb is None:
        kb = pattern.group_budget(values.shape)
    kb = min(kb, pattern.groups(values).shape[1])
    return group_topk(values, pattern, kb, exclude).astype(np.float64)


def threshold_topk(M: MaskState, budget_per_group: int | None = None) -> BinaryMask:
    """Top-k rounding of a continuous iterate, group by group (ties: lowest index)."""
    return BinaryMask(threshold_values(M.values, M.pattern, budget_per_group), M.pattern)


def saliency_for(ctx: ObjectiveContext, method: str) -> np.ndarray:
    if method == "wanda":
        return wanda_scores(ctx.W, ctx.G)
    if method == "ria":
        return ria_scores(ctx.W, ctx.G)
    if method == "magnitude":
        return magnitude_scores(ctx.W)
    raise ValueError(f"unknown saliency {method!r}")


def warmstart_mask(ctx: ObjectiveContext, cfg: SolverConfig) -> BinaryMask:
    if isinstance(cfg.warmstart, BinaryMask):
        return cfg.warmstart
    return saliency_mask(saliency_for(ctx, cfg.warmstart), cfg.pattern)


def _run(ctx: ObjectiveContext, pattern: SparsityPattern, M0: np.ndarray, T: int,
         kb: int, trace_every: int, frozen: np.ndarray | None = None,
         offset: np.ndarray | None = None, merge: bool = False,
         trace: SolveTrace | None = None) -> np.ndarray:
    """Core loop.  ``frozen`` coordinates are excluded from the oracle and the
    threshold; ``offset`` (the fixed mask) is added when reporting losses and,
    with ``merge``, when evaluating gradients."""
    M = np.array(M0, dtype=np.float64)
    report = (lambda A: A) if offset is None else (lambda A: A + offset)
    grad_at = report if merge else (lambda A: A)
    for t in range(T + 1):
        recording = trace is not None and trace_every > 0 and (t % trace_every == 0 or t == T)
        if t == T and not recording:
            break
        g = gradient(ctx, grad_at(M))
        V = lmo_values(g, pattern, kb, frozen)
        if recording:
            _check_state(M, pattern, kb)
            thr = threshold_values(M, pattern, kb, frozen)
            trace.records.append(TraceRecord(
                step=t,
                loss=loss(ctx, report(M)),
                thresholded_loss=loss(ctx, report(thr)),
                gap=fw_gap(g, M, V),
                residual=float(np.sum(np.abs(M - thr))),
            ))
        if t == T:
            break
        eta = step_size(t)
        M *= 1.0 - eta
        M += eta * V
    return M


def _check_state(M: np.ndarray, pattern: SparsityPattern, kb: int) -> None:
    if M.size and (M.min() < -1e-12 or M.max() > 1 + 1e-12
                   or group_sums(M, pattern).max() > kb + 1e-9):
        raise AssertionError("Frank-Wolfe iterate left the feasible set")


def fw_solve(ctx: ObjectiveContext, cfg: SolverConfig, M0: BinaryMask
             ) -> tuple[MaskState, SolveTrace]:
    """Plain Frank-Wolfe from a feasible binary mask; returns the continuous iterate."""
    pattern = cfg.pattern
    pattern.check(ctx.shape)
    start = MaskState(M0.values if isinstance(M0, BinaryMask) else M0, pattern)
    kb = pattern.group_budget(ctx.shape)
    trace = SolveTrace()
    if pattern.budget(ctx.shape) == 0:
        return MaskState(np.zeros(ctx.shape), pattern), trace
    M = _run(ctx, pattern, start.values, cfg.iterations, kb, cfg.trace_every, trace=trace)
    return MaskState(np.clip(M, 0.0, 1.0), pattern), trace


@dataclass
class FixedSolveResult:
    mask: BinaryMask
    trace: SolveTrace
    fixed: np.ndarray
    continuous: np.ndarray
    k_keep: int
    k_new: int


def split_budget(kb: int, alpha: float) -> tuple[int, int]:
    """Per-group ``(k_keep, k_new)`` with ``k_keep = floor(kb * alpha)`` and
    ``k_new = kb - k_keep`` so the final mask always uses the whole budget."""
    # guard against 0.7 * 10 = 6.999... style float artefacts
    k_keep = min(kb, math.floor(kb * alpha + 1e-9))
    return k_keep, kb - k_keep


def fw_solve_fixed_full(ctx: ObjectiveContext, cfg: SolverConfig,
                        saliency: np.ndarray) -> FixedSolveResult:
    pattern = cfg.pattern
    shape = ctx.shape
    pattern.check(shape)
    saliency = np.asarray(saliency, dtype=np.float64)
    if saliency.shape != shape:
        raise ValueError(f"saliency shape {saliency.shape} does not match W{shape}")
    kb = min(pattern.group_budget(shape), pattern.groups(saliency).shape[1])
    k_keep, k_new = split_budget(kb, cfg.alpha)
    fixed = group_topk(saliency, pattern, k_keep).astype(np.float64)
    frozen = fixed.astype(bool)
    trace = SolveTrace()

    if k_new == 0 or pattern.budget(shape) == 0:
        return FixedSolveResult(BinaryMask(fixed, pattern), trace, fixed, fixed.copy(), k_keep, 0)

    warm = warmstart_mask(ctx, cfg).values.copy()
    warm[frozen] = 0.0
    # trim to k_new per group, preferring high-saliency coordinates
    M0 = warm * group_topk(np.where(warm > 0, saliency, -np.inf), pattern, k_new, frozen)

    M = _run(ctx, pattern, M0, cfg.iterations, k_new, cfg.trace_every,
             frozen=frozen if k_keep else None, offset=fixed if k_keep else None,
             merge=cfg.merge_fixed_into_iterate, trace=trace)
    M = np.clip(M, 0.0, 1.0)
    chosen = threshold_values(M, pattern, k_new, frozen if k_keep else None)
    mask = BinaryMask(chosen + fixed, pattern)
    log.debug("fixed %d + optimized %d per group", k_keep, k_new)
    return FixedSolveResult(mask, trace, fixed, M + fixed, k_keep, k_new)


def fw_solve_fixed(ctx: ObjectiveContext, cfg: SolverConfig, saliency: np.ndarray
                   ) -> tuple[BinaryMask, SolveTrace]:
    """Fix the top ``floor(alpha * budget)`` saliency entries per group, run
    Frank-Wolfe over the rest with the remaining budget, threshold, and merge."""
    res = fw_solve_fixed_full(ctx, cfg, saliency)
    return res.mask, res.trace
