"""Experiment rows, wall-clock timing and CSV emission shared by the CLI."""

from __future__ import annotations

import csv
import io
import os
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

from .baselines import (magnitude_scores, reconstruction_loss, ria_scores,
                        saliency_mask, sparsegpt_mask, wanda_scores)
from .core import (BinaryMask, SparsityPattern, gram_precompute,
                   generate_synthetic_layer)
from .lmo import lmo_values
from .objective import ObjectiveContext, gradient, loss
from .solver import SolverConfig, fw_solve_fixed_full, saliency_for, step_size

CSV_VERSION_LINE = "# maskopt-csv v1"

T = TypeVar("T")
R = TypeVar("R")


def fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    if x is None:
        return ""
    return str(x)


def write_csv(path: str | os.PathLike, columns: Sequence[str], rows: Iterable[dict]) -> None:
    buf = io.StringIO()
    buf.write(CSV_VERSION_LINE + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(row.get(c)) for c in columns])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def read_csv(path: str | os.PathLike) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("MASKOPT_THREADS", "1"))
    return max(1, threads)


def parallel_map(fn: Callable[[T], R], items: Sequence[T], threads: int) -> list[R]:
    """Order-preserving map; ``threads == 1`` runs inline."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

BENCH_COLUMNS = ["method", "pattern", "d_out", "d_in", "batch", "iters", "alpha",
                 "seed", "loss", "relative_loss", "continuous_loss"]
METHODS = ("sparsefw", "wanda", "ria", "magnitude", "sparsegpt")


@dataclass(frozen=True)
class BenchSetting:
    d_out: int
    d_in: int
    batch: int
    iters: int
    alpha: float
    seed: int
    outlier_cols: int = 0
    outlier_scale: float = 1.0


def bench_rows(setting: BenchSetting, pattern_of: Callable[[tuple[int, int]], SparsityPattern],
               pattern_label: str, warmstart: str = "wanda") -> list[dict]:
    W, X = generate_synthetic_layer(setting.d_out, setting.d_in, setting.batch, setting.seed,
                                    setting.outlier_cols, setting.outlier_scale)
    cache = gram_precompute(X, W)
    ctx = ObjectiveContext(W, cache)
    pattern = pattern_of(W.shape)
    dense = ctx.dense_loss()

    def rel(v: float) -> float:
        return v / dense if dense > 0 else 0.0

    base = {"pattern": pattern_label, "d_out": setting.d_out, "d_in": setting.d_in,
            "batch": setting.batch, "iters": setting.iters, "alpha": float(setting.alpha),
            "seed": setting.seed}
    cfg = SolverConfig(setting.iters, pattern, alpha=setting.alpha, warmstart=warmstart,
                       trace_every=0)
    res = fw_solve_fixed_full(ctx, cfg, saliency_for(ctx, warmstart))
    rows = []
    fw_loss = loss(ctx, res.mask)
    rows.append({**base, "method": "sparsefw", "loss": fw_loss, "relative_loss": rel(fw_loss),
                 "continuous_loss": loss(ctx, res.continuous)})
    for name, scores in (("wanda", wanda_scores(W, cache.G)),
                         ("ria", ria_scores(W, cache.G)),
                         ("magnitude", magnitude_scores(W))):
        v = loss(ctx, saliency_mask(scores, pattern))
        rows.append({**base, "method": name, "loss": v, "relative_loss": rel(v)})
    _, What = sparsegpt_mask(W, cache.G, pattern)
    v = reconstruction_loss(W, What, cache.G)
    rows.append({**base, "method": "sparsegpt", "loss": v, "relative_loss": rel(v)})
    return rows


def median_iteration_time(ctx: ObjectiveContext, pattern: SparsityPattern, M0: BinaryMask,
                          iters: int = 50, repeats: int = 5) -> float:
    """Median over ``repeats`` of the mean wall time of one FW step (seconds)."""
    kb = pattern.group_budget(ctx.shape)
    samples = []
    for _ in range(max(repeats, 5)):
        M = np.array(M0.values, dtype=np.float64)
        start = time.perf_counter()
        for t in range(iters):
            V = lmo_values(gradient(ctx, M), pattern, kb)
            eta = step_size(t)
            M *= 1.0 - eta
            M += eta * V
        samples.append((time.perf_counter() - start) / iters)
    return statistics.median(samples)
