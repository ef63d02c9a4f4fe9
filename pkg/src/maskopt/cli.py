"""Command-line entry point: ``maskopt {gen,prune,bench,oracle}``.

Exit codes: 0 success, 2 file or format error, 3 constraint error,
4 approximation bound violated (``oracle`` only).
"""

from __future__ import annotations

import argparse
import logging
import math
import re
import sys
from dataclasses import dataclass
from pathlib import Path

from . import bench
from .baselines import saliency_mask, wanda_scores
from .core import (NM, BinaryMask, CapacityError, FormatError, GramCache,
                   MaskoptError, PerRow, SparsityPattern, Unstructured,
                   generate_synthetic_layer, gram_precompute, satisfies_pattern)
from .matrix_io import load_matrix, save_matrix
from .objective import ObjectiveContext, loss
from .oracle import MAX_ENUM_DIM, verify_lemma_bound
from .solver import (SolverConfig, fw_solve_fixed_full, saliency_for,
                     warmstart_mask)

log = logging.getLogger("maskopt")

EXIT_OK, EXIT_IO, EXIT_CONSTRAINT, EXIT_BOUND = 0, 2, 3, 4


# ---------------------------------------------------------------------------
# pattern strings
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PatternSpec:
    """Parsed ``--pattern`` string; resolved against a layer shape later.

    Forms: ``u:K`` (K kept weights), ``u%:P`` (P percent sparsity, kept count
    rounded down), ``row:K`` (K kept per row), ``N:M`` (keep N of every M).
    """

    kind: str
    a: float
    b: int = 0

    def resolve(self, shape: tuple[int, int]) -> SparsityPattern:
        if self.kind == "u":
            return Unstructured(int(self.a))
        if self.kind == "u%":
            total = shape[0] * shape[1]
            # integer arithmetic on the percentage avoids 0.4 * 2048 rounding
            return Unstructured(math.floor(total * (100 - self.a) / 100 + 1e-9))
        if self.kind == "row":
            return PerRow(int(self.a))
        return NM(self.b, int(self.a))

    def __str__(self) -> str:
        if self.kind == "u%":
            return f"u%:{self.a:g}"
        if self.kind == "nm":
            return f"{int(self.a)}:{self.b}"
        return f"{self.kind}:{int(self.a)}"


_PATTERN_RE = re.compile(r"^\s*(?:(u%|u|row)\s*:\s*([0-9.]+)|([0-9]+)\s*:\s*([0-9]+))\s*$",
                         re.IGNORECASE)


def parse_pattern(text: str) -> PatternSpec:
    m = _PATTERN_RE.match(text)
    if not m:
        raise ValueError(f"cannot parse pattern {text!r}; expected u:K, u%:P, row:K or N:M")
    if m.group(1):
        kind = m.group(1).lower()
        value = float(m.group(2))
        if kind == "u%":
            if not 0 <= value <= 100:
                raise ValueError(f"sparsity percentage {value} outside [0, 100]")
            return PatternSpec("u%", value)
        if value != int(value):
            raise ValueError(f"{kind} budget must be an integer, got {m.group(2)}")
        return PatternSpec(kind, int(value))
    keep, block = int(m.group(3)), int(m.group(4))
    NM(block, keep)  # validates 0 < keep <= block
    return PatternSpec("nm", keep, block)


def format_pattern(spec: PatternSpec) -> str:
    return str(spec)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _load_context(args) -> ObjectiveContext:
    W = load_matrix(args.weights)
    if args.gram:
        return ObjectiveContext(W, GramCache.from_gram(W, load_matrix(args.gram)))
    return ObjectiveContext(W, gram_precompute(load_matrix(args.acts), W, args.batch_cols))


def _warmstart(spec: str, pattern: SparsityPattern):
    if spec.startswith("file:"):
        return BinaryMask(load_matrix(spec[5:]), pattern)
    return spec


TRACE_COLUMNS = ["step", "loss", "thresholded_loss", "gap", "residual"]
METRIC_COLUMNS = ["pattern", "d_out", "d_in", "iters", "alpha", "warmstart", "k_keep", "k_new",
                  "dense_loss", "warmstart_loss", "continuous_loss", "thresholded_loss",
                  "relative_reduction", "warmstart_relative", "continuous_relative",
                  "thresholded_relative"]


def cmd_gen(args) -> int:
    W, X = generate_synthetic_layer(args.d_out, args.d_in, args.batch, args.seed,
                                    args.outlier_cols, args.outlier_scale)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_matrix(out / "W.mxf", W)
    save_matrix(out / "X.mxf", X)
    if args.gram:
        save_matrix(out / "G.mxf", gram_precompute(X, W).G)
    return EXIT_OK


def cmd_prune(args) -> int:
    spec = parse_pattern(args.pattern)
    ctx = _load_context(args)
    pattern = spec.resolve(ctx.shape)
    pattern.check(ctx.shape)
    ws = _warmstart(args.warmstart, pattern)
    cfg = SolverConfig(args.iters, pattern, alpha=args.alpha, warmstart=ws,
                       trace_every=args.trace_every,
                       merge_fixed_into_iterate=args.merge_fixed)
    # custom warmstart masks have no scores of their own; fix by Wanda saliency
    saliency = saliency_for(ctx, ws if isinstance(ws, str) else "wanda")
    res = fw_solve_fixed_full(ctx, cfg, saliency)
    if not satisfies_pattern(res.mask.values, pattern):
        raise MaskoptError("solver produced a mask violating its pattern")

    warm_loss = loss(ctx, warmstart_mask(ctx, cfg))
    cont_loss = loss(ctx, res.continuous)
    thr_loss = loss(ctx, res.mask)
    dense = ctx.dense_loss()

    def rel(v):
        return v / dense if dense > 0 else 0.0

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_matrix(out / "mask.mxf", res.mask.values)
    bench.write_csv(out / "metrics.csv", METRIC_COLUMNS, [{
        "pattern": str(spec), "d_out": ctx.shape[0], "d_in": ctx.shape[1],
        "iters": args.iters, "alpha": float(args.alpha),
        "warmstart": args.warmstart, "k_keep": res.k_keep, "k_new": res.k_new,
        "dense_loss": dense, "warmstart_loss": warm_loss, "continuous_loss": cont_loss,
        "thresholded_loss": thr_loss,
        "relative_reduction": 1.0 - thr_loss / warm_loss if warm_loss > 0 else 0.0,
        "warmstart_relative": rel(warm_loss), "continuous_relative": rel(cont_loss),
        "thresholded_relative": rel(thr_loss),
    }])
    if args.trace_every > 0:
        bench.write_csv(out / "trace.csv", TRACE_COLUMNS,
                        [vars(r) for r in res.trace.records])
    return EXIT_OK


def cmd_bench(args) -> int:
    spec = parse_pattern(args.pattern)
    threads = bench.resolve_threads(args.threads)
    settings = [bench.BenchSetting(args.d_out, args.d_in, b, t, a, s,
                                   args.outlier_cols, args.outlier_scale)
                for b in _int_list(args.batches)
                for t in _int_list(args.iters)
                for a in _float_list(args.alphas)
                for s in _int_list(args.seeds)]
    for s in settings[:1]:
        spec.resolve((s.d_out, s.d_in)).check((s.d_out, s.d_in))
    results = bench.parallel_map(
        lambda s: bench.bench_rows(s, spec.resolve, str(spec), args.warmstart),
        settings, threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bench.write_csv(out / "bench.csv", bench.BENCH_COLUMNS,
                    [row for rows in results for row in rows])
    if args.timing:
        rows = []
        for b in _int_list(args.batches):
            W, X = generate_synthetic_layer(args.d_out, args.d_in, b, args.timing_seed)
            ctx = ObjectiveContext(W, gram_precompute(X, W))
            pattern = spec.resolve(ctx.shape)
            M0 = saliency_mask(wanda_scores(W, ctx.G), pattern)
            t = bench.median_iteration_time(ctx, pattern, M0, args.timing_iters, args.repeats)
            rows.append({"batch": b, "median_iter_seconds": t})
        bench.write_csv(out / "timing.csv", ["batch", "median_iter_seconds"], rows)
    return EXIT_OK


ORACLE_COLUMNS = ["instance", "seed", "d_in", "k", "r", "T", "raw_mass", "mass", "epsilon",
                  "lambda_max", "tau", "bound_value", "f_eps", "f_ref", "f_hat", "f_int",
                  "gap", "satisfied"]


def cmd_oracle(args) -> int:
    if args.d_in > MAX_ENUM_DIM:
        raise CapacityError(f"d_in={args.d_in} exceeds the enumeration limit of {MAX_ENUM_DIM}")
    k = args.k if args.k is not None else args.d_in // 2
    threads = bench.resolve_threads(args.threads)

    def run(i: int) -> dict:
        seed = args.seed + i
        W, X = generate_synthetic_layer(1, args.d_in, args.batch, seed,
                                        args.outlier_cols, args.outlier_scale)
        G = gram_precompute(X, W).G
        rep = verify_lemma_bound(W[0], G, k, args.iters, ref_factor=args.ref_factor)
        return {"instance": i, "seed": seed, **rep.as_row()}

    rows = bench.parallel_map(run, list(range(args.instances)), threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bench.write_csv(out / "oracle.csv", ORACLE_COLUMNS, rows)
    bad = [r["instance"] for r in rows if not r["satisfied"]]
    if bad:
        print(f"maskopt: bound violated on instances {bad}", file=sys.stderr)
        return EXIT_BOUND
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="maskopt",
                                description="Frank-Wolfe pruning mask selection")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: $MASKOPT_THREADS or 1)")

    g = sub.add_parser("gen", help="write a synthetic layer (W.mxf, X.mxf)")
    common(g)
    g.add_argument("--d-out", type=int, required=True)
    g.add_argument("--d-in", type=int, required=True)
    g.add_argument("--batch", type=int, required=True)
    g.add_argument("--outlier-cols", type=int, default=0)
    g.add_argument("--outlier-scale", type=float, default=1.0)
    g.add_argument("--gram", action="store_true", help="also write G.mxf")
    g.set_defaults(func=cmd_gen)

    pr = sub.add_parser("prune", help="prune one layer")
    common(pr)
    pr.add_argument("--weights", required=True)
    src = pr.add_mutually_exclusive_group(required=True)
    src.add_argument("--acts", help="calibration inputs X (d_in x B)")
    src.add_argument("--gram", help="precomputed G = X X^T (d_in x d_in)")
    pr.add_argument("--batch-cols", type=int, default=4096)
    pr.add_argument("--pattern", required=True)
    pr.add_argument("--iters", type=int, default=2000)
    pr.add_argument("--alpha", type=float, default=0.0)
    pr.add_argument("--warmstart", default="wanda",
                    help="wanda, ria, magnitude or file:PATH")
    pr.add_argument("--trace-every", type=int, default=10)
    pr.add_argument("--merge-fixed", action="store_true",
                    help="keep fixed weights in the iterate while optimizing")
    pr.set_defaults(func=cmd_prune)

    b = sub.add_parser("bench", help="compare SparseFW with the greedy baselines")
    common(b)
    b.add_argument("--d-out", type=int, default=16)
    b.add_argument("--d-in", type=int, default=32)
    b.add_argument("--batches", default="64", help="comma-separated sample counts")
    b.add_argument("--iters", default="100", help="comma-separated iteration counts")
    b.add_argument("--alphas", default="0.0", help="comma-separated alpha values")
    b.add_argument("--seeds", default="1", help="comma-separated seeds")
    b.add_argument("--pattern", default="u%:50")
    b.add_argument("--warmstart", default="wanda", choices=["wanda", "ria", "magnitude"])
    b.add_argument("--outlier-cols", type=int, default=0)
    b.add_argument("--outlier-scale", type=float, default=1.0)
    b.add_argument("--timing", action="store_true", help="also write timing.csv")
    b.add_argument("--timing-iters", type=int, default=50)
    b.add_argument("--timing-seed", type=int, default=0)
    b.add_argument("--repeats", type=int, default=5)
    b.set_defaults(func=cmd_bench)

    o = sub.add_parser("oracle", help="check the top-k rounding bound by enumeration")
    common(o)
    o.add_argument("--instances", type=int, default=30)
    o.add_argument("--d-in", type=int, default=10)
    o.add_argument("--k", type=int, default=None, help="default: d_in // 2")
    o.add_argument("--iters", type=int, default=2000)
    o.add_argument("--batch", type=int, default=16)
    o.add_argument("--ref-factor", type=int, default=100)
    o.add_argument("--outlier-cols", type=int, default=0)
    o.add_argument("--outlier-scale", type=float, default=1.0)
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, FormatError) as exc:
        print(f"maskopt: {exc}", file=sys.stderr)
        return EXIT_IO
    except (MaskoptError, ValueError) as exc:
        print(f"maskopt: {exc}", file=sys.stderr)
        return EXIT_CONSTRAINT


if __name__ == "__main__":
    sys.exit(main())
