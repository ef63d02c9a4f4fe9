import numpy as np
import pytest

from maskopt import (NM, BinaryMask, MaskState, PerRow, Unstructured,
                     lambda_max_full, loss, satisfies_pattern)
from maskopt.baselines import saliency_mask, wanda_scores
from maskopt.lmo import LmoRequest, lmo
from maskopt.objective import gradient
from maskopt.solver import (SolverConfig, fw_solve, fw_solve_fixed,
                            fw_solve_fixed_full, split_budget, step_size,
                            threshold_topk)

from conftest import make_ctx
from oracles import vertices


def test_step_size():
    assert step_size(0) == 1.0
    assert step_size(2) == 0.5
    assert step_size(998) == pytest.approx(0.002, abs=1e-15)


class TestThreshold:
    def test_binary_fixed_point(self):
        M = MaskState(np.array([[1.0, 0, 1], [0, 1, 0]]), Unstructured(3))
        np.testing.assert_array_equal(threshold_topk(M).values, M.values)

    def test_example(self):
        M = MaskState(np.array([[0.9, 0.2], [0.7, 0.1]]), Unstructured(2))
        np.testing.assert_array_equal(threshold_topk(M).values, [[1, 0], [1, 0]])

    def test_maximizes_mass_over_vertices(self, rng):
        for _ in range(10):
            v = rng.random(6) * 0.5
            M = MaskState(v.reshape(2, 3), Unstructured(3))
            T = threshold_topk(M).values.ravel()
            best = max(float(u @ v) for u in vertices(6, 3) if u.sum() == 3)
            assert T @ v == pytest.approx(best, abs=1e-15)

    @pytest.mark.parametrize("pattern", [PerRow(2), NM(4, 2)])
    def test_group_patterns_exact(self, rng, pattern):
        M = MaskState(rng.random((3, 8)) * 0.25, pattern)
        assert satisfies_pattern(threshold_topk(M).values, pattern)


class TestFwSolve:
    def _setup(self, pattern=Unstructured(3), shape=(2, 4), seed=3):
        ctx, W, X = make_ctx(*shape, 8, seed)
        M0 = saliency_mask(wanda_scores(W, ctx.G), pattern)
        return ctx, M0

    def test_zero_iterations(self):
        ctx, M0 = self._setup()
        M, trace = fw_solve(ctx, SolverConfig(0, M0.pattern), M0)
        np.testing.assert_array_equal(M.values, M0.values)

    def test_one_iteration_is_lmo_vertex(self):
        ctx, M0 = self._setup()
        M, _ = fw_solve(ctx, SolverConfig(1, M0.pattern), M0)
        V = lmo(LmoRequest(gradient(ctx, M0), M0.pattern))
        np.testing.assert_array_equal(M.values, V.values)

    @pytest.mark.parametrize("pattern", [Unstructured(10), PerRow(3), NM(4, 2)])
    def test_iterates_feasible(self, pattern):
        ctx, M0 = self._setup(pattern, (4, 8))
        M, trace = fw_solve(ctx, SolverConfig(200, pattern, trace_every=1), M0)
        # every traced step passed the in-loop feasibility check
        assert len(trace) == 201
        assert np.all(trace.column("residual") >= 0)

    def test_converges_within_rate(self):
        pattern = Unstructured(3)
        ctx, M0 = self._setup(pattern)
        ref, _ = fw_solve(ctx, SolverConfig(200000, pattern, trace_every=0), M0)
        M, _ = fw_solve(ctx, SolverConfig(5000, pattern, trace_every=0), M0)
        lam = lambda_max_full(ctx)
        assert loss(ctx, M) - loss(ctx, ref) <= 3 * lam / 5000

    def test_gap_certificate_along_trace(self):
        pattern = Unstructured(3)
        ctx, M0 = self._setup(pattern)
        ref, _ = fw_solve(ctx, SolverConfig(200000, pattern, trace_every=0), M0)
        best = loss(ctx, ref)
        scale = ctx.dense_loss()
        _, trace = fw_solve(ctx, SolverConfig(300, pattern, trace_every=7), M0)
        for r in trace.records:
            assert r.loss - best <= r.gap + 1e-9 * scale

    def test_zero_budget(self):
        ctx, _ = self._setup()
        M, _ = fw_solve(ctx, SolverConfig(10, Unstructured(0)), np.zeros((2, 4)))
        assert not np.any(M.values)


class TestFixed:
    def _ctx(self, shape=(4, 8), seed=11):
        ctx, W, X = make_ctx(*shape, 16, seed, outlier_cols=1, outlier_scale=5.0)
        return ctx, wanda_scores(W, ctx.G)

    @pytest.mark.parametrize("pattern", [Unstructured(13), PerRow(3), NM(4, 2)])
    def test_alpha_one_is_saliency_mask(self, pattern):
        ctx, S = self._ctx()
        mask, _ = fw_solve_fixed(ctx, SolverConfig(50, pattern, alpha=1.0), S)
        np.testing.assert_array_equal(mask.values, saliency_mask(S, pattern).values)

    @pytest.mark.parametrize("pattern", [Unstructured(13), PerRow(3), NM(4, 2)])
    def test_alpha_zero_is_threshold_of_plain_fw(self, pattern):
        ctx, S = self._ctx()
        cfg = SolverConfig(60, pattern, alpha=0.0)
        mask, _ = fw_solve_fixed(ctx, cfg, S)
        M, _ = fw_solve(ctx, cfg, saliency_mask(S, pattern))
        np.testing.assert_array_equal(mask.values, threshold_topk(M).values)

    @pytest.mark.parametrize("alpha", [0.0, 0.25, 0.5, 0.9, 1.0])
    @pytest.mark.parametrize("merge", [True, False])
    @pytest.mark.parametrize("pattern", [Unstructured(13), PerRow(3), NM(4, 2)])
    def test_exact_budget_contains_fixed(self, alpha, merge, pattern):
        ctx, S = self._ctx()
        cfg = SolverConfig(80, pattern, alpha=alpha, merge_fixed_into_iterate=merge)
        res = fw_solve_fixed_full(ctx, cfg, S)
        assert satisfies_pattern(res.mask.values, pattern)
        assert res.mask.count == pattern.budget(ctx.shape)
        assert np.all(res.mask.values[res.fixed == 1] == 1)
        kb = pattern.group_budget(ctx.shape)
        assert res.k_keep == int(np.floor(kb * alpha + 1e-9))
        assert pattern.groups(res.fixed).sum(axis=1).max() == res.k_keep

    def test_split_budget(self):
        assert split_budget(10, 0.7) == (7, 3)
        assert split_budget(10, 0.3) == (3, 7)
        assert split_budget(7, 0.5) == (3, 4)
        assert split_budget(100, 0.29) == (29, 71)

    def test_custom_warmstart(self):
        ctx, S = self._ctx()
        pattern = PerRow(3)
        warm = BinaryMask(np.tile([1.0, 1, 1, 0, 0, 0, 0, 0], (4, 1)), pattern)
        res = fw_solve_fixed_full(ctx, SolverConfig(0, pattern, alpha=0.0, warmstart=warm), S)
        np.testing.assert_array_equal(res.mask.values, warm.values)

    def test_trace_reports_effective_mask(self):
        ctx, S = self._ctx()
        pattern = Unstructured(13)
        res = fw_solve_fixed_full(ctx, SolverConfig(40, pattern, alpha=0.5, trace_every=40), S)
        last = res.trace.records[-1]
        assert last.step == 40
        assert last.thresholded_loss == pytest.approx(loss(ctx, res.mask), rel=1e-12)
