import numpy as np
import pytest

from maskopt import NM, PerRow, Unstructured
from maskopt.baselines import (greedy_single_weight_mask, magnitude_scores,
                               reconstruction_loss, ria_rescaled, ria_scores,
                               saliency_mask, sparsegpt_greedy_row,
                               sparsegpt_mask, wanda_scores)

from oracles import greedy_ls_prune


def _gram(rng, d, B):
    X = rng.standard_normal((d, B))
    return X @ X.T, X


class TestScores:
    def test_wanda_example(self):
        np.testing.assert_array_equal(wanda_scores([[2.0, -1.0]], np.diag([1.0, 9.0])), [[2.0, 3.0]])

    def test_wanda_zero(self, rng):
        G, _ = _gram(rng, 3, 5)
        assert not np.any(wanda_scores(np.zeros((2, 3)), G))

    def test_wanda_squared(self, rng):
        W = rng.standard_normal((4, 5))
        G, X = _gram(rng, 5, 7)
        S = wanda_scores(W, G)
        np.testing.assert_allclose(S ** 2, W ** 2 * np.diag(G)[None, :], rtol=1e-12)
        # ||X_j||_2 is the activation norm
        np.testing.assert_allclose(S, np.abs(W) * np.linalg.norm(X, axis=1), rtol=1e-12)

    def test_wanda_negative_diagonal(self):
        with pytest.raises(ArithmeticError):
            wanda_scores(np.ones((1, 2)), np.diag([1.0, -1.0]))

    def test_ria_scalar(self):
        for w in (-3.0, 0.5, 7.0):
            np.testing.assert_allclose(ria_scores([[w]], [[4.0]]), [[4.0]])

    def test_ria_zero_column(self, rng):
        W = rng.standard_normal((3, 4))
        W[:, 2] = 0.0
        G, _ = _gram(rng, 4, 6)
        S = ria_scores(W, G)
        assert np.all(np.isfinite(S))
        assert not np.any(S[:, 2])

    def test_ria_is_wanda_on_rescaled(self, rng):
        for _ in range(20):
            W = rng.standard_normal((3, 3))
            G, _ = _gram(rng, 3, 5)
            np.testing.assert_allclose(ria_scores(W, G), wanda_scores(ria_rescaled(W), G),
                                       rtol=0, atol=1e-12)

    def test_magnitude(self, rng):
        np.testing.assert_array_equal(magnitude_scores([[-2.0, 1.0]]), [[2.0, 1.0]])
        assert not np.any(magnitude_scores(np.zeros((2, 2))))
        W = rng.standard_normal((3, 3))
        np.testing.assert_array_equal(magnitude_scores(W), np.abs(W))


class TestSaliencyMask:
    def test_unstructured_example(self):
        M = saliency_mask([[3.0, 1.0], [2.0, 4.0]], Unstructured(2))
        np.testing.assert_array_equal(M.values, [[1, 0], [0, 1]])

    def test_full_rows(self, rng):
        assert np.all(saliency_mask(rng.random((3, 5)), PerRow(5)).values == 1)

    def test_nm_blockwise_sort(self, rng):
        S = rng.random((3, 8))
        M = saliency_mask(S, NM(4, 2)).values
        for i in range(3):
            for b in range(2):
                blk = S[i, 4 * b:4 * b + 4]
                keep = np.sort(np.argsort(-blk)[:2])
                np.testing.assert_array_equal(np.flatnonzero(M[i, 4 * b:4 * b + 4]), keep)

    def test_positive_scaling(self, rng):
        S = rng.random((4, 8))
        for p in (Unstructured(9), PerRow(3), NM(4, 1)):
            np.testing.assert_array_equal(saliency_mask(S * 2.0 ** 5, p).values,
                                          saliency_mask(S, p).values)


class TestGreedySingleWeight:
    def test_keep_all(self, rng):
        G, _ = _gram(rng, 5, 8)
        assert np.all(greedy_single_weight_mask(rng.standard_normal(5), G, 5) == 1)

    def test_example(self):
        np.testing.assert_array_equal(greedy_single_weight_mask([3.0, 0.1], np.eye(2), 1), [1, 0])

    def test_equals_wanda(self, rng):
        for _ in range(50):
            d = int(rng.integers(2, 12))
            k = int(rng.integers(0, d + 1))
            w = rng.standard_normal(d)
            G, _ = _gram(rng, d, 16)
            ref = saliency_mask(wanda_scores(w[None, :], G), PerRow(k)).values[0]
            np.testing.assert_array_equal(greedy_single_weight_mask(w, G, k), ref)

    def test_ties_match_wanda(self):
        w = np.array([1.0, 1.0, 1.0, 2.0])
        ref = saliency_mask(wanda_scores(w[None, :], np.eye(4)), PerRow(2)).values[0]
        np.testing.assert_array_equal(greedy_single_weight_mask(w, np.eye(4), 2), ref)


class TestSparseGPT:
    def test_diagonal_hessian(self, rng):
        w = rng.standard_normal(6)
        mask, what = sparsegpt_greedy_row(w, np.eye(6), 3, damping=0.0)
        keep = np.sort(np.argsort(-np.abs(w))[:3])
        np.testing.assert_array_equal(np.flatnonzero(mask), keep)
        np.testing.assert_allclose(what, w * mask, atol=1e-15)

    def test_keep_all(self, rng):
        G, _ = _gram(rng, 5, 9)
        w = rng.standard_normal(5)
        mask, what = sparsegpt_greedy_row(w, G, 5)
        assert np.all(mask == 1)
        np.testing.assert_array_equal(what, w)

    def test_against_from_scratch_least_squares(self, rng):
        for _ in range(10):
            w = rng.standard_normal(6)
            G, X = _gram(rng, 6, 20)
            mask, what = sparsegpt_greedy_row(w, G, 3, damping=0.0)
            ref_mask, ref_w, ref_err = greedy_ls_prune(w, G, 3)
            np.testing.assert_array_equal(mask, ref_mask)
            err = float(np.linalg.norm((what - w) @ X) ** 2)
            assert err == pytest.approx(ref_err, rel=1e-8)
            np.testing.assert_allclose(what, ref_w, rtol=1e-8, atol=1e-10)

    def test_reconstruction_never_hurts(self, rng):
        for _ in range(20):
            w = rng.standard_normal(8)
            G, _ = _gram(rng, 8, 12)
            mask, what = sparsegpt_greedy_row(w, G, 4)
            d_rec = what - w
            d_mask = w * mask - w
            scale = w @ G @ w
            assert d_rec @ G @ d_rec <= d_mask @ G @ d_mask + 1e-9 * scale

    def test_nm_block_variant(self, rng):
        W = rng.standard_normal((3, 8))
        G, _ = _gram(rng, 8, 12)
        mask, What = sparsegpt_mask(W, G, NM(4, 2))
        assert np.all(NM(4, 2).groups(mask.values).sum(axis=1) == 2)
        assert np.all(What[mask.values == 0] == 0)

    def test_unstructured_split(self, rng):
        W = rng.standard_normal((3, 5))
        G, _ = _gram(rng, 5, 9)
        mask, What = sparsegpt_mask(W, G, Unstructured(8))
        assert mask.count == 8
        np.testing.assert_array_equal(mask.values.sum(axis=1), [3, 3, 2])
        assert reconstruction_loss(W, What, G) >= 0
