"""Adaptation backends: recursions, factor estimates, transforms, checkpoints."""

import numpy as np
import pytest

from precmc.adapt import CovarianceAdapter, PrecisionAdapter, load_adapter, mean_update
from precmc.sparse import Permutation, symbolic_cholesky, SparsityPattern
from precmc.structure import build_regressor_sets

from conftest import batch_moment_matrix, random_spd


class TestMeanUpdate:
    def test_first_sample(self):
        v = np.array([3.0, -1.0])
        assert np.array_equal(mean_update(np.zeros(2), v, 0), v)

    def test_hand_case(self):
        out = mean_update(np.array([2.0, 2.0]), np.array([4.0, 0.0]), 1)
        assert np.allclose(out, [3.0, 1.0])

    def test_matches_batch_mean(self):
        rng = np.random.default_rng(0)
        xs = rng.standard_normal((137, 4))
        m = np.zeros(4)
        for i, x in enumerate(xs):
            m = mean_update(m, x, i)
        batch = xs.mean(axis=0)
        assert np.linalg.norm(m - batch) / np.linalg.norm(batch) < 1e-12


def dense_cov_recursion(samples, dim):
    """Dense oracle for the covariance recursion (mean first, then outer product)."""
    mean = np.zeros(dim)
    m = np.zeros((dim, dim))
    for i, x in enumerate(samples):
        mean = (i / (i + 1.0)) * mean + x / (i + 1.0)
        v = x - mean
        m = (i / (i + 1.0)) * m + np.outer(v, v) / (i + 1.0)
    return m


class TestCovarianceAdapter:
    def test_first_two_samples_zero_init(self):
        ad = CovarianceAdapter(2)
        samples = [np.array([1.0, 0.0]), np.array([-1.0, 0.0])]
        for x in samples:
            ad.update(x)
        oracle = dense_cov_recursion(samples, 2)
        assert np.allclose(ad.covariance(), oracle, atol=1e-9)
        assert ad.ridge_events >= 1  # zero-init first step needs the ridge repair

    def test_sample_at_mean_rescales_only(self):
        rng = np.random.default_rng(1)
        ad = CovarianceAdapter(3)
        for _ in range(20):
            ad.update(rng.standard_normal(3))
        before = ad.covariance()
        i = ad.count
        ad.update(ad.mean.copy())
        assert np.allclose(ad.covariance(), before * i / (i + 1.0), atol=1e-12)

    def test_matches_dense_recursion(self):
        rng = np.random.default_rng(2)
        samples = [rng.standard_normal(3) for _ in range(200)]
        ad = CovarianceAdapter(3)
        for x in samples:
            ad.update(x)
        oracle = dense_cov_recursion(samples, 3)
        assert np.linalg.norm(ad.covariance() - oracle) / np.linalg.norm(oracle) < 1e-9

    def test_converges_to_population_covariance(self):
        rng = np.random.default_rng(3)
        sig = np.array([[2.0, 1.0], [1.0, 2.0]])
        c = np.linalg.cholesky(sig)
        ad = CovarianceAdapter(2)
        for _ in range(500):
            ad.update(c @ rng.standard_normal(2))
        assert np.linalg.norm(ad.covariance() - sig) < 0.3

    def test_transforms_identity_before_warmup(self):
        ad = CovarianceAdapter(3, warmup=10)
        g = np.array([1.0, 2.0, 3.0])
        assert np.array_equal(ad.whiten(g), g)
        assert np.array_equal(ad.sample_noise(g), g)
        assert np.array_equal(ad.precondition_gradient(g), g)
        assert np.array_equal(ad.proposal_covariance(), np.eye(3))

    def test_transforms_consistent_after_warmup(self):
        rng = np.random.default_rng(4)
        ad = CovarianceAdapter(3, warmup=5)
        for _ in range(50):
            ad.update(rng.standard_normal(3))
        g = rng.standard_normal(3)
        sig = ad.covariance()
        assert np.allclose(ad.precondition_gradient(g), sig @ g, atol=1e-12)
        w = ad.whiten(g)
        assert np.isclose(w @ w, g @ sig @ g)

    def test_checkpoint_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        ad = CovarianceAdapter(4, warmup=7)
        for _ in range(30):
            ad.update(rng.standard_normal(4))
        path = tmp_path / "cov.npz"
        ad.save(path)
        back = load_adapter(path)
        assert isinstance(back, CovarianceAdapter)
        x = rng.standard_normal(4)
        ad.update(x)
        back.update(x)
        assert np.array_equal(ad.chol_cov, back.chol_cov)
        assert np.array_equal(ad.mean, back.mean)


class TestPrecisionAdapterFullPattern:
    def test_scalar_case(self):
        ad = PrecisionAdapter(1)
        for x in (2.0, -2.0, 2.0, -2.0):
            ad.l_update(np.array([x]))
        # empirical variance 4 -> factor 1/2
        assert np.allclose(ad.L.to_dense(), [[0.5]])

    def test_worked_two_by_two(self):
        # samples (2,1) and (0, sqrt 3) give batch moment matrix [[2,1],[1,2]]
        ad = PrecisionAdapter(2)
        pair = [np.array([2.0, 1.0]), np.array([0.0, np.sqrt(3.0)])]
        for _ in range(4):
            for x in pair:
                ad.l_update(x)
        expect = np.array(
            [[1.0 / np.sqrt(1.5), 0.0], [-0.5 / np.sqrt(1.5), 1.0 / np.sqrt(2.0)]]
        )
        assert np.allclose(ad.L.to_dense(), expect, atol=1e-10)
        sig = np.array([[2.0, 1.0], [1.0, 2.0]])
        L = ad.L.to_dense()
        assert np.allclose(L @ L.T, np.linalg.inv(sig), atol=1e-10)

    @pytest.mark.parametrize("n", [5, 10, 20])
    def test_matches_batch_inverse(self, n):
        rng = np.random.default_rng(n)
        xs = rng.standard_normal((200, n))
        ad = PrecisionAdapter(n)
        for x in xs:
            ad.l_update(x)
        q = np.linalg.inv(batch_moment_matrix(xs))
        L = ad.L.to_dense()
        assert np.linalg.norm(L @ L.T - q) / np.linalg.norm(q) < 1e-6

    def test_row_state_gram_inverse_tracks_batch(self):
        rng = np.random.default_rng(6)
        n = 6
        xs = rng.standard_normal((100, n))
        ad = PrecisionAdapter(n)
        for x in xs:
            ad.l_update(x)
        for j in range(n - 1):
            row = ad.row_state(j)
            idx = row.indices
            gram_batch = batch_moment_matrix(xs[:, idx])
            inv = np.linalg.inv(gram_batch)
            err = np.linalg.norm(row.gram_inv.full() - inv) / np.linalg.norm(inv)
            assert err < 1e-6
            assert np.allclose(row.gram.full(), gram_batch, atol=1e-12)
            assert np.isclose(row.cross[-1], batch_moment_matrix(xs[:, [j]])[0, 0])


class TestPrecisionAdapterSparse:
    def test_diagonal_sets_estimate_variances(self):
        rng = np.random.default_rng(7)
        scales = np.array([1.0, 2.0, 0.5])
        sets = [np.array([], dtype=np.int64) for _ in range(3)]
        ad = PrecisionAdapter(3, regressor_sets=sets)
        xs = rng.standard_normal((4000, 3)) * scales
        for x in xs:
            ad.l_update(x)
        L = ad.L.to_dense()
        assert np.allclose(np.diag(L) ** 2, 1.0 / batch_moment_matrix(xs).diagonal().round(12), rtol=1e-10)
        assert np.count_nonzero(L - np.diag(np.diag(L))) == 0

    def test_sparse_consistency_error_decreases(self):
        # AR(1) precision; regressor sets from the symbolic factor
        rng = np.random.default_rng(8)
        n = 12
        q = np.eye(n) * 1.5
        for i in range(n - 1):
            q[i, i + 1] = q[i + 1, i] = -0.6
        c = np.linalg.cholesky(np.linalg.inv(q))
        pattern = SparsityPattern.from_matrix(q)
        sets = [r for r in symbolic_cholesky(pattern).rows]
        errs = []
        for n_samp in (500, 5000):
            ad = PrecisionAdapter(n, regressor_sets=sets)
            for _ in range(n_samp):
                ad.l_update(c @ rng.standard_normal(n))
            L = ad.L.to_dense()
            errs.append(np.linalg.norm(L @ L.T - q) / np.linalg.norm(q))
        assert errs[1] < errs[0]
        assert errs[1] < 0.2

    def test_permuted_transforms_match_unpermuted(self):
        rng = np.random.default_rng(9)
        n = 5
        xs = rng.standard_normal((60, n))
        plain = PrecisionAdapter(n, warmup=0)
        forward = rng.permutation(n)
        perm = Permutation(forward)
        inv_pos = perm.inverse
        sets_perm = [np.arange(j + 1, n) for j in range(n)]
        permuted = PrecisionAdapter(n, regressor_sets=sets_perm, perm=perm, warmup=0)
        for x in xs:
            plain.l_update(x)
            permuted.l_update(x)
        g = rng.standard_normal(n)
        assert np.allclose(
            plain.precondition_gradient(g), permuted.precondition_gradient(g), atol=1e-10
        )
        assert np.allclose(
            plain.proposal_covariance(), permuted.proposal_covariance(), atol=1e-10
        )

    def test_clamp_flags_degenerate_collinear_input(self):
        ad = PrecisionAdapter(2)
        rng = np.random.default_rng(10)
        for _ in range(50):
            v = rng.standard_normal()
            ad.l_update(np.array([v, v]))  # exactly collinear coordinates
        assert ad.clamp_events > 0
        assert np.all(ad.L.diagonal() > 0)  # factor still invertible

    def test_update_centers_with_new_mean(self):
        rng = np.random.default_rng(11)
        xs = rng.standard_normal((150, 3)) + np.array([5.0, -2.0, 1.0])
        ad = PrecisionAdapter(3)
        mean = np.zeros(3)
        shadow = PrecisionAdapter(3)
        for i, x in enumerate(xs):
            ad.update(x)
            mean = mean_update(mean, x, i)
            shadow.l_update(x - mean)
        assert np.allclose(ad.mean, xs.mean(axis=0), atol=1e-12)
        assert np.array_equal(ad.L.values, shadow.L.values)

    def test_transforms_identity_before_warmup(self):
        ad = PrecisionAdapter(3, warmup=1000)
        rng = np.random.default_rng(12)
        for _ in range(10):
            ad.l_update(rng.standard_normal(3))
        g = np.array([1.0, -2.0, 0.5])
        assert np.array_equal(ad.whiten(g), g)
        assert np.array_equal(ad.sample_noise(g), g)
        assert np.array_equal(ad.proposal_covariance(), np.eye(3))

    def test_worked_case_preconditions_gradient(self):
        ad = PrecisionAdapter(2, warmup=0)
        pair = [np.array([2.0, 1.0]), np.array([0.0, np.sqrt(3.0)])]
        for _ in range(4):
            for x in pair:
                ad.l_update(x)
        sig = np.array([[2.0, 1.0], [1.0, 2.0]])
        g = np.array([0.3, -1.2])
        assert np.allclose(ad.precondition_gradient(g), sig @ g, atol=1e-9)

    def test_rejects_bad_regressor_sets(self):
        with pytest.raises(ValueError):
            PrecisionAdapter(3, regressor_sets=[[0], [], []])
        with pytest.raises(ValueError):
            PrecisionAdapter(3, regressor_sets=[[1], []])

    def test_checkpoint_round_trip(self, tmp_path):
        rng = np.random.default_rng(13)
        edges = SparsityPattern.from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)])
        perm, sets = build_regressor_sets(edges)
        ad = PrecisionAdapter(5, regressor_sets=sets, perm=perm, warmup=3)
        for _ in range(40):
            ad.update(rng.standard_normal(5))
        path = tmp_path / "prec.npz"
        ad.save(path)
        back = load_adapter(path)
        assert isinstance(back, PrecisionAdapter)
        assert np.array_equal(back.perm.forward, ad.perm.forward)
        assert [s.tolist() for s in back.regressor_sets()] == [
            s.tolist() for s in ad.regressor_sets()
        ]
        x = rng.standard_normal(5)
        ad.update(x)
        back.update(x)
        assert np.array_equal(ad.L.values, back.L.values)
        assert np.array_equal(ad.gram_inv, back.gram_inv)


class TestDiminishingAdaptation:
    def test_transform_changes_decay_like_one_over_i(self):
        rng = np.random.default_rng(14)
        n = 4
        c = np.linalg.cholesky(random_spd(rng, n))
        probe = rng.standard_normal(n)
        ad = PrecisionAdapter(n, warmup=0)
        logs = []
        prev = None
        for i in range(1, 4001):
            ad.l_update(c @ rng.standard_normal(n))
            if i >= 100:
                cur = ad.precondition_gradient(probe)
                if prev is not None:
                    delta = np.linalg.norm(cur - prev)
                    if delta > 0:
                        logs.append((np.log(i), np.log(delta)))
                prev = cur
        xs = np.array([p[0] for p in logs])
        ys = np.array([p[1] for p in logs])
        slope = np.polyfit(xs, ys, 1)[0]
        assert slope <= -0.9
