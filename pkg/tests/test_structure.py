"""Dependence-graph discovery and regressor-set construction."""

import numpy as np
import pytest
import scipy.sparse as sp

from precmc.errors import StructureEstimationError
from precmc.sparse import SparsityPattern
from precmc.structure import (
    build_regressor_sets,
    estimate_edges,
    read_edges,
    read_perm,
    write_edges,
    write_perm,
)
from precmc.targets import GaussianTarget, build_spline


def ar1_precision(n, rho=0.5):
    q = sp.diags(
        [[-rho] * (n - 1), [1.0 + rho * rho] * n, [-rho] * (n - 1)], [-1, 0, 1]
    )
    return q.tocsr()


def pattern_of(q):
    return SparsityPattern.from_matrix(q)


class TestEstimateEdges:
    def test_ar1_recovers_chain(self):
        target = GaussianTarget(ar1_precision(6))
        edges = estimate_edges(target)
        assert edges.edges() == [(k, k + 1) for k in range(5)]

    def test_diagonal_precision_empty(self):
        target = GaussianTarget(sp.identity(7, format="csr"))
        assert estimate_edges(target).edge_count == 0

    def test_gaussian_conservative_at_any_tolerance(self):
        # sparse matvecs reproduce absent couplings exactly, so even tol = 0
        # stays inside the true pattern
        from precmc.targets import lattice_laplacian

        q = (lattice_laplacian(4) + sp.identity(16)).tocsr()
        target = GaussianTarget(q)
        true = pattern_of(q)
        for tol in (0.0, 1e-12, 1e-8, 1e-3):
            est = estimate_edges(target, tol=tol)
            assert set(est.edges()) <= set(true.edges())
        assert set(estimate_edges(target).edges()) == set(true.edges())

    def test_requires_probe_points(self):
        target = GaussianTarget(np.eye(2))
        with pytest.raises(StructureEstimationError):
            estimate_edges(target, probe_points=[])

    def test_skips_bad_probe_with_warning(self):
        class Patchy(GaussianTarget):
            def grad_log_density(self, x):
                if x[0] > 10.0:
                    return np.full(self.dim, np.nan)
                return super().grad_log_density(x)

        target = Patchy(ar1_precision(4))
        good = np.zeros(4)
        bad = np.full(4, 99.0)
        with pytest.warns(UserWarning):
            edges = estimate_edges(target, probe_points=[bad, good])
        assert edges.edges() == [(k, k + 1) for k in range(3)]

    def test_all_probes_bad_raises(self):
        class Broken(GaussianTarget):
            def grad_log_density(self, x):
                return np.full(self.dim, np.nan)

        with pytest.warns(UserWarning), pytest.raises(StructureEstimationError):
            estimate_edges(Broken(np.eye(3)), probe_points=[np.zeros(3)])


def spline_expected_edges(model):
    """Hand-derived dependency graph of the spline posterior."""
    n = model.n_basis
    ata = (model.a_x.T @ model.a_x).toarray() != 0
    expected = set()
    for i in range(n):
        for j in range(i + 1, n):
            if j - i <= 2:
                expected.add((i, j))  # x-x through the random-walk precision
                expected.add((n + i, n + j))  # v-v likewise
    for i in range(n):
        for j in range(n):
            if ata[i, j]:
                a, b = sorted((i, n + j))
                expected.add((a, b))  # x-v through shared observations
    for i in range(n):
        expected.add((i, 2 * n))  # x - log tau_x
        expected.add((n + i, 2 * n + 1))  # v - log tau_v
    return expected


class TestSplineStructure:
    def test_recovered_subset_and_equality_at_generic_probe(self):
        model = build_spline(6, "synthetic", seed=1, n_points=40)
        expected = spline_expected_edges(model)
        est = estimate_edges(model, n_probes=3, probe_seed=4)
        assert set(est.edges()) <= expected
        assert set(est.edges()) == expected


class TestBuildRegressorSets:
    def test_tridiagonal_natural_order(self):
        edges = SparsityPattern.from_edges(5, [(k, k + 1) for k in range(4)])
        perm, sets = build_regressor_sets(edges)
        # any band-preserving order keeps |A_j| <= 1 with empty last set
        assert all(len(s) <= 1 for s in sets)
        assert len(sets[-1]) == 0
        assert sum(len(s) for s in sets) == 4

    def test_empty_edges_all_empty(self):
        edges = SparsityPattern(4, [[] for _ in range(4)])
        perm, sets = build_regressor_sets(edges)
        assert all(len(s) == 0 for s in sets)

    def test_star_hub_first_input(self):
        edges = SparsityPattern.from_edges(6, [(0, j) for j in range(1, 6)])
        perm, sets = build_regressor_sets(edges)
        hub_pos = int(perm.inverse[0])
        assert hub_pos == 5
        for j in range(5):
            assert sets[j].tolist() == [hub_pos]
        assert sets[5].tolist() == []

    def test_rejects_factor_pattern(self):
        from precmc.sparse import symbolic_cholesky

        factor = symbolic_cholesky(SparsityPattern.from_edges(3, [(0, 1), (1, 2)]))
        with pytest.raises(ValueError):
            build_regressor_sets(factor)


class TestStructureFiles:
    def test_edge_file_round_trip(self, tmp_path):
        edges = SparsityPattern.from_edges(6, [(0, 3), (1, 2), (4, 5)])
        path = tmp_path / "edges.txt"
        write_edges(path, edges)
        back = read_edges(path)
        assert back.n == 6
        assert back.edges() == edges.edges()
        lines = path.read_text().strip().splitlines()
        assert lines[1:] == ["0 3", "1 2", "4 5"]

    def test_perm_file_round_trip(self, tmp_path):
        from precmc.sparse import Permutation

        perm = Permutation([2, 0, 3, 1])
        path = tmp_path / "perm.txt"
        write_perm(path, perm)
        back = read_perm(path)
        assert np.array_equal(back.forward, perm.forward)

    def test_bad_edge_file_raises(self, tmp_path):
        path = tmp_path / "edges.txt"
        path.write_text("0 1 2\n")
        with pytest.raises(ValueError):
            read_edges(path)
