"""Adaptation backends for the samplers.

Two interchangeable backends estimate the proposal scaling matrix from the
chain history. ``CovarianceAdapter`` maintains a dense Cholesky factor of the
running empirical covariance through rank-one updates. ``PrecisionAdapter``
maintains a sparse Cholesky factor of the precision matrix by running one
least-squares regression per coordinate onto its regressor set, with
Sherman-Morrison updates of the per-row Gram inverses.

Both expose the same linear maps so the transition kernels never need to know
which backend they run on:

- ``whiten(g)``       -> w with ||w||^2 = g' S g
- ``sample_noise(w)`` -> the matching colouring map; Cov(sample_noise(z)) = S
- ``precondition_gradient(g)`` -> S g

where S is the backend's implicit proposal covariance. Until ``warmup``
samples have been absorbed all three are the identity.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import FactorizationError
from .sparse import (
    DenseSymMatrix,
    Permutation,
    SparseLowerTriangular,
    chol_rank1_update,
    solve_lower,
    solve_lower_transpose,
)

_FORMAT_VERSION = 1


def mean_update(mean, x, i):
    """Running-mean recursion: (i/(i+1)) * mean + (1/(i+1)) * x."""
    w = 1.0 / (i + 1.0)
    return (1.0 - w) * np.asarray(mean, dtype=np.float64) + w * np.asarray(x, dtype=np.float64)


@dataclass
class RowRegressionState:
    """Read-only view of one row's sufficient statistics."""

    j: int
    indices: np.ndarray
    gram: DenseSymMatrix
    gram_inv: DenseSymMatrix
    cross: np.ndarray  # over indices + [j]; last entry is the running variance of j


class CovarianceAdapter:
    """Empirical-covariance backend holding a dense lower factor.

    The maintained matrix follows the running-average recursion
    M_i = (i/(i+1)) M_{i-1} + (1/(i+1)) (x - m_i)(x - m_i)' with the mean
    updated first; only the factor is stored. Breakdowns are repaired by a
    ridged dense refactorization.
    """

    kind = "covariance"

    def __init__(self, dim, warmup=100, ridge_scale=1e-6):
        self.dim = int(dim)
        self.warmup = int(warmup)
        self.ridge_scale = float(ridge_scale)
        self.count = 0
        self.mean = np.zeros(self.dim)
        self.chol_cov = np.sqrt(1e-12) * np.eye(self.dim)
        self.ridge_events = 0

    def cov_update(self, x):
        """Absorb one sample: mean first, then the factor with the new mean."""
        x = np.asarray(x, dtype=np.float64)
        self.mean = mean_update(self.mean, x, self.count)
        v = x - self.mean
        decay = self.count / (self.count + 1.0)
        try:
            self.chol_cov = chol_rank1_update(self.chol_cov, decay, v)
        except FactorizationError:
            self._refactor(decay, v)
        self.count += 1

    update = cov_update

    def _refactor(self, decay, v):
        m = decay * (self.chol_cov @ self.chol_cov.T) + (1.0 - decay) * np.outer(v, v)
        ridge = max(self.ridge_scale * np.trace(m) / self.dim, 1e-12)
        for _ in range(8):
            try:
                self.chol_cov = np.linalg.cholesky(m + ridge * np.eye(self.dim))
                self.ridge_events += 1
                return
            except np.linalg.LinAlgError:
                ridge *= 10.0
        raise FactorizationError("covariance factor could not be repaired")

    def covariance(self):
        """Reconstructed maintained matrix (empirical covariance plus decayed ridge)."""
        return self.chol_cov @ self.chol_cov.T

    @property
    def active(self):
        return self.count >= self.warmup

    def whiten(self, g):
        return self.chol_cov.T @ g if self.active else np.asarray(g, dtype=np.float64)

    def sample_noise(self, w):
        return self.chol_cov @ w if self.active else np.asarray(w, dtype=np.float64)

    def precondition_gradient(self, g):
        return self.sample_noise(self.whiten(g))

    def proposal_covariance(self):
        return self.covariance() if self.active else np.eye(self.dim)

    def state_dict(self):
        return {
            "format_version": np.int64(_FORMAT_VERSION),
            "kind": np.bytes_(self.kind),
            "dim": np.int64(self.dim),
            "warmup": np.int64(self.warmup),
            "count": np.int64(self.count),
            "mean": self.mean,
            "chol_cov": self.chol_cov,
            "ridge_scale": np.float64(self.ridge_scale),
        }

    @classmethod
    def from_state_dict(cls, d):
        out = cls(int(d["dim"]), warmup=int(d["warmup"]), ridge_scale=float(d["ridge_scale"]))
        out.count = int(d["count"])
        out.mean = np.array(d["mean"], dtype=np.float64)
        out.chol_cov = np.array(d["chol_cov"], dtype=np.float64)
        return out

    def save(self, path):
        np.savez(path, **self.state_dict())

    @classmethod
    def load(cls, path):
        with np.load(path) as d:
            return cls.from_state_dict(d)


class PrecisionAdapter:
    """Precision backend: online regression estimate of the precision factor.

    Row j is regressed onto its regressor set A_j (indices after j in the
    permuted order). Each sample updates the running cross-covariances and,
    through Sherman-Morrison, the inverse of each row's Gram block; the factor
    is reassembled from the regression coefficients and conditional variances
    on every update. While a Gram block is still rank-deficient its inverse is
    recomputed densely with a small ridge; the row switches to pure
    Sherman-Morrison once the exact block becomes invertible, after which the
    maintained inverse tracks the batch statistics to rounding error.
    """

    kind = "precision"

    def __init__(self, dim, regressor_sets=None, perm=None, warmup=100):
        self.dim = int(dim)
        self.warmup = int(warmup)
        self.perm = perm if perm is not None else Permutation.identity(self.dim)
        if regressor_sets is None:
            regressor_sets = [np.arange(j + 1, self.dim) for j in range(self.dim)]
        if len(regressor_sets) != self.dim:
            raise ValueError("need one regressor set per coordinate")

        self.a_ptr = np.zeros(self.dim + 1, dtype=np.int64)
        rows = []
        for j, r in enumerate(regressor_sets):
            r = np.asarray(sorted(int(i) for i in r), dtype=np.int64)
            if r.size and (r[0] <= j or r[-1] >= self.dim):
                raise ValueError(f"regressor set {j} must lie in ({j}, dim)")
            rows.append(r)
            self.a_ptr[j + 1] = self.a_ptr[j] + r.size
        self.a_idx = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
        if self.a_idx.size == 0:
            self.a_idx = np.zeros(0, dtype=np.int64)

        self.gram_ptr = np.zeros(self.dim + 1, dtype=np.int64)
        for j in range(self.dim):
            m = self.a_ptr[j + 1] - self.a_ptr[j]
            self.gram_ptr[j + 1] = self.gram_ptr[j] + m * m
        self.gram = np.zeros(self.gram_ptr[-1])
        self.gram_inv = np.zeros(self.gram_ptr[-1])
        for j in range(self.dim):
            m = self.a_ptr[j + 1] - self.a_ptr[j]
            g0 = self.gram_ptr[j]
            for k in range(m):
                self.gram_inv[g0 + k * m + k] = 1.0 / _kernels.GRAM_RIDGE
        self.mode = np.zeros(self.dim, dtype=np.uint8)
        self.cross_off = np.zeros(self.a_ptr[-1])
        self.diag_var = np.ones(self.dim)
        self.dvals = np.ones(self.dim)
        self.max_m = int(max((self.a_ptr[1:] - self.a_ptr[:-1]).max(), 1)) if self.dim else 1

        indptr = np.zeros(self.dim + 1, dtype=np.int64)
        for j in range(self.dim):
            indptr[j + 1] = indptr[j] + 1 + (self.a_ptr[j + 1] - self.a_ptr[j])
        rowind = np.empty(indptr[-1], dtype=np.int64)
        values = np.zeros(indptr[-1])
        for j in range(self.dim):
            p0 = indptr[j]
            rowind[p0] = j
            rowind[p0 + 1 : indptr[j + 1]] = self.a_idx[self.a_ptr[j] : self.a_ptr[j + 1]]
            values[p0] = 1.0
        self.L = SparseLowerTriangular(self.dim, indptr, rowind, values)

        self.count = 0
        self.mean = np.zeros(self.dim)
        self.clamp_events = 0
        self.degenerate_events = 0

    @classmethod
    def from_structure(cls, perm, regressor_sets, warmup=100):
        return cls(len(regressor_sets), regressor_sets=regressor_sets, perm=perm, warmup=warmup)

    def regressor_sets(self):
        return [self.a_idx[self.a_ptr[j] : self.a_ptr[j + 1]].copy() for j in range(self.dim)]

    def update(self, x):
        """Absorb one raw sample: mean first, then the factor with the new mean."""
        x = np.asarray(x, dtype=np.float64)
        self.mean = mean_update(self.mean, x, self.count)
        self.l_update(x - self.mean)

    def l_update(self, x_centered):
        """Feed one centered sample (original coordinates) to the row recursions."""
        xp = self.perm.permute(np.asarray(x_centered, dtype=np.float64))
        self.count += 1
        min_d, clamps, degens = _kernels.row_regression_update(
            xp,
            self.count,
            self.a_ptr,
            self.a_idx,
            self.cross_off,
            self.diag_var,
            self.gram_ptr,
            self.gram,
            self.gram_inv,
            self.mode,
            self.dvals,
            self.L.indptr,
            self.L.values,
            self.max_m,
        )
        self.clamp_events += clamps
        self.degenerate_events += degens
        assert min_d > 0.0, "conditional variance lost positivity"

    def row_state(self, j):
        s, e = self.a_ptr[j], self.a_ptr[j + 1]
        m = e - s
        g = self.gram[self.gram_ptr[j] : self.gram_ptr[j + 1]].reshape(m, m)
        gi = self.gram_inv[self.gram_ptr[j] : self.gram_ptr[j + 1]].reshape(m, m)
        cross = np.concatenate([self.cross_off[s:e], [self.diag_var[j]]])
        return RowRegressionState(
            j=j,
            indices=self.a_idx[s:e].copy(),
            gram=DenseSymMatrix.from_full(g),
            gram_inv=DenseSymMatrix.from_full(gi),
            cross=cross,
        )

    @property
    def active(self):
        return self.count >= self.warmup

    def whiten(self, g):
        if not self.active:
            return np.asarray(g, dtype=np.float64)
        return solve_lower(self.L, self.perm.permute(g))

    def sample_noise(self, w):
        if not self.active:
            return np.asarray(w, dtype=np.float64)
        return self.perm.unpermute(solve_lower_transpose(self.L, w))

    def precondition_gradient(self, g):
        return self.sample_noise(self.whiten(g))

    def precision_matrix(self):
        """Dense L L^T in original coordinates (desk-scale diagnostics)."""
        a = self.L.to_dense()
        q_perm = a @ a.T
        inv = self.perm.inverse
        return q_perm[np.ix_(inv, inv)]

    def proposal_covariance(self):
        if not self.active:
            return np.eye(self.dim)
        a = self.L.to_dense()
        linv = np.linalg.inv(a)
        cov_perm = linv.T @ linv
        inv = self.perm.inverse
        return cov_perm[np.ix_(inv, inv)]

    def state_dict(self):
        return {
            "format_version": np.int64(_FORMAT_VERSION),
            "kind": np.bytes_(self.kind),
            "dim": np.int64(self.dim),
            "warmup": np.int64(self.warmup),
            "count": np.int64(self.count),
            "mean": self.mean,
            "perm_forward": self.perm.forward,
            "a_ptr": self.a_ptr,
            "a_idx": self.a_idx,
            "cross_off": self.cross_off,
            "diag_var": self.diag_var,
            "gram": self.gram,
            "gram_inv": self.gram_inv,
            "mode": self.mode,
            "dvals": self.dvals,
            "L_values": self.L.values,
            "clamp_events": np.int64(self.clamp_events),
            "degenerate_events": np.int64(self.degenerate_events),
        }

    @classmethod
    def from_state_dict(cls, d):
        dim = int(d["dim"])
        a_ptr = np.array(d["a_ptr"], dtype=np.int64)
        a_idx = np.array(d["a_idx"], dtype=np.int64)
        sets = [a_idx[a_ptr[j] : a_ptr[j + 1]] for j in range(dim)]
        out = cls(
            dim,
            regressor_sets=sets,
            perm=Permutation(np.array(d["perm_forward"], dtype=np.int64)),
            warmup=int(d["warmup"]),
        )
        out.count = int(d["count"])
        out.mean = np.array(d["mean"], dtype=np.float64)
        out.cross_off = np.array(d["cross_off"], dtype=np.float64)
        out.diag_var = np.array(d["diag_var"], dtype=np.float64)
        out.gram = np.array(d["gram"], dtype=np.float64)
        out.gram_inv = np.array(d["gram_inv"], dtype=np.float64)
        out.mode = np.array(d["mode"], dtype=np.uint8)
        out.dvals = np.array(d["dvals"], dtype=np.float64)
        out.L.values[:] = np.array(d["L_values"], dtype=np.float64)
        out.clamp_events = int(d["clamp_events"])
        out.degenerate_events = int(d["degenerate_events"])
        return out

    def save(self, path):
        np.savez(path, **self.state_dict())

    @classmethod
    def load(cls, path):
        with np.load(path) as d:
            return cls.from_state_dict(d)


def load_adapter(path):
    """Load either backend from an adapter ``save`` file or a run checkpoint."""
    with np.load(path) as d:
        if "kind" in d.files:
            state = {k: d[k] for k in d.files}
        elif "adapt_kind" in d.files:
            state = {k[6:]: d[k] for k in d.files if k.startswith("adapt_")}
        else:
            raise ValueError(f"{path} is not an adaptation checkpoint")
    kind = bytes(state["kind"]).decode()
    if kind == "covariance":
        return CovarianceAdapter.from_state_dict(state)
    if kind == "precision":
        return PrecisionAdapter.from_state_dict(state)
    raise ValueError(f"unknown adapter kind {kind!r}")
