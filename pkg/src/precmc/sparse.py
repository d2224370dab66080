"""Sparse and dense numerical kernels.

Structural pieces (adjacency patterns, fill-in analysis, fill-reducing
ordering) plus the small numeric primitives the adaptation backends are built
from: sparse triangular solves, Sherman-Morrison updates of a dense inverse,
and rank-one updates of a dense Cholesky factor.
"""

import heapq

import numpy as np

from . import _kernels
from .errors import DegenerateUpdateError, FactorizationError, SingularFactorError

__all__ = [
    "SparsityPattern",
    "Permutation",
    "DenseSymMatrix",
    "SparseLowerTriangular",
    "symbolic_cholesky",
    "amd_order",
    "factor_fill",
    "as_sym_array",
    "solve_lower",
    "solve_lower_transpose",
    "sherman_morrison_update",
    "chol_rank1_update",
    "dense_chol",
]


class SparsityPattern:
    """Index-set structure of a symmetric matrix or of a triangular factor.

    In graph form (``symmetric=True``) ``rows[j]`` holds the neighbours of j,
    with no self loops. In factor form (``symmetric=False``) ``rows[j]`` holds
    the strictly-below-diagonal row indices of column j; the diagonal is
    implied.
    """

    def __init__(self, n, rows, symmetric=True):
        self.n = int(n)
        self.symmetric = bool(symmetric)
        self.rows = [np.array(sorted(set(int(i) for i in r)), dtype=np.int64) for r in rows]
        if len(self.rows) != self.n:
            raise ValueError(f"expected {self.n} rows, got {len(self.rows)}")
        self._validate()

    def _validate(self):
        for j, r in enumerate(self.rows):
            if r.size and (r[0] < 0 or r[-1] >= self.n):
                raise ValueError(f"row {j} has indices outside [0, {self.n})")
            if self.symmetric and np.any(r == j):
                raise ValueError(f"self loop stored at {j}")
            if not self.symmetric and r.size and r[0] <= j:
                raise ValueError(f"factor row {j} has entries on or above the diagonal")
        if self.symmetric:
            present = {(j, int(i)) for j, r in enumerate(self.rows) for i in r}
            for j, i in present:
                if (i, j) not in present:
                    raise ValueError(f"asymmetric entry ({j}, {i})")

    @classmethod
    def from_edges(cls, n, edges):
        """Build a symmetric graph pattern from an iterable of (i, j) pairs."""
        rows = [set() for _ in range(n)]
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j:
                continue
            rows[i].add(j)
            rows[j].add(i)
        return cls(n, rows, symmetric=True)

    @classmethod
    def from_matrix(cls, a):
        """Symmetric pattern of a dense or scipy sparse matrix (off-diagonal nonzeros)."""
        import scipy.sparse as sp

        if sp.issparse(a):
            coo = a.tocoo()
            pairs = zip(coo.row.tolist(), coo.col.tolist())
            edges = [(i, j) for i, j in pairs if i != j]
            return cls.from_edges(a.shape[0], edges)
        a = np.asarray(a)
        i, j = np.nonzero(a)
        return cls.from_edges(a.shape[0], [(r, c) for r, c in zip(i, j) if r != c])

    @property
    def nnz(self):
        """Stored entries: directed edge count in graph form, n + strict-lower in factor form."""
        total = sum(r.size for r in self.rows)
        return total if self.symmetric else self.n + total

    @property
    def edge_count(self):
        if not self.symmetric:
            raise ValueError("edge_count is defined for graph-form patterns")
        return sum(r.size for r in self.rows) // 2

    def edges(self):
        """Sorted list of undirected edges (i, j) with i < j."""
        out = []
        for j, r in enumerate(self.rows):
            for i in r:
                if j < i:
                    out.append((j, int(i)))
        return sorted(out)

    def permuted(self, perm):
        """Pattern of the matrix with rows/columns reordered by perm."""
        if not self.symmetric:
            raise ValueError("only graph-form patterns can be permuted")
        pos = perm.inverse
        rows = [set() for _ in range(self.n)]
        for j, r in enumerate(self.rows):
            pj = pos[j]
            for i in r:
                rows[pj].add(int(pos[i]))
        return SparsityPattern(self.n, rows, symmetric=True)

    def __eq__(self, other):
        if not isinstance(other, SparsityPattern):
            return NotImplemented
        return (
            self.n == other.n
            and self.symmetric == other.symmetric
            and all(np.array_equal(a, b) for a, b in zip(self.rows, other.rows))
        )

    def __repr__(self):
        kind = "graph" if self.symmetric else "factor"
        return f"SparsityPattern(n={self.n}, {kind}, nnz={self.nnz})"


class Permutation:
    """Bijection on [0, n). ``forward[k]`` is the original index placed at position k."""

    def __init__(self, forward):
        self.forward = np.asarray(forward, dtype=np.int64)
        n = self.forward.size
        if not np.array_equal(np.sort(self.forward), np.arange(n)):
            raise ValueError("forward is not a permutation of range(n)")
        self.inverse = np.empty(n, dtype=np.int64)
        self.inverse[self.forward] = np.arange(n)

    @classmethod
    def identity(cls, n):
        return cls(np.arange(n))

    @property
    def n(self):
        return self.forward.size

    def permute(self, x):
        """Reorder a vector into permuted coordinates."""
        return np.asarray(x)[self.forward]

    def unpermute(self, x):
        """Reorder a permuted-coordinates vector back to original coordinates."""
        return np.asarray(x)[self.inverse]

    def __repr__(self):
        return f"Permutation({self.forward.tolist()})"


class DenseSymMatrix:
    """Symmetric matrix stored as a packed lower triangle."""

    def __init__(self, n, packed):
        self.n = int(n)
        self.packed = np.asarray(packed, dtype=np.float64)
        if self.packed.shape != (self.n * (self.n + 1) // 2,):
            raise ValueError("packed storage has wrong length")

    @classmethod
    def from_full(cls, a):
        a = np.asarray(a, dtype=np.float64)
        n = a.shape[0]
        i, j = np.tril_indices(n)
        return cls(n, a[i, j])

    def full(self):
        n = self.n
        out = np.zeros((n, n))
        i, j = np.tril_indices(n)
        out[i, j] = self.packed
        out[j, i] = self.packed
        return out

    def __repr__(self):
        return f"DenseSymMatrix(n={self.n})"


def as_sym_array(a):
    """Coerce a DenseSymMatrix or array-like to a full symmetric ndarray."""
    if isinstance(a, DenseSymMatrix):
        return a.full()
    return np.asarray(a, dtype=np.float64)


class SparseLowerTriangular:
    """Lower-triangular factor in CSC form, diagonal stored first in each column."""

    def __init__(self, n, indptr, rowind, values):
        self.n = int(n)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.rowind = np.asarray(rowind, dtype=np.int64)
        self.values = np.asarray(values, dtype=np.float64)
        for j in range(self.n):
            p0, p1 = self.indptr[j], self.indptr[j + 1]
            if p1 <= p0 or self.rowind[p0] != j:
                raise ValueError(f"column {j} must store its diagonal first")
            if np.any(self.rowind[p0:p1] < j):
                raise ValueError(f"column {j} has entries above the diagonal")

    @classmethod
    def identity(cls, n):
        ptr = np.arange(n + 1, dtype=np.int64)
        return cls(n, ptr, np.arange(n, dtype=np.int64), np.ones(n))

    @classmethod
    def from_pattern(cls, pattern):
        """Zero-valued factor with unit diagonal over a factor-form pattern."""
        if pattern.symmetric:
            raise ValueError("expected a factor-form pattern")
        n = pattern.n
        indptr = np.zeros(n + 1, dtype=np.int64)
        for j in range(n):
            indptr[j + 1] = indptr[j] + 1 + pattern.rows[j].size
        rowind = np.empty(indptr[-1], dtype=np.int64)
        values = np.zeros(indptr[-1])
        for j in range(n):
            p0 = indptr[j]
            rowind[p0] = j
            rowind[p0 + 1 : indptr[j + 1]] = pattern.rows[j]
            values[p0] = 1.0
        return cls(n, indptr, rowind, values)

    @classmethod
    def from_dense(cls, a, tol=0.0):
        a = np.asarray(a, dtype=np.float64)
        n = a.shape[0]
        cols = []
        for j in range(n):
            below = [i for i in range(j + 1, n) if abs(a[i, j]) > tol]
            cols.append(below)
        indptr = np.zeros(n + 1, dtype=np.int64)
        for j in range(n):
            indptr[j + 1] = indptr[j] + 1 + len(cols[j])
        rowind = np.empty(indptr[-1], dtype=np.int64)
        values = np.empty(indptr[-1])
        for j in range(n):
            p0 = indptr[j]
            rowind[p0] = j
            values[p0] = a[j, j]
            for k, i in enumerate(cols[j]):
                rowind[p0 + 1 + k] = i
                values[p0 + 1 + k] = a[i, j]
        return cls(n, indptr, rowind, values)

    @property
    def nnz(self):
        return int(self.indptr[-1])

    def diagonal(self):
        return self.values[self.indptr[:-1]]

    def to_dense(self):
        out = np.zeros((self.n, self.n))
        for j in range(self.n):
            p0, p1 = self.indptr[j], self.indptr[j + 1]
            out[self.rowind[p0:p1], j] = self.values[p0:p1]
        return out

    def matvec(self, x):
        return _kernels.lower_matvec_csc(
            self.indptr, self.rowind, self.values, np.asarray(x, dtype=np.float64)
        )

    def __repr__(self):
        return f"SparseLowerTriangular(n={self.n}, nnz={self.nnz})"


def symbolic_cholesky(pattern):
    """No-cancellation fill-in pattern of the Cholesky factor in the given order.

    The result is in factor form: ``rows[j]`` is the strictly-below-diagonal
    structure of column j. Purely structural; values never cancel fill.
    """
    if not pattern.symmetric:
        raise ValueError("symbolic analysis needs a symmetric graph pattern")
    n = pattern.n
    cols = [set(int(i) for i in pattern.rows[j] if i > j) for j in range(n)]
    for j in range(n):
        cj = cols[j]
        if cj:
            p = min(cj)
            cols[p].update(i for i in cj if i != p)
    return SparsityPattern(n, cols, symmetric=False)


def factor_fill(pattern, perm=None):
    """Stored-entry count of the symbolic factor, optionally after reordering."""
    p = pattern if perm is None else pattern.permuted(perm)
    return symbolic_cholesky(p).nnz


def amd_order(pattern):
    """Fill-reducing ordering by approximate minimum degree.

    Quotient-graph minimum degree with the summed external-degree
    approximation; ties broken first toward nodes of smaller original degree
    (peripheral first), then toward the lowest index, for determinism.
    Heuristic: fill is not guaranteed minimal, only typically reduced.
    """
    if not pattern.symmetric:
        raise ValueError("amd_order needs a symmetric graph pattern")
    n = pattern.n
    adj = [set(int(i) for i in pattern.rows[v]) for v in range(n)]
    elems = [set() for _ in range(n)]
    elem_vars = {}
    alive = np.ones(n, dtype=bool)
    next_elem = 0
    orig_degree = [len(adj[v]) for v in range(n)]

    def approx_degree(v):
        d = len(adj[v])
        for e in elems[v]:
            d += len(elem_vars[e]) - 1
        return min(d, n - 1)

    heap = [(len(adj[v]), orig_degree[v], v) for v in range(n)]
    heapq.heapify(heap)
    degree = {v: len(adj[v]) for v in range(n)}
    order = []

    while heap:
        d, _, v = heapq.heappop(heap)
        if not alive[v] or d != degree[v]:
            continue
        alive[v] = False
        order.append(v)

        reach = set(adj[v])
        for e in elems[v]:
            reach.update(elem_vars[e])
        reach.discard(v)
        reach = {u for u in reach if alive[u]}

        # absorb v's elements into the new one
        for e in list(elems[v]):
            for u in elem_vars[e]:
                elems[u].discard(e)
            del elem_vars[e]
        elems[v].clear()

        if reach:
            e_new = next_elem
            next_elem += 1
            elem_vars[e_new] = reach
            for u in reach:
                adj[u].discard(v)
                adj[u] -= reach
                elems[u].add(e_new)
                degree[u] = approx_degree(u)
                heapq.heappush(heap, (degree[u], orig_degree[u], u))

    return Permutation(np.array(order, dtype=np.int64))


def solve_lower(L, b):
    """Solve L y = b by sparse forward substitution."""
    d = L.diagonal()
    if np.any(d <= 0.0) or not np.all(np.isfinite(d)):
        raise SingularFactorError("factor has a non-positive diagonal entry")
    return _kernels.solve_lower_csc(L.indptr, L.rowind, L.values, np.asarray(b, dtype=np.float64))


def solve_lower_transpose(L, b):
    """Solve L^T y = b by sparse backward substitution."""
    d = L.diagonal()
    if np.any(d <= 0.0) or not np.all(np.isfinite(d)):
        raise SingularFactorError("factor has a non-positive diagonal entry")
    return _kernels.solve_lower_transpose_csc(
        L.indptr, L.rowind, L.values, np.asarray(b, dtype=np.float64)
    )


def sherman_morrison_update(inv, decay, u):
    """Inverse of (decay * A + u u^T) given inv = A^{-1}.

    Raises DegenerateUpdateError when the denominator is numerically unusable;
    the caller is expected to fall back to dense re-inversion.
    """
    if not 0.0 < decay <= 1.0:
        raise ValueError("decay must be in (0, 1]")
    packed = isinstance(inv, DenseSymMatrix)
    a = as_sym_array(inv)
    out, status = _kernels.sherman_morrison_dense(a, float(decay), np.asarray(u, dtype=np.float64))
    if status != 0:
        raise DegenerateUpdateError("Sherman-Morrison denominator is degenerate")
    out = 0.5 * (out + out.T)
    return DenseSymMatrix.from_full(out) if packed else out


def chol_rank1_update(L, decay, u):
    """Factor of decay * (L L^T) + (1 - decay) * u u^T for a dense lower factor L.

    The decay and complementary weight mirror the running-average recursion of
    the covariance backend (weights sum to one). Raises FactorizationError on
    breakdown; downdates never occur because both weights are nonnegative.
    """
    if not 0.0 <= decay <= 1.0:
        raise ValueError("decay must be in [0, 1]")
    out = np.array(L, dtype=np.float64, copy=True)
    status = _kernels.chol_rank1_inplace(out, float(decay), 1.0 - float(decay),
                                         np.asarray(u, dtype=np.float64))
    if status != 0:
        raise FactorizationError("rank-one factor update broke down")
    return out


def dense_chol(m):
    """Lower Cholesky factor of a dense SPD matrix."""
    a = as_sym_array(m)
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError("matrix is not positive definite") from exc
