"""Conditional-dependence discovery from gradient probes.

An edge {i, j} is recorded whenever perturbing coordinate i moves the j-th
component of the log-density gradient. The estimate is conservative: a
detected edge implies genuine conditional dependence, while missing edges can
only arise from exact cancellation at every probe. Two perturbation sizes and
several probe points guard against accidental cancellation.
"""

import warnings

import numpy as np

from .errors import StructureEstimationError
from .sparse import Permutation, SparsityPattern, amd_order, symbolic_cholesky

DEFAULT_TOL = 1e-8
PROBE_STEPS = (1.0, 1e-3)


def estimate_edges(target, probe_points=None, tol=DEFAULT_TOL, n_probes=3, probe_seed=0):
    """Estimate the conditional-dependence graph of a target density.

    Perturbs each coordinate at each probe point and records which gradient
    components respond beyond ``tol * (1 + |gradient|)``. Probe points default
    to ``n_probes`` standard-normal draws with a fixed seed. Probes with a
    non-finite gradient are skipped with a warning; if every probe is skipped
    an error is raised.
    """
    n = target.dim
    if probe_points is None:
        rng = np.random.default_rng(probe_seed)
        probe_points = [rng.standard_normal(n) for _ in range(n_probes)]
    if len(probe_points) == 0:
        raise StructureEstimationError("need at least one probe point")

    edges = set()
    used = 0
    for x in probe_points:
        x = np.asarray(x, dtype=np.float64)
        g0 = np.asarray(target.grad_log_density(x), dtype=np.float64)
        if not np.all(np.isfinite(g0)):
            warnings.warn("skipping probe point with non-finite gradient", stacklevel=2)
            continue
        used += 1
        thresh = tol * (1.0 + np.abs(g0))
        for i in range(n):
            for h in PROBE_STEPS:
                xp = x.copy()
                xp[i] += h
                g1 = np.asarray(target.grad_log_density(xp), dtype=np.float64)
                if not np.all(np.isfinite(g1)):
                    continue
                hit = np.nonzero(np.abs(g1 - g0) > thresh)[0]
                for j in hit:
                    if j != i:
                        edges.add((min(i, int(j)), max(i, int(j))))
    if used == 0:
        raise StructureEstimationError("all probe points had non-finite gradients")
    return SparsityPattern.from_edges(n, edges)


def build_regressor_sets(edges):
    """Turn a dependence graph into a fill-reducing order and regressor sets.

    Reorders with approximate minimum degree, runs the symbolic factorization
    on the permuted graph, and reads each column's below-diagonal structure as
    the regressor set for that (permuted) coordinate. Empty sets yield a
    diagonal proposal.
    """
    if not edges.symmetric:
        raise ValueError("expected a symmetric dependence graph")
    perm = amd_order(edges)
    factor = symbolic_cholesky(edges.permuted(perm))
    return perm, [factor.rows[j].copy() for j in range(edges.n)]


def write_edges(path, pattern):
    """Write a graph pattern as a sorted '(i j)' edge list, 0-based."""
    with open(path, "w") as fh:
        fh.write(f"# n={pattern.n}\n")
        for i, j in pattern.edges():
            fh.write(f"{i} {j}\n")


def read_edges(path):
    n = None
    edges = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "n=" in line:
                    n = int(line.split("n=")[1])
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'i j'")
            edges.append((int(parts[0]), int(parts[1])))
    if n is None:
        n = 1 + max((max(e) for e in edges), default=-1)
    return SparsityPattern.from_edges(n, edges)


def write_perm(path, perm):
    """Write a permutation as one line of whitespace-separated indices."""
    with open(path, "w") as fh:
        fh.write(" ".join(str(int(i)) for i in perm.forward) + "\n")


def read_perm(path):
    with open(path) as fh:
        content = fh.read().split()
    return Permutation(np.array([int(s) for s in content], dtype=np.int64))
