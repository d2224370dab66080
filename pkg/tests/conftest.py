"""Shared test oracles, independent of the implementation paths they check."""

import numpy as np
import pytest


def boolean_elimination_fill(pattern, order=None):
    """Simulate Gaussian elimination on a boolean matrix.

    Returns the set of (row, col) positions of the lower factor, row > col,
    in the (optionally reordered) elimination sequence. Brute force on dense
    boolean matrices; the independent oracle for symbolic analysis.
    """
    n = pattern.n
    a = np.zeros((n, n), dtype=bool)
    for j, r in enumerate(pattern.rows):
        for i in r:
            a[j, i] = True
            a[i, j] = True
    if order is not None:
        a = a[np.ix_(order, order)]
    np.fill_diagonal(a, True)
    filled = set()
    for k in range(n):
        below = [i for i in range(k + 1, n) if a[i, k]]
        for i in below:
            filled.add((i, k))
        for i in below:
            for j in below:
                a[i, j] = True
    return filled


def fd_gradient(target, x, rel_h=1e-5):
    """Central finite differences of the target log-density."""
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        h = rel_h * (1.0 + abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (target.log_density(xp) - target.log_density(xm)) / (2.0 * h)
    return g


def random_spd(rng, n, jitter=None):
    a = rng.standard_normal((n, n))
    return a @ a.T + (n if jitter is None else jitter) * np.eye(n)


def batch_moment_matrix(samples):
    """Batch second-moment matrix (1/i) sum x x' of already-centered samples."""
    x = np.asarray(samples)
    return x.T @ x / x.shape[0]


def batch_mean_se(chain_values, n_batches=50):
    """Batch-means Monte Carlo standard error of the chain mean, per coordinate."""
    x = np.asarray(chain_values)
    n = x.shape[0]
    b = n // n_batches
    means = np.array([x[k * b : (k + 1) * b].mean(axis=0) for k in range(n_batches)])
    return means.std(axis=0, ddof=1) / np.sqrt(n_batches)


@pytest.fixture(scope="session")
def warm_kernels():
    """Trigger numba compilation once so timed tests never pay for it."""
    from precmc.adapt import CovarianceAdapter, PrecisionAdapter
    from precmc.sparse import solve_lower, solve_lower_transpose

    rng = np.random.default_rng(0)
    ad = PrecisionAdapter(4)
    for _ in range(3):
        ad.l_update(rng.standard_normal(4))
    solve_lower(ad.L, np.ones(4))
    solve_lower_transpose(ad.L, np.ones(4))
    ad.L.matvec(np.ones(4))
    cov = CovarianceAdapter(4)
    for _ in range(3):
        cov.update(rng.standard_normal(4))
    return True
