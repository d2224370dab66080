"""Proposal-quality and performance diagnostics.

The central quantity is the mismatch measure b: with eigenvalues l_i of
Sigma_true Sigma_proposal^{-1},

    b = n * sum(l_i) / (sum(sqrt(l_i)))^2

b is scale invariant, at least 1, and equals 1 exactly when the proposal
covariance is proportional to the target covariance.
"""

import time

import numpy as np
import scipy.linalg

from .errors import FactorizationError
from .sparse import as_sym_array


def _proposal_matrix(proposal):
    if hasattr(proposal, "proposal_covariance"):
        return proposal.proposal_covariance()
    return as_sym_array(proposal)


def efficiency_b(sigma_true, proposal):
    """Mismatch measure of a proposal covariance against the true covariance.

    ``proposal`` may be a matrix or an adaptation backend. The eigenvalues of
    Sigma Sigma_p^{-1} are computed from the congruent symmetric form
    L' Sigma_p^{-1} L (L the factor of Sigma), which has the same spectrum.
    """
    sig = as_sym_array(sigma_true)
    prop = _proposal_matrix(proposal)
    n = sig.shape[0]
    if prop.shape != sig.shape:
        raise ValueError("dimension mismatch between target and proposal")
    try:
        l_true = np.linalg.cholesky(sig)
        prop_chol = scipy.linalg.cho_factor(prop, lower=True)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError("efficiency_b needs SPD inputs") from exc
    inner = scipy.linalg.cho_solve(prop_chol, l_true)
    sym = l_true.T @ inner
    lam = scipy.linalg.eigvalsh(0.5 * (sym + sym.T))
    if np.any(lam <= 0):
        raise FactorizationError("efficiency_b needs SPD inputs")
    return float(n * lam.sum() / np.sqrt(lam).sum() ** 2)


def bfactor_trace(snapshots, target):
    """Evaluate b over adaptation snapshots.

    ``snapshots`` is a sequence of (iteration, proposal) pairs; the target
    must provide an analytic covariance. Returns an array of (iteration, b)
    rows.
    """
    sig = target.analytic_covariance()
    if sig is None:
        raise ValueError("target has no analytic covariance")
    sig = as_sym_array(sig)
    rows = [(float(it), efficiency_b(sig, prop)) for it, prop in snapshots]
    return np.asarray(rows)


def acceptance_window(accepts, window):
    """Fraction of accepted proposals over the trailing window."""
    if window < 1:
        raise ValueError("window must be at least 1")
    accepts = np.asarray(accepts)
    if accepts.size == 0:
        return 0.0
    return float(np.mean(accepts[-window:]))


def _timing_setup(component, n, seed=0):
    from .adapt import CovarianceAdapter, PrecisionAdapter

    rng = np.random.default_rng(seed)
    if component in ("l_update", "sample_prec"):
        sets = [np.array([j + 1], dtype=np.int64) if j < n - 1 else np.array([], dtype=np.int64)
                for j in range(n)]
        ad = PrecisionAdapter(n, regressor_sets=sets, warmup=0)
        for _ in range(5):
            ad.l_update(rng.standard_normal(n))
        if component == "l_update":
            return lambda: ad.l_update(rng.standard_normal(n))
        return lambda: ad.sample_noise(rng.standard_normal(n))
    if component in ("cov_update", "sample_cov"):
        ad = CovarianceAdapter(n, warmup=0)
        for _ in range(5):
            ad.update(rng.standard_normal(n))
        if component == "cov_update":
            return lambda: ad.update(rng.standard_normal(n))
        return lambda: ad.sample_noise(rng.standard_normal(n))
    raise ValueError(f"unknown timing component {component!r}")


def timing_probe(component, n, reps, seed=0):
    """Mean wall-clock duration (ns) of one backend operation at dimension n.

    ``component`` is one of cov_update, l_update, sample_cov, sample_prec;
    tridiagonal regressor sets are used for the precision variants. Warm-up
    repetitions run before timing so compilation never pollutes the
    measurement. Only ratios across n are meaningful; absolute values are
    machine specific.
    """
    if reps <= 0:
        raise ValueError("reps must be positive: empty measurement")
    op = _timing_setup(component, n, seed=seed)
    for _ in range(max(3, reps // 5)):
        op()
    t0 = time.perf_counter_ns()
    for _ in range(reps):
        op()
    t1 = time.perf_counter_ns()
    return (t1 - t0) / reps
