"""Compiled numerical kernels.

Everything here is numba-jitted and operates on the flat array layouts owned
by the caller; no Python objects cross the boundary. Failure conditions are
returned as status codes instead of exceptions so that callers can apply
their documented fallbacks.
"""

import numpy as np
from numba import njit

# Ridge applied to a row Gram block while it is still rank-deficient.
GRAM_RIDGE = 1e-3

# Relative floor below which a conditional variance D_jj is clamped.
DJJ_CLAMP_REL = 1e-10

# Relative threshold for a degenerate Sherman-Morrison denominator.
SM_DEGENERATE_REL = 1e-12


@njit(cache=True)
def solve_lower_csc(indptr, rowind, values, b):
    """Solve L y = b for CSC lower-triangular L (diagonal stored first per column)."""
    n = b.shape[0]
    y = b.copy()
    for j in range(n):
        p0 = indptr[j]
        p1 = indptr[j + 1]
        yj = y[j] / values[p0]
        y[j] = yj
        for p in range(p0 + 1, p1):
            y[rowind[p]] -= values[p] * yj
    return y


@njit(cache=True)
def solve_lower_transpose_csc(indptr, rowind, values, b):
    """Solve L^T y = b for CSC lower-triangular L (diagonal stored first per column)."""
    n = b.shape[0]
    y = b.copy()
    for j in range(n - 1, -1, -1):
        p0 = indptr[j]
        p1 = indptr[j + 1]
        acc = y[j]
        for p in range(p0 + 1, p1):
            acc -= values[p] * y[rowind[p]]
        y[j] = acc / values[p0]
    return y


@njit(cache=True)
def lower_matvec_csc(indptr, rowind, values, x):
    """Compute L x for CSC lower-triangular L."""
    n = x.shape[0]
    out = np.zeros(n)
    for j in range(n):
        xj = x[j]
        for p in range(indptr[j], indptr[j + 1]):
            out[rowind[p]] += values[p] * xj
    return out


@njit(cache=True)
def chol_rank1_inplace(L, decay, weight, u):
    """Overwrite L with the factor of decay * L L^T + weight * u u^T.

    Returns 0 on success, 1 on breakdown (caller refactorizes densely).
    """
    n = L.shape[0]
    sd = np.sqrt(decay)
    for j in range(n):
        for i in range(j, n):
            L[i, j] *= sd
    if weight == 0.0:
        return 0
    v = np.sqrt(weight) * u
    for k in range(n):
        d = L[k, k]
        if d <= 0.0 or not np.isfinite(d):
            return 1
        r2 = d * d + v[k] * v[k]
        r = np.sqrt(r2)
        if not np.isfinite(r) or r <= 0.0:
            return 1
        c = r / d
        s = v[k] / d
        L[k, k] = r
        for i in range(k + 1, n):
            L[i, k] = (L[i, k] + s * v[i]) / c
            v[i] = c * v[i] - s * L[i, k]
    return 0


@njit(cache=True)
def _chol_small(a, m, floor):
    """In-place lower Cholesky of the m x m block a; pivots must exceed floor.

    Returns True on success. Only the lower triangle of a is referenced.
    """
    for k in range(m):
        s = a[k, k]
        for p in range(k):
            s -= a[k, p] * a[k, p]
        if not (s > floor) or not np.isfinite(s):
            return False
        a[k, k] = np.sqrt(s)
        for r in range(k + 1, m):
            t = a[r, k]
            for p in range(k):
                t -= a[r, p] * a[k, p]
            a[r, k] = t / a[k, k]
    return True


@njit(cache=True)
def _inv_from_chol(c, m, out):
    """Fill out with (c c^T)^{-1} for lower-triangular c (m x m blocks)."""
    # Column-by-column: solve c y = e_j, then c^T z = y.
    for j in range(m):
        for i in range(m):
            out[i, j] = 0.0
        out[j, j] = 1.0
    for j in range(m):
        # forward solve into column j
        for i in range(m):
            acc = out[i, j]
            for p in range(i):
                acc -= c[i, p] * out[p, j]
            out[i, j] = acc / c[i, i]
        # backward solve (c^T)
        for i in range(m - 1, -1, -1):
            acc = out[i, j]
            for p in range(i + 1, m):
                acc -= c[p, i] * out[p, j]
            out[i, j] = acc / c[i, i]


@njit(cache=True)
def _dense_gram_inverse(gram_flat, g0, m, ridge, cs, inv_out, allow_exact):
    """Recompute a row's Gram inverse densely from its exact Gram block.

    When allow_exact is set, tries the ridgeless inverse first and reports
    success; otherwise (or on failure) inverts Gram + ridge * I. The ridge
    keeps early-sample regressions from fitting perfectly, which would zero
    out the conditional variances.
    """
    if allow_exact:
        maxd = 0.0
        for k in range(m):
            d = gram_flat[g0 + k * m + k]
            if d > maxd:
                maxd = d
        for i in range(m):
            for j in range(m):
                cs[i, j] = gram_flat[g0 + i * m + j]
        if _chol_small(cs, m, 1e-10 * maxd):
            _inv_from_chol(cs, m, inv_out)
            return True
    for i in range(m):
        for j in range(m):
            cs[i, j] = gram_flat[g0 + i * m + j]
        cs[i, i] += ridge
    _chol_small(cs, m, 0.0)
    _inv_from_chol(cs, m, inv_out)
    return False


@njit(cache=True)
def row_regression_update(
    x,
    count,
    a_ptr,
    a_idx,
    cross_off,
    diag_var,
    gram_ptr,
    gram,
    gram_inv,
    mode,
    dvals,
    L_indptr,
    L_values,
    max_m,
):
    """One pass of the per-row regression recursion over all rows.

    x is the centered sample in permuted coordinates and count the new sample
    count i >= 1. Row statistics decay with (i-1)/i and weight 1/i. Writes the
    regression coefficients into the factor value array (column j holds
    1/sqrt(D_j) followed by -t_k/sqrt(D_j) for k in the row's regressor set)
    and D_j into dvals. Returns (min_d, clamp_events, degenerate_events).
    """
    n = diag_var.shape[0]
    decay = (count - 1.0) / count
    w = 1.0 / count
    sqrt_w = np.sqrt(w)

    xa = np.empty(max_m)
    bu = np.empty(max_m)
    tv = np.empty(max_m)
    cs = np.empty((max_m, max_m))
    iv = np.empty((max_m, max_m))

    clamp_events = 0
    degenerate_events = 0
    min_d = np.inf

    for j in range(n):
        s = a_ptr[j]
        m = a_ptr[j + 1] - s
        xj = x[j]
        diag_var[j] = decay * diag_var[j] + w * xj * xj

        if m == 0:
            d = diag_var[j]
            floor = DJJ_CLAMP_REL * diag_var[j]
            if floor <= 0.0:
                floor = 1e-30
            if d < floor:
                d = floor
                clamp_events += 1
            dvals[j] = d
            L_values[L_indptr[j]] = 1.0 / np.sqrt(d)
            if d < min_d:
                min_d = d
            continue

        for k in range(m):
            xa[k] = x[a_idx[s + k]]
            cross_off[s + k] = decay * cross_off[s + k] + w * xa[k] * xj

        g0 = gram_ptr[j]
        for i in range(m):
            gi = g0 + i * m
            wxi = w * xa[i]
            for k in range(m):
                gram[gi + k] = decay * gram[gi + k] + wxi * xa[k]

        if mode[j] == 0:
            # Rank-deficient startup: dense ridged inverse until enough
            # samples have arrived and the exact Gram is invertible, then
            # hand over to Sherman-Morrison.
            attempt = count >= m + 3
            ok = _dense_gram_inverse(gram, g0, m, GRAM_RIDGE, cs, iv, attempt)
            if ok:
                mode[j] = 1
            for i in range(m):
                for k in range(m):
                    gram_inv[g0 + i * m + k] = iv[i, k]
        else:
            # inverse of (decay * G_prev + u u^T) with u = sqrt(w) * xa
            q = 0.0
            for i in range(m):
                acc = 0.0
                gi = g0 + i * m
                for k in range(m):
                    acc += gram_inv[gi + k] * xa[k]
                acc = acc * sqrt_w / decay
                bu[i] = acc
                q += acc * sqrt_w * xa[i]
            denom = 1.0 + q
            if not np.isfinite(denom) or denom <= SM_DEGENERATE_REL * (1.0 + np.abs(q)):
                degenerate_events += 1
                _dense_gram_inverse(gram, g0, m, GRAM_RIDGE, cs, iv, True)
                for i in range(m):
                    for k in range(m):
                        gram_inv[g0 + i * m + k] = iv[i, k]
            else:
                for i in range(m):
                    gi = g0 + i * m
                    bi = bu[i]
                    for k in range(m):
                        gram_inv[gi + k] = gram_inv[gi + k] / decay - bi * bu[k] / denom

        # regression coefficients and conditional variance
        d = diag_var[j]
        for i in range(m):
            acc = 0.0
            gi = g0 + i * m
            for k in range(m):
                acc += gram_inv[gi + k] * cross_off[s + k]
            tv[i] = acc
        for i in range(m):
            d -= cross_off[s + i] * tv[i]

        floor = DJJ_CLAMP_REL * diag_var[j]
        if floor <= 0.0:
            floor = 1e-30
        if d < floor:
            d = floor
            clamp_events += 1
        dvals[j] = d
        if d < min_d:
            min_d = d

        p0 = L_indptr[j]
        inv_sqrt_d = 1.0 / np.sqrt(d)
        L_values[p0] = inv_sqrt_d
        for i in range(m):
            L_values[p0 + 1 + i] = -tv[i] * inv_sqrt_d

    return min_d, clamp_events, degenerate_events


@njit(cache=True)
def sherman_morrison_dense(inv, decay, u):
    """Return the inverse of (decay * A + u u^T) given inv = A^{-1}.

    Status 1 signals a degenerate denominator.
    """
    n = inv.shape[0]
    out = inv / decay
    bu = out @ u
    q = u @ bu
    denom = 1.0 + q
    if not np.isfinite(denom) or denom <= SM_DEGENERATE_REL * (1.0 + np.abs(q)):
        return out, 1
    for i in range(n):
        for k in range(n):
            out[i, k] -= bu[i] * bu[k] / denom
    return out, 0
