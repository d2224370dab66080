"""Built-in target densities and the abstract target interface.

Two model families reproduce the benchmark experiments at desk scale: a
Gaussian lattice-field posterior (observations of a Markov random field on a
regular grid) and a heteroscedastic smoothing-spline posterior with two
latent second-order random walks and log-precision hyperparameters.
"""

import csv
from abc import ABC, abstractmethod

import numpy as np
import scipy.sparse as sp

from .sparse import DenseSymMatrix


class TargetModel(ABC):
    """A target density: dimension, log-density and its gradient.

    Gradients must match central finite differences of ``log_density``;
    ``analytic_covariance`` is optional and only used by diagnostics.
    """

    @property
    @abstractmethod
    def dim(self):
        ...

    @abstractmethod
    def log_density(self, x):
        ...

    @abstractmethod
    def grad_log_density(self, x):
        ...

    def analytic_covariance(self):
        return None


class GaussianTarget(TargetModel):
    """Gaussian density parameterized by its precision matrix (dense or sparse)."""

    def __init__(self, precision, mean=None):
        self._sparse = sp.issparse(precision)
        self.precision = precision.tocsr() if self._sparse else np.asarray(precision, float)
        self._dim = self.precision.shape[0]
        self.mean = np.zeros(self._dim) if mean is None else np.asarray(mean, float)

    @property
    def dim(self):
        return self._dim

    def log_density(self, x):
        d = np.asarray(x, float) - self.mean
        return -0.5 * float(d @ (self.precision @ d))

    def grad_log_density(self, x):
        d = np.asarray(x, float) - self.mean
        return -(self.precision @ d)

    def analytic_covariance(self):
        q = self.precision.toarray() if self._sparse else self.precision
        return DenseSymMatrix.from_full(np.linalg.inv(q))


def lattice_laplacian(side):
    """Graph Laplacian of the side x side four-neighbour lattice (CSR)."""
    n = side * side
    rows, cols, vals = [], [], []
    deg = np.zeros(n)

    def node(r, c):
        return r * side + c

    for r in range(side):
        for c in range(side):
            i = node(r, c)
            for dr, dc in ((0, 1), (1, 0)):
                rr, cc = r + dr, c + dc
                if rr < side and cc < side:
                    j = node(rr, cc)
                    rows += [i, j]
                    cols += [j, i]
                    vals += [-1.0, -1.0]
                    deg[i] += 1.0
                    deg[j] += 1.0
    rows += list(range(n))
    cols += list(range(n))
    vals += deg.tolist()
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


class LatticeGmrfPosterior(TargetModel):
    """Gaussian posterior of a lattice Markov random field observed with noise.

    The prior precision is kappa^2 I + G (or its square) with G the lattice
    graph Laplacian; a subset of nodes is observed under iid Gaussian noise.
    The posterior is Gaussian with precision Q + A' A / sigma_obs^2, so the
    exact covariance is available for diagnostics.
    """

    def __init__(self, side, kappa2, alpha, sigma_obs, obs_nodes, y):
        self.side = int(side)
        self._dim = self.side * self.side
        self.kappa2 = float(kappa2)
        self.alpha = int(alpha)
        self.sigma_obs = float(sigma_obs)
        self.obs_nodes = np.asarray(obs_nodes, dtype=np.int64)
        self.y = np.asarray(y, dtype=np.float64)

        base = self.kappa2 * sp.identity(self._dim, format="csr") + lattice_laplacian(self.side)
        if self.alpha == 1:
            self.q_prior = base.tocsr()
        elif self.alpha == 2:
            self.q_prior = (base.T @ base).tocsr()
        else:
            raise ValueError("alpha must be 1 or 2")

        k = self.obs_nodes.size
        self.a_obs = sp.csr_matrix(
            (np.ones(k), (np.arange(k), self.obs_nodes)), shape=(k, self._dim)
        )
        self._aty = self.a_obs.T @ self.y

    @property
    def dim(self):
        return self._dim

    def log_density(self, x):
        x = np.asarray(x, float)
        r = self.y - self.a_obs @ x
        return -0.5 * float(r @ r) / self.sigma_obs**2 - 0.5 * float(x @ (self.q_prior @ x))

    def grad_log_density(self, x):
        x = np.asarray(x, float)
        return (self._aty - self.a_obs.T @ (self.a_obs @ x)) / self.sigma_obs**2 - self.q_prior @ x

    def posterior_precision(self):
        return (self.q_prior + (self.a_obs.T @ self.a_obs) / self.sigma_obs**2).tocsr()

    def posterior_mean(self):
        import scipy.sparse.linalg as spla

        return spla.spsolve(self.posterior_precision().tocsc(), self._aty / self.sigma_obs**2)

    def analytic_covariance(self):
        return DenseSymMatrix.from_full(np.linalg.inv(self.posterior_precision().toarray()))


def build_lattice_gmrf(side, kappa2=1.0, alpha=1, sigma_obs=0.3, n_obs=None, seed=0):
    """Build a lattice posterior with simulated observations.

    Observation nodes are drawn uniformly without replacement and the data
    vector is simulated from the model itself (field from the prior, noise on
    top), so the posterior is consistent with a real draw.
    """
    if side < 3:
        raise ValueError("side must be at least 3")
    n = side * side
    if n_obs is None:
        n_obs = n // 2
    if n_obs > n:
        raise ValueError(f"n_obs = {n_obs} exceeds the number of nodes {n}")
    rng = np.random.default_rng(seed)
    nodes = np.sort(rng.choice(n, size=n_obs, replace=False))

    base = kappa2 * sp.identity(n, format="csr") + lattice_laplacian(side)
    q_prior = base if alpha == 1 else base.T @ base
    chol_prior = np.linalg.cholesky(q_prior.toarray())
    # x ~ N(0, Q^{-1}) via a transpose solve against white noise
    from scipy.linalg import solve_triangular

    z = rng.standard_normal(n)
    x_true = solve_triangular(chol_prior.T, z, lower=False)
    y = x_true[nodes] + sigma_obs * rng.standard_normal(n_obs)
    return LatticeGmrfPosterior(side, kappa2, alpha, sigma_obs, nodes, y)


def second_difference_matrix(n, spacing):
    """Second-difference operator scaled for a random-walk prior ((n-2) x n)."""
    if n < 3:
        raise ValueError("need at least 3 basis functions")
    scale = spacing ** (-1.5)
    rows, cols, vals = [], [], []
    for k in range(n - 2):
        rows += [k, k, k]
        cols += [k, k + 1, k + 2]
        vals += [scale, -2.0 * scale, scale]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n - 2, n))


def interpolation_matrix(t, knots):
    """Piecewise-linear interpolation matrix; each row has two weights summing to one."""
    t = np.asarray(t, float)
    n = knots.size
    idx = np.clip(np.searchsorted(knots, t, side="right") - 1, 0, n - 2)
    left = knots[idx]
    h = knots[idx + 1] - left
    w = (t - left) / h
    rows = np.repeat(np.arange(t.size), 2)
    cols = np.column_stack([idx, idx + 1]).ravel()
    vals = np.column_stack([1.0 - w, w]).ravel()
    return sp.csr_matrix((vals, (rows, cols)), shape=(t.size, n))


def load_ty_csv(path):
    """Read a two-column (t, y) CSV; the header row is optional."""
    t, y = [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < 2:
                raise ValueError(f"{path}:{lineno}: expected two columns, got {len(row)}")
            try:
                ti, yi = float(row[0]), float(row[1])
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise ValueError(f"{path}:{lineno}: could not parse {row!r}") from None
            t.append(ti)
            y.append(yi)
    return np.asarray(t), np.asarray(y)


def synthetic_crash_data(n_points=120, seed=0):
    """Synthetic stand-in for the crash-test accelerometer readings.

    Smooth oscillating mean with a strong variance bump in the middle of the
    time window; seeded and deterministic.
    """
    rng = np.random.default_rng(seed)
    t = np.sort(rng.uniform(0.0, 60.0, size=n_points))
    mean = -60.0 * np.exp(-0.5 * ((t - 20.0) / 6.0) ** 2) + 35.0 * np.exp(
        -0.5 * ((t - 32.0) / 7.0) ** 2
    )
    sd = 2.0 + 20.0 * np.exp(-0.5 * ((t - 30.0) / 12.0) ** 2)
    y = mean + sd * rng.standard_normal(n_points)
    return t, y


class SplinePosterior(TargetModel):
    """Adaptive smoothing-spline posterior with log-variance random walk.

    Parameter vector: (x[0:n], v[n:2n], log tau_x, log tau_v), dimension
    2n + 2. The observation noise has variance exp(2 (A_v v)_i); both latent
    fields carry second-order random-walk priors with exponential priors on
    the precisions, sampled on the log scale with the Jacobian included.
    """

    def __init__(self, t, y, n_basis):
        self.t = np.asarray(t, float)
        self.y = np.asarray(y, float)
        if self.t.size < 3:
            raise ValueError("need at least 3 data points")
        self.n_basis = int(n_basis)
        self.knots = np.linspace(self.t.min(), self.t.max(), self.n_basis)
        spacing = self.knots[1] - self.knots[0]
        self.a_x = interpolation_matrix(self.t, self.knots)
        self.a_v = self.a_x
        d2 = second_difference_matrix(self.n_basis, spacing)
        ridge = 1e-8 * sp.identity(self.n_basis)
        self.q_x = (d2.T @ d2 + ridge).tocsr()
        self.q_v = self.q_x
        self._ones_obs = np.ones(self.t.size)

    @property
    def dim(self):
        return 2 * self.n_basis + 2

    def split(self, theta):
        n = self.n_basis
        theta = np.asarray(theta, float)
        return theta[:n], theta[n : 2 * n], theta[2 * n], theta[2 * n + 1]

    def log_density(self, theta):
        x, v, ltx, ltv = self.split(theta)
        tau_x, tau_v = np.exp(ltx), np.exp(ltv)
        w = self.a_v @ v
        r = self.y - self.a_x @ x
        n = self.n_basis
        val = -0.5 * float(np.sum(np.exp(-2.0 * w) * r * r))
        val -= float(np.sum(w))
        val -= 0.5 * tau_x * float(x @ (self.q_x @ x))
        val -= 0.5 * tau_v * float(v @ (self.q_v @ v))
        val += 0.5 * n * (ltv + ltx)
        val -= tau_v + tau_x
        val += ltx + ltv  # Jacobian of the log reparameterization
        return val

    def grad_log_density(self, theta):
        x, v, ltx, ltv = self.split(theta)
        tau_x, tau_v = np.exp(ltx), np.exp(ltv)
        w = self.a_v @ v
        r = self.y - self.a_x @ x
        e2w = np.exp(-2.0 * w)
        n = self.n_basis
        gx = self.a_x.T @ (e2w * r) - tau_x * (self.q_x @ x)
        gv = self.a_v.T @ (e2w * r * r) - self.a_v.T @ self._ones_obs - tau_v * (self.q_v @ v)
        gltx = 0.5 * n - 0.5 * tau_x * float(x @ (self.q_x @ x)) - tau_x + 1.0
        gltv = 0.5 * n - 0.5 * tau_v * float(v @ (self.q_v @ v)) - tau_v + 1.0
        return np.concatenate([gx, gv, [gltx], [gltv]])


def build_spline(n_basis, data_source="synthetic", seed=0, n_points=120):
    """Build the spline posterior from a CSV path or the synthetic generator."""
    if data_source == "synthetic":
        t, y = synthetic_crash_data(n_points=n_points, seed=seed)
    else:
        t, y = load_ty_csv(data_source)
    return SplinePosterior(t, y, n_basis)
