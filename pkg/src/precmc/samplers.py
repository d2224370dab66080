"""Transition kernels and the chain driver.

Both kernels share the proposal shape N(mean, sigma^2 * S) where S is the
adaptation backend's implicit covariance: the random-walk kernel centers at
the current point, the Langevin kernel shifts the mean by sigma^2/2 * S grad.
The global scale sigma is tuned by a Robbins-Monro recursion toward the
standard acceptance-rate targets (0.234 random walk, 0.574 Langevin).
"""

import os
from dataclasses import dataclass, field, replace

import numpy as np

from .adapt import CovarianceAdapter, PrecisionAdapter
from .diagnostics import efficiency_b
from .errors import ChainDivergedError, ConfigError
from .sparse import as_sym_array

MHRW_TARGET_RATE = 0.234
MALA_TARGET_RATE = 0.574


def default_sigma0(kernel, dim):
    """Initial proposal scale: classic random-walk constant, or the Langevin
    dimension scaling for MALA."""
    if kernel == "mhrw":
        return 2.38 / np.sqrt(dim)
    if kernel == "mala":
        return float(dim) ** (-1.0 / 6.0)
    raise ValueError(f"unknown kernel {kernel!r}")


@dataclass(frozen=True)
class ScaleState:
    """Log proposal scale with its Robbins-Monro tuning constants."""

    log_sigma: float
    target_rate: float
    step_c: float = 1.0
    step_kappa: float = 0.7

    @property
    def sigma(self):
        return float(np.exp(self.log_sigma))


def scale_update(scale, accepted_prob, k):
    """Nudge log sigma toward the target acceptance rate.

    The expected acceptance probability of the step just taken is used rather
    than the accept indicator (same fixed point, lower variance); the
    diminishing step size min(1, c k^-kappa) preserves ergodicity.
    """
    gamma = min(1.0, scale.step_c * float(k) ** (-scale.step_kappa))
    return replace(scale, log_sigma=scale.log_sigma + gamma * (accepted_prob - scale.target_rate))


@dataclass
class ChainState:
    """Current position with cached target evaluations and step counters."""

    x: np.ndarray
    log_pi: float
    grad: np.ndarray | None = None
    iter: int = 0
    accepts: int = 0


def init_chain(target, x0=None, with_grad=True):
    x0 = np.zeros(target.dim) if x0 is None else np.asarray(x0, dtype=np.float64)
    log_pi = float(target.log_density(x0))
    if not np.isfinite(log_pi):
        raise ChainDivergedError("log-density is not finite at the initial point")
    grad = None
    if with_grad:
        grad = np.asarray(target.grad_log_density(x0), dtype=np.float64)
        if not np.all(np.isfinite(grad)):
            raise ChainDivergedError("gradient is not finite at the initial point")
    return ChainState(x=x0, log_pi=log_pi, grad=grad)


def mala_alpha(log_pi_x, log_pi_star, x, x_star, g, g_star, gl, gl_star, sigma):
    """Log acceptance ratio of the preconditioned Langevin kernel.

    gl and gl_star are the whitened gradients, so their squared norms equal
    g' S g; the quadratic proposal terms cancel and no solves are needed.
    """
    s2 = sigma * sigma
    return (
        log_pi_star
        - log_pi_x
        - s2 / 8.0 * float(gl_star @ gl_star)
        + 0.5 * float((x - x_star) @ (g_star + g))
        + s2 / 8.0 * float(gl @ gl)
    )


def mala_step(chain, adapt, scale, target, rng):
    """One Langevin proposal/accept step. Returns (chain, accepted_prob).

    The proposal is x + sigma^2/2 * S g + sigma * noise with noise covariance
    S. A non-finite log-density or gradient at the proposal is an automatic
    rejection; a non-finite value at the current state is a hard error.
    """
    if not np.isfinite(chain.log_pi):
        raise ChainDivergedError("log-density is not finite at the current state")
    sigma = scale.sigma
    g = chain.grad
    gl = adapt.whiten(g)
    z = rng.standard_normal(chain.x.size)
    x_star = chain.x + adapt.sample_noise(0.5 * sigma * sigma * gl + sigma * z)
    u = rng.uniform()

    log_pi_star = float(target.log_density(x_star))
    if not np.isfinite(log_pi_star):
        chain.iter += 1
        return chain, 0.0
    g_star = np.asarray(target.grad_log_density(x_star), dtype=np.float64)
    if not np.all(np.isfinite(g_star)):
        chain.iter += 1
        return chain, 0.0
    gl_star = adapt.whiten(g_star)

    alpha = mala_alpha(chain.log_pi, log_pi_star, chain.x, x_star, g, g_star, gl, gl_star, sigma)
    if np.log(u) < alpha:
        chain.x = x_star
        chain.log_pi = log_pi_star
        chain.grad = g_star
        chain.accepts += 1
    chain.iter += 1
    return chain, float(np.exp(min(0.0, alpha)))


def mhrw_step(chain, adapt, scale, target, rng):
    """One random-walk proposal/accept step. Returns (chain, accepted_prob)."""
    if not np.isfinite(chain.log_pi):
        raise ChainDivergedError("log-density is not finite at the current state")
    sigma = scale.sigma
    z = rng.standard_normal(chain.x.size)
    x_star = chain.x + sigma * adapt.sample_noise(z)
    u = rng.uniform()

    log_pi_star = float(target.log_density(x_star))
    if not np.isfinite(log_pi_star):
        chain.iter += 1
        return chain, 0.0

    alpha = log_pi_star - chain.log_pi
    if np.log(u) < alpha:
        chain.x = x_star
        chain.log_pi = log_pi_star
        chain.accepts += 1
    chain.iter += 1
    return chain, float(np.exp(min(0.0, alpha)))


@dataclass
class RunConfig:
    """Driver settings; unset values are resolved against the target."""

    kernel: str = "mala"
    backend: str = "precision"
    iterations: int = 10_000
    thin: int = 1
    seed: int = 0
    warmup: int = 100
    sigma0: float | None = None
    target_rate: float | None = None
    step_c: float = 1.0
    step_kappa: float = 0.7
    x0: np.ndarray | None = None
    structure: str = "auto"  # auto | full | diagonal (precision backend only)
    structure_tol: float = 1e-8
    structure_probes: int = 3
    structure_seed: int = 0
    regressor_sets: list | None = None
    perm: object | None = None
    accept_window: int = 1000
    bfactor_every: int = 0
    trace_coords: tuple | None = None
    output_dir: str | None = None

    def resolved(self, target):
        """Fill kernel-dependent defaults for a concrete target."""
        out = replace(self)
        if out.kernel not in ("mhrw", "mala"):
            raise ConfigError(f"kernel must be mhrw or mala, got {out.kernel!r}")
        if out.backend not in ("covariance", "precision"):
            raise ConfigError(f"backend must be covariance or precision, got {out.backend!r}")
        if out.iterations < 0 or out.thin < 1:
            raise ConfigError("iterations must be >= 0 and thin >= 1")
        if out.sigma0 is None:
            out = replace(out, sigma0=default_sigma0(out.kernel, target.dim))
        if out.target_rate is None:
            rate = MALA_TARGET_RATE if out.kernel == "mala" else MHRW_TARGET_RATE
            out = replace(out, target_rate=rate)
        if out.trace_coords is None:
            out = replace(out, trace_coords=tuple(range(min(target.dim, 5))))
        elif any(not 0 <= int(k) < target.dim for k in out.trace_coords):
            raise ConfigError(f"trace_coords must lie in [0, {target.dim})")
        return out


@dataclass
class RunResult:
    """In-memory view of a finished run plus any files written."""

    config: RunConfig
    chain: ChainState
    scale: ScaleState
    adapter: object
    trace: np.ndarray  # thinned rows: iter, log_pi, accept_rate, sigma, coords...
    trace_columns: list
    accept_flags: np.ndarray
    bfactor: np.ndarray | None = None
    paths: dict = field(default_factory=dict)


def _make_backend(config, target):
    if config.backend == "covariance":
        return CovarianceAdapter(target.dim, warmup=config.warmup)
    if config.regressor_sets is not None:
        perm = config.perm
        return PrecisionAdapter(
            target.dim, regressor_sets=config.regressor_sets, perm=perm, warmup=config.warmup
        )
    if config.structure == "full":
        return PrecisionAdapter(target.dim, warmup=config.warmup)
    if config.structure == "diagonal":
        sets = [np.array([], dtype=np.int64) for _ in range(target.dim)]
        return PrecisionAdapter(target.dim, regressor_sets=sets, warmup=config.warmup)
    if config.structure == "auto":
        from .structure import build_regressor_sets, estimate_edges

        edges = estimate_edges(
            target,
            tol=config.structure_tol,
            n_probes=config.structure_probes,
            probe_seed=config.structure_seed,
        )
        perm, sets = build_regressor_sets(edges)
        return PrecisionAdapter(target.dim, regressor_sets=sets, perm=perm, warmup=config.warmup)
    raise ConfigError(f"unknown structure mode {config.structure!r}")


def _fmt(v):
    return format(float(v), ".17g")


def _write_checkpoint(path, chain, scale, adapter):
    state = {f"adapt_{k}": v for k, v in adapter.state_dict().items()}
    state.update(
        chain_x=chain.x,
        chain_log_pi=np.float64(chain.log_pi),
        chain_iter=np.int64(chain.iter),
        chain_accepts=np.int64(chain.accepts),
        scale_log_sigma=np.float64(scale.log_sigma),
        scale_target_rate=np.float64(scale.target_rate),
        scale_step_c=np.float64(scale.step_c),
        scale_step_kappa=np.float64(scale.step_kappa),
    )
    if chain.grad is not None:
        state["chain_grad"] = chain.grad
    np.savez(path, **state)


def load_checkpoint(path):
    """Read a run checkpoint back into (ChainState, ScaleState, adapter)."""
    from .adapt import load_adapter

    with np.load(path) as d:
        chain = ChainState(
            x=np.array(d["chain_x"]),
            log_pi=float(d["chain_log_pi"]),
            grad=np.array(d["chain_grad"]) if "chain_grad" in d.files else None,
            iter=int(d["chain_iter"]),
            accepts=int(d["chain_accepts"]),
        )
        scale = ScaleState(
            log_sigma=float(d["scale_log_sigma"]),
            target_rate=float(d["scale_target_rate"]),
            step_c=float(d["scale_step_c"]),
            step_kappa=float(d["scale_step_kappa"]),
        )
    return chain, scale, load_adapter(path)


def run_chain(config, target):
    """Run one adaptive chain and collect its trace and diagnostics.

    Every iteration advances the kernel, updates the proposal scale from the
    step's acceptance probability, and feeds the sample to the adaptation
    backend (whose transforms switch on after its warmup count). Thinned
    trace rows and, when requested, a b-factor series are collected; if an
    output directory is set, trace.csv / acceptance.csv / bfactor.csv and a
    final checkpoint are written as well.
    """
    config = config.resolved(target)
    rng = np.random.default_rng(config.seed)
    use_grad = config.kernel == "mala"
    chain = init_chain(target, x0=config.x0, with_grad=use_grad)
    adapter = _make_backend(config, target)
    scale = ScaleState(
        log_sigma=float(np.log(config.sigma0)),
        target_rate=config.target_rate,
        step_c=config.step_c,
        step_kappa=config.step_kappa,
    )
    step = mala_step if use_grad else mhrw_step

    sigma_true = None
    bfactor_rows = []
    if config.bfactor_every > 0:
        sig = target.analytic_covariance()
        if sig is None:
            raise ConfigError("bfactor requested but target has no analytic covariance")
        sigma_true = as_sym_array(sig)
        bfactor_rows.append((0.0, efficiency_b(sigma_true, adapter.proposal_covariance())))

    coords = list(config.trace_coords)
    trace_columns = ["iter", "log_pi", "acceptance_rate_window", "sigma"] + [
        f"x{k}" for k in coords
    ]
    trace = np.zeros((config.iterations // config.thin, len(trace_columns)))
    accept_flags = np.zeros(config.iterations, dtype=bool)
    window = config.accept_window
    window_sum = 0

    paths = {}
    out = config.output_dir
    if out is not None:
        os.makedirs(out, exist_ok=True)
        paths["trace"] = os.path.join(out, "trace.csv")
        paths["acceptance"] = os.path.join(out, "acceptance.csv")
        paths["checkpoint"] = os.path.join(out, "checkpoint.npz")
        if config.bfactor_every > 0:
            paths["bfactor"] = os.path.join(out, "bfactor.csv")

    trace_fh = open(paths["trace"], "w") if out is not None else None
    accept_fh = open(paths["acceptance"], "w") if out is not None else None
    if trace_fh is not None:
        trace_fh.write(",".join(trace_columns) + "\n")
        accept_fh.write("iter,rate\n")

    try:
        accepts_before = 0
        for i in range(1, config.iterations + 1):
            try:
                chain, p_acc = step(chain, adapter, scale, target, rng)
            except ChainDivergedError:
                if out is not None:
                    _write_checkpoint(paths["checkpoint"], chain, scale, adapter)
                raise
            accepted = chain.accepts > accepts_before
            accepts_before = chain.accepts
            accept_flags[i - 1] = accepted
            window_sum += accepted
            if i > window:
                window_sum -= accept_flags[i - 1 - window]
            scale = scale_update(scale, p_acc, i)
            adapter.update(chain.x)

            if i % config.thin == 0:
                rate = window_sum / min(i, window)
                row = [float(i), chain.log_pi, rate, scale.sigma] + [
                    float(chain.x[k]) for k in coords
                ]
                trace[i // config.thin - 1] = row
                if trace_fh is not None:
                    trace_fh.write(",".join(_fmt(v) for v in row) + "\n")
                    accept_fh.write(f"{i},{_fmt(rate)}\n")
            if config.bfactor_every > 0 and i % config.bfactor_every == 0:
                bfactor_rows.append(
                    (float(i), efficiency_b(sigma_true, adapter.proposal_covariance()))
                )
    finally:
        if trace_fh is not None:
            trace_fh.close()
            accept_fh.close()

    bfactor = np.asarray(bfactor_rows) if bfactor_rows else None
    if out is not None:
        if config.bfactor_every > 0:
            with open(paths["bfactor"], "w") as fh:
                fh.write("iter,b\n")
                for it, b in bfactor_rows:
                    fh.write(f"{int(it)},{_fmt(b)}\n")
        _write_checkpoint(paths["checkpoint"], chain, scale, adapter)

    return RunResult(
        config=config,
        chain=chain,
        scale=scale,
        adapter=adapter,
        trace=trace,
        trace_columns=trace_columns,
        accept_flags=accept_flags,
        bfactor=bfactor,
        paths=paths,
    )
