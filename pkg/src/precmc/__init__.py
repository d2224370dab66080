"""Adaptive MCMC with online precision-Cholesky proposal adaptation.

A numpy/scipy library providing Metropolis-Hastings random walk and MALA
transition kernels whose proposal covariance is learned on the fly, either
through the running empirical covariance or through a sparse Cholesky factor
of the precision matrix estimated by per-row least squares. Conditional
dependence structure can be discovered automatically from gradient probes.
"""

from .adapt import CovarianceAdapter, PrecisionAdapter, RowRegressionState, mean_update
from .diagnostics import acceptance_window, bfactor_trace, efficiency_b, timing_probe
from .samplers import (
    ChainState,
    RunConfig,
    RunResult,
    ScaleState,
    mala_step,
    mhrw_step,
    run_chain,
    scale_update,
)
from .sparse import (
    DenseSymMatrix,
    Permutation,
    SparseLowerTriangular,
    SparsityPattern,
    amd_order,
    chol_rank1_update,
    dense_chol,
    factor_fill,
    sherman_morrison_update,
    solve_lower,
    solve_lower_transpose,
    symbolic_cholesky,
)
from .structure import build_regressor_sets, estimate_edges
from .targets import (
    GaussianTarget,
    LatticeGmrfPosterior,
    SplinePosterior,
    TargetModel,
    build_lattice_gmrf,
    build_spline,
)

__version__ = "0.1.0"

__all__ = [
    "CovarianceAdapter",
    "PrecisionAdapter",
    "RowRegressionState",
    "mean_update",
    "acceptance_window",
    "bfactor_trace",
    "efficiency_b",
    "timing_probe",
    "ChainState",
    "RunConfig",
    "RunResult",
    "ScaleState",
    "mala_step",
    "mhrw_step",
    "run_chain",
    "scale_update",
    "DenseSymMatrix",
    "Permutation",
    "SparseLowerTriangular",
    "SparsityPattern",
    "amd_order",
    "chol_rank1_update",
    "dense_chol",
    "factor_fill",
    "sherman_morrison_update",
    "solve_lower",
    "solve_lower_transpose",
    "symbolic_cholesky",
    "build_regressor_sets",
    "estimate_edges",
    "GaussianTarget",
    "LatticeGmrfPosterior",
    "SplinePosterior",
    "TargetModel",
    "build_lattice_gmrf",
    "build_spline",
    "__version__",
]
