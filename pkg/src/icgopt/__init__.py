"""Inexact composite gradient methods for nonconvex spectral optimization.

The library solves min f1(U) + f2v(sigma(U)) + hv(sigma(U)) over matrices,
where f1 is smooth, f2v is smooth and absolutely symmetric, and hv is convex
with a cheap weighted prox.  The inner engine is a relaxed accelerated
composite gradient method with checkable certificates; the outer methods
come in inner-accelerated and doubly-accelerated variants, each with a
dynamic wrapper that shifts curvature until the subproblems are convex.
Exact composite gradient and accelerated gradient baselines plus a
benchmark harness round out the package.
"""

from .spectral import (
    RECONSTRUCTION_TOL,
    ORTHONORMALITY_TOL,
    SpectralTriple,
    dg,
    diag_extract,
    eps_transfer,
    lift,
    singular_values,
    svd,
    vectorize,
)
from .model import (
    CompositeProblem,
    CurvatureBounds,
    FunctionValueBundle,
    InfeasiblePointError,
    grad_f2_matrix,
    grad_smooth,
    matrix_h_prox,
    phi_eval,
    project_domain,
    shift_convexity,
)
from .racg import (
    AcgBudgetError,
    AcgInputs,
    AcgOutcome,
    AcgState,
    AcgStatus,
    RefinedPair,
    check_problem_a,
    delta_mu,
    racg_run,
    refine,
)
from .spectral_racg import SpectralSubproblem, build_subproblem, run_subproblem, spectral_racg_run
from .icg import (
    IcgConfig,
    IcgOutcome,
    IcgStatus,
    RunTrace,
    TraceRecord,
    adaptive_lambda,
    c_lambda,
    dynamic_icg,
    residual_denominator,
    srp,
    static_da_icg,
    static_ia_icg,
)
from .baselines import BaselineConfig, ag_run, ecg_run
from .problems import (
    BlockLayout,
    McParams,
    ball_radius,
    bmc_instance,
    load_ratings_csv,
    mc_curvature,
    mc_instance,
    starting_point,
    synth_matrix,
    weighted_l1_ball_prox,
)
from .bench import RunConfig, emit_plotdata, parse_config, run_benchmark

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
