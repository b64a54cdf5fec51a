"""ctrlinv: controlled invariance of flat distributions for affine control systems.

Decide, on a sampled chart box, whether a flat distribution is locally
controlled invariant for an affine control system, synthesize the feedback
pair that makes the closed-loop fields preserve the distribution, and verify
the result by independent finite-difference and simulation checks.
"""

from .expr import (
    EvalDomainError,
    ExprError,
    ExprSyntaxError,
    ScalarExpr,
    diff,
    evaluate,
    parse_expr,
    to_string,
)
from .geometry import (
    AffineSystem,
    ChartSpec,
    QuotientSection,
    VectorFieldExpr,
    connection_apply,
    curvature_residual,
    lie_bracket,
    quotient_project,
)
from .grids import GridSpec, GridVectorField
from .invariance import (
    INCONCLUSIVE_SINGULAR,
    INVARIANT,
    NOT_INVARIANT,
    InvarianceReport,
    RankProfile,
    check_local_invariance,
    extract_alpha_coeffs,
    extract_gamma,
    rank_profile,
)
from .transport import assemble_A, build_zbar, parallel_transport, transport_staircase
from .synthesis import (
    FeedbackPair,
    apply_feedback,
    integrate_drift_coeffs,
    synthesize_alpha,
    synthesize_beta,
)
from .verify import (
    PiecewiseConstantControl,
    Trajectory,
    bracket_residuals,
    leaf_invariance_test,
    simulate,
)
from .estimator import FeedbackSynthesizer, validate_system

__version__ = "0.1.0"

__all__ = [
    "AffineSystem",
    "ChartSpec",
    "EvalDomainError",
    "ExprError",
    "ExprSyntaxError",
    "FeedbackPair",
    "FeedbackSynthesizer",
    "GridSpec",
    "GridVectorField",
    "INCONCLUSIVE_SINGULAR",
    "INVARIANT",
    "InvarianceReport",
    "NOT_INVARIANT",
    "PiecewiseConstantControl",
    "QuotientSection",
    "RankProfile",
    "ScalarExpr",
    "Trajectory",
    "VectorFieldExpr",
    "apply_feedback",
    "assemble_A",
    "bracket_residuals",
    "build_zbar",
    "check_local_invariance",
    "connection_apply",
    "curvature_residual",
    "diff",
    "evaluate",
    "extract_alpha_coeffs",
    "extract_gamma",
    "integrate_drift_coeffs",
    "leaf_invariance_test",
    "lie_bracket",
    "parallel_transport",
    "parse_expr",
    "quotient_project",
    "rank_profile",
    "simulate",
    "synthesize_alpha",
    "synthesize_beta",
    "to_string",
    "transport_staircase",
    "validate_system",
]
