"""Structural-break detection, dating and testing for interactive-effects panels."""

from .dgp import DgpConfig, DgpTruth, ExperimentReport, generate, run_experiment
from .estimator import (
    BreakFit,
    CceFit,
    ProjectorMode,
    SsrProfile,
    cce_fit,
    confidence_interval,
    estimate_breakpoint,
    estimate_theta,
    fit_break,
    ssr_at,
)
from .limits import (
    LimitLaw,
    QuantileTable,
    SimConfig,
    argmax_quantile,
    sup_bessel_critical,
)
from .linalg import Projector, cross_sectional_average, make_annihilator, stacked_ols
from .panel import (
    BreakSpec,
    CandidateSetMode,
    PanelData,
    RegimePartition,
    build_panel,
    estimation_candidates,
    testing_candidates,
    z_regressors,
)
from .wald import (
    DetectedBreak,
    HacConfig,
    Kernel,
    WaldResult,
    sequential_breaks,
    sup_wald,
    wald_at,
)

__all__ = [
    "BreakFit",
    "BreakSpec",
    "CandidateSetMode",
    "CceFit",
    "DetectedBreak",
    "DgpConfig",
    "DgpTruth",
    "ExperimentReport",
    "HacConfig",
    "Kernel",
    "LimitLaw",
    "PanelData",
    "Projector",
    "ProjectorMode",
    "QuantileTable",
    "RegimePartition",
    "SimConfig",
    "SsrProfile",
    "WaldResult",
    "argmax_quantile",
    "build_panel",
    "cce_fit",
    "confidence_interval",
    "cross_sectional_average",
    "estimate_breakpoint",
    "estimate_theta",
    "estimation_candidates",
    "fit_break",
    "generate",
    "make_annihilator",
    "run_experiment",
    "sequential_breaks",
    "ssr_at",
    "stacked_ols",
    "sup_bessel_critical",
    "sup_wald",
    "testing_candidates",
    "wald_at",
    "z_regressors",
]
