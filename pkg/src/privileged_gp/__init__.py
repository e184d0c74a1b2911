"""Gaussian process classification that transfers soft labels from privileged features."""

from ._ep import EPConfig
from .errors import (
    ColumnOverlap,
    ConfigError,
    DimensionMismatch,
    DomainError,
    InvalidBracket,
    NotPositiveDefinite,
    ParseError,
    RhoOutOfRange,
    ROutOfRange,
    SingleClass,
    UnknownGenerator,
)
from .gpc import extract_soft_labels, fit_gpc, log_marginal_gpc, predict_latent, predict_prob
from .kernels import KernelSpec
from .model_selection import SearchConfig, optimize_gpc, optimize_rho_by_risk, optimize_slt
from .pacbayes import b_constant, c_threshold, optimize_rho_by_bound, risk_bound
from .sltgp import (
    conditional_log_marginal,
    fit_slt,
    load_model,
    modified_prior_fit,
    predict_latent_slt,
    predict_prob_slt,
    save_model,
)

__version__ = "0.1.0"

__all__ = [
    "ColumnOverlap",
    "ConfigError",
    "DimensionMismatch",
    "DomainError",
    "EPConfig",
    "InvalidBracket",
    "KernelSpec",
    "NotPositiveDefinite",
    "ParseError",
    "ROutOfRange",
    "RhoOutOfRange",
    "SearchConfig",
    "SingleClass",
    "UnknownGenerator",
    "b_constant",
    "c_threshold",
    "conditional_log_marginal",
    "extract_soft_labels",
    "fit_gpc",
    "fit_slt",
    "load_model",
    "log_marginal_gpc",
    "modified_prior_fit",
    "optimize_gpc",
    "optimize_rho_by_bound",
    "optimize_rho_by_risk",
    "optimize_slt",
    "predict_latent",
    "predict_latent_slt",
    "predict_prob",
    "predict_prob_slt",
    "risk_bound",
    "save_model",
]
