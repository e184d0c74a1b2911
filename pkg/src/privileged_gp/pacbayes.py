"""PAC-Bayes risk bound for the soft-label-conditioned GP classifier.

With the sub-Gaussian variance factor sigma0^2 < 1/2 held fixed, the bound on
the posterior-averaged NLL risk is

    -(log delta + log Z) / n + b(sigma0^2)

where log Z is the conditional EP log marginal log p(y | s, X). Only the first
term depends on rho, so minimizing the bound over rho is the same as
empirical Bayes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._ep import EPConfig
from .errors import DomainError
from .kernels import KernelSpec
from .model_selection import RhoProfile, refine_on_grid, rho_grid
from .numerics import minimize_1d

B_SEARCH_EPS = 1e-9
B_SEARCH_SPAN = 1e6


@dataclass(frozen=True)
class BoundInputs:
    sigma0_sq: float
    delta: float
    n: int
    log_conditional_marginal: float

    def __post_init__(self):
        _check_sigma0_sq(self.sigma0_sq)
        if not 0.0 < self.delta <= 1.0:
            raise DomainError(f"delta={self.delta!r} outside (0, 1]")
        if self.n < 1:
            raise DomainError("n must be >= 1")


def _check_sigma0_sq(sigma0_sq: float) -> float:
    sigma0_sq = float(sigma0_sq)
    if not 0.0 <= sigma0_sq < 0.5:
        raise DomainError(f"sigma0_sq={sigma0_sq!r} outside [0, 1/2)")
    return sigma0_sq


def c_threshold(sigma0_sq: float) -> float:
    """Lower end of the feasible set for the free parameter of ``b``."""
    s = _check_sigma0_sq(sigma0_sq)
    return (10.0 * s - 4.0) / (1.0 - 2.0 * s)


def b_integrand(a: float, sigma0_sq: float) -> float:
    t = a + 4.0
    return (
        0.5 * math.log(2.0 * math.pi * t)
        - a / (2.0 * t)
        + 4.0 * sigma0_sq**2 * ((a + 5.0) / t) ** 2
    )


def b_constant(sigma0_sq: float, tol: float = 1e-10) -> float:
    """Infimum of :func:`b_integrand` over a > c_threshold(sigma0_sq).

    The search runs in u = log(a - c) over [log 1e-9, log 1e6], which spreads
    the 128-point pre-scan evenly across scales before golden-section
    refinement.
    """
    c = c_threshold(sigma0_sq)

    def g(u: float) -> float:
        return b_integrand(c + math.exp(u), sigma0_sq)

    lo = math.log(B_SEARCH_EPS)
    hi = math.log(B_SEARCH_SPAN)
    _, value = minimize_1d(g, lo, hi, tol=tol)
    return min(value, g(lo))


def risk_bound(inputs: BoundInputs, b: float) -> float:
    return -(math.log(inputs.delta) + inputs.log_conditional_marginal) / inputs.n + b


@dataclass
class RhoBoundResult:
    rho: float
    bound: float
    grid: np.ndarray
    grid_bounds: np.ndarray
    grid_log_marginals: np.ndarray


def optimize_rho_by_bound(
    X,
    y,
    s,
    kernel: KernelSpec,
    sigma0_sq: float = 0.1,
    delta: float = 0.05,
    n_grid: int = 33,
    refine: bool = True,
    profile: RhoProfile | None = None,
    ep_config: EPConfig = EPConfig(),
    details: bool = False,
):
    """rho minimizing the risk bound over a grid on [0, 1] plus local refinement.

    Because the bound is a decreasing affine map of the conditional log
    marginal, the grid winner must coincide with the grid argmax of the
    marginal; this is checked on every call.
    """
    b = b_constant(sigma0_sq)
    if profile is None:
        profile = RhoProfile(X, y, s, kernel, None, ep_config)
    n = profile.y.shape[0]

    def bound_at(rho: float) -> float:
        rho = min(max(rho, 0.0), 1.0)
        return risk_bound(BoundInputs(sigma0_sq, delta, n, profile.log_marginal(rho)), b)

    grid = rho_grid(n_grid)
    lml = np.array([profile.log_marginal(r) for r in grid])
    bounds = np.array([bound_at(r) for r in grid])
    k = int(np.argmin(bounds))
    k_ml = int(np.argmax(lml))
    if k != k_ml and lml[k] != lml[k_ml]:
        raise AssertionError(
            f"bound argmin rho={grid[k]} differs from marginal argmax rho={grid[k_ml]}"
        )
    rho, value = float(grid[k]), float(bounds[k])
    if refine:
        rho, value = refine_on_grid(bound_at, grid, k)
        rho = min(max(rho, 0.0), 1.0)
    if details:
        return RhoBoundResult(rho, value, grid, bounds, lml)
    return rho
