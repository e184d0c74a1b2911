"""Empirical-Bayes hyperparameter search.

Objectives are EP (conditional) log marginal likelihoods; EP gives no cheap
gradients here, so the search is bounded Nelder-Mead with seeded restarts.
Every returned objective value is the value of an actual evaluation at the
returned point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logit

from . import kernels
from ._ep import EPConfig
from .gpc import check_labels, fit_gpc, probit_predictive, predict_latent
from .kernels import Family, KernelSpec
from .numerics import log_norm_cdf, minimize_1d
from .sltgp import conditional_log_marginal, modified_prior_fit

RHO_MIN = 1e-4
RHO_MAX = 1.0 - 1e-4


@dataclass(frozen=True)
class SearchConfig:
    """Settings for the derivative-free hyperparameter search.

    ``bounds`` maps a parameter name (``log_length_scale``, ``log_amplitude``,
    ``log_signal_variance`` or ``rho_logit``) to an explicit (lo, hi) box in
    transformed space. Kernel parameters without an explicit box get
    ``center +/- half_width`` around a data-driven center (``linear_half_width``
    for the linear signal variance, whose likelihood is flatter). Names in
    ``fixed`` stay at the template value.
    """

    restarts: int = 5
    max_evals: int = 200
    seed: int = 0
    half_width: float = 3.0
    linear_half_width: float = 5.0
    bounds: dict = field(default_factory=dict)
    fixed: frozenset = frozenset()
    xatol: float = 1e-3
    fatol: float = 1e-4

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.max_evals < 1:
            raise ValueError("max_evals must be >= 1")
        for name, (lo, hi) in self.bounds.items():
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"bad bounds for {name}: {(lo, hi)}")


def kernel_centers(template: KernelSpec, X) -> dict:
    """Data-driven search centers for the kernel hyperparameters."""
    X = kernels._as_points(X)
    if template.family is Family.RBF:
        return {
            "log_length_scale": math.log(kernels.median_distance(X)),
            "log_amplitude": 0.0,
        }
    mean_sq = float(np.mean(np.sum(X * X, axis=1)))
    return {"log_signal_variance": -math.log(mean_sq) if mean_sq > 0 else 0.0}


def _kernel_box(template: KernelSpec, X, config: SearchConfig):
    centers = kernel_centers(template, X)
    names, lo, hi, center = [], [], [], []
    for name in template.param_names():
        if name in config.fixed:
            continue
        c = centers[name]
        w = config.linear_half_width if name == "log_signal_variance" else config.half_width
        b = config.bounds.get(name, (c - w, c + w))
        names.append(name)
        lo.append(b[0])
        hi.append(b[1])
        center.append(min(max(c, b[0]), b[1]))
    return names, lo, hi, center


def _search(objective, lo, hi, center, config: SearchConfig):
    """Maximize ``objective`` over a box; returns (best_x, best_value)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    dim = lo.shape[0]
    cache: dict = {}
    best = [None, -np.inf]

    def neg(x):
        x = np.clip(np.asarray(x, dtype=float), lo, hi)
        key = tuple(x.tolist())
        if key not in cache:
            try:
                v = float(objective(x))
            except (np.linalg.LinAlgError, ValueError, FloatingPointError):
                v = -np.inf
            if not math.isfinite(v):
                v = -np.inf
            cache[key] = v
            if v > best[1] or best[0] is None:
                best[0], best[1] = x.copy(), v
        return -cache[key] if cache[key] > -np.inf else 1e300

    if dim == 0:
        neg(np.zeros(0))
        return best[0], best[1]

    rng = np.random.default_rng(config.seed)
    starts = [np.asarray(center, dtype=float)]
    for _ in range(config.restarts - 1):
        starts.append(lo + (hi - lo) * rng.random(dim))
    for x0 in starts:
        step = np.minimum(1.0, 0.25 * (hi - lo))
        simplex = [x0]
        for j in range(dim):
            v = x0.copy()
            v[j] = v[j] + step[j] if v[j] + step[j] <= hi[j] else v[j] - step[j]
            simplex.append(v)
        minimize(
            neg,
            x0,
            method="Nelder-Mead",
            bounds=list(zip(lo, hi)),
            options={
                "initial_simplex": np.array(simplex),
                "maxfev": config.max_evals,
                "xatol": config.xatol,
                "fatol": config.fatol,
            },
        )
    return best[0], best[1]


def optimize_gpc(
    X, y, kernel_template: KernelSpec, config: SearchConfig = SearchConfig(), ep_config: EPConfig = EPConfig()
) -> tuple[KernelSpec, float]:
    """Kernel hyperparameters maximizing the EP log marginal of a GPC."""
    X = kernels._as_points(X)
    y = check_labels(y)
    if X.shape[0] < 2:
        raise ValueError("need at least two data points")
    names, lo, hi, center = _kernel_box(kernel_template, X, config)

    def objective(x):
        k = kernel_template.with_params(**dict(zip(names, x)))
        return fit_gpc(X, y, k, ep_config).log_marginal

    x, value = _search(objective, lo, hi, center, config)
    return kernel_template.with_params(**dict(zip(names, x))), value


def optimize_slt(
    X,
    y,
    s,
    kernel_template: KernelSpec,
    config: SearchConfig = SearchConfig(),
    ep_config: EPConfig = EPConfig(),
    rho_start: float = 0.5,
) -> tuple[KernelSpec, float, float]:
    """Kernel hyperparameters and task similarity maximizing log p(y | s, X).

    rho is searched through its logit, restricted to [1e-4, 1 - 1e-4]. The
    objective is evaluated with the n x n soft-label-conditioned prior, which
    gives the same value as the joint 2n x 2n model.
    """
    X = kernels._as_points(X)
    y = check_labels(y)
    s = np.asarray(s, dtype=float).ravel()
    if X.shape[0] < 2:
        raise ValueError("need at least two data points")
    names, lo, hi, center = _kernel_box(kernel_template, X, config)
    rlo, rhi = config.bounds.get("rho_logit", (float(logit(RHO_MIN)), float(logit(RHO_MAX))))
    lo, hi = lo + [rlo], hi + [rhi]
    center = center + [min(max(float(logit(rho_start)), rlo), rhi)]

    def unpack(x):
        rho = min(max(float(expit(x[-1])), RHO_MIN), RHO_MAX)  # expit(logit(.)) can overshoot by an ulp
        return kernel_template.with_params(**dict(zip(names, x[:-1]))), rho

    def objective(x):
        k, rho = unpack(x)
        return conditional_log_marginal(modified_prior_fit(X, y, s, k, rho, ep_config))

    x, value = _search(objective, lo, hi, center, config)
    k, rho = unpack(x)
    return k, rho, value


class RhoProfile:
    """Cached conditional-marginal (and optional test-risk) evaluations over rho.

    Both rho selectors of the task-similarity experiment walk the same
    grid; sharing one profile avoids refitting the model for each.
    """

    def __init__(self, X, y, s, kernel: KernelSpec, test_set=None, ep_config: EPConfig = EPConfig(),
                 n_mc: int = 200, mc_seed: int = 0):
        self.X = kernels._as_points(X)
        self.y = check_labels(y)
        self.s = np.asarray(s, dtype=float).ravel()
        self.kernel = kernel
        self.ep_config = ep_config
        self.test_set = test_set
        self._fits: dict = {}
        self._risk: dict = {}
        if test_set is not None:
            X_test, y_test = test_set
            self._X_test = kernels._as_points(X_test)
            self._y_test = check_labels(y_test)
            rng = np.random.default_rng(mc_seed)
            # common random numbers across rho keep the risk curve smooth
            self._eps = rng.standard_normal((n_mc, self._X_test.shape[0]))

    def fit(self, rho: float):
        rho = float(rho)
        if rho not in self._fits:
            self._fits[rho] = modified_prior_fit(self.X, self.y, self.s, self.kernel, rho, self.ep_config)
        return self._fits[rho]

    def log_marginal(self, rho: float) -> float:
        return conditional_log_marginal(self.fit(rho))

    def risk(self, rho: float) -> float:
        """Monte-Carlo expected negative log likelihood on the test set."""
        if self.test_set is None:
            raise ValueError("profile has no test set")
        rho = float(rho)
        if rho not in self._risk:
            mu, var = predict_latent(self.fit(rho), self._X_test)
            f = mu[None, :] + np.sqrt(var)[None, :] * self._eps
            self._risk[rho] = float(-np.mean(log_norm_cdf(self._y_test[None, :] * f)))
        return self._risk[rho]


def rho_grid(n_points: int = 33) -> np.ndarray:
    return np.linspace(0.0, 1.0, n_points)


def refine_on_grid(f, grid: np.ndarray, k: int, tol: float = 1e-3) -> tuple[float, float]:
    """Minimize ``f`` locally between the grid neighbours of index ``k``."""
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, len(grid) - 1)]
    best_x, best_f = float(grid[k]), f(float(grid[k]))
    x, fx = minimize_1d(f, lo, hi, tol=tol, n_grid=4)
    if fx < best_f:
        best_x, best_f = x, fx
    return best_x, best_f


def optimize_rho_by_risk(
    X, y, s, kernel: KernelSpec, test_set, n_grid: int = 33, refine: bool = True,
    profile: RhoProfile | None = None, ep_config: EPConfig = EPConfig(),
) -> float:
    """rho minimizing the test-set expected NLL risk under the posterior."""
    if profile is None:
        profile = RhoProfile(X, y, s, kernel, test_set, ep_config)
    grid = rho_grid(n_grid)
    values = np.array([profile.risk(r) for r in grid])
    k = int(np.argmin(values))
    if not refine:
        return float(grid[k])
    rho, _ = refine_on_grid(lambda r: profile.risk(min(max(r, 0.0), 1.0)), grid, k)
    return min(max(rho, 0.0), 1.0)


def accuracy(prob_positive, y_test) -> float:
    y_test = np.asarray(y_test, dtype=float)
    pred = np.where(np.asarray(prob_positive) >= 0.5, 1.0, -1.0)
    return float(np.mean(pred == y_test))


__all__ = [
    "SearchConfig",
    "kernel_centers",
    "optimize_gpc",
    "optimize_slt",
    "optimize_rho_by_risk",
    "RhoProfile",
    "rho_grid",
    "refine_on_grid",
    "accuracy",
    "probit_predictive",
]
