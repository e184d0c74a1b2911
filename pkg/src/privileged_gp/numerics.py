"""Shared numerical primitives.

Positive-definite factorization with a bounded jitter ladder, numerically
stable normal-distribution helpers and a derivative-free 1-D minimizer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numba
import numpy as np
import scipy.linalg as la
from scipy import special

from .errors import InvalidBracket, NotPositiveDefinite

_SQRT2 = math.sqrt(2.0)
_LOG_HALF = math.log(0.5)
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class PsdFactor:
    """Lower Cholesky factor of ``M + jitter * I``."""

    lower: np.ndarray
    log_det: float
    jitter: float

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Return ``(M + jitter I)^{-1} b``."""
        return la.cho_solve((self.lower, True), b, check_finite=False)

    def solve_lower(self, b: np.ndarray) -> np.ndarray:
        """Return ``L^{-1} b`` (forward substitution only)."""
        return la.solve_triangular(self.lower, b, lower=True, check_finite=False)


def jitter_ladder(max_jitter: float) -> list[float]:
    """0 followed by 1e-10, 1e-8, ... (x100 per step) up to ``max_jitter``."""
    levels = [0.0]
    exp = -10
    while 10.0**exp <= max_jitter * (1.0 + 1e-9):
        levels.append(10.0**exp)
        exp += 2
    if levels[-1] < max_jitter * (1.0 - 1e-9):
        levels.append(float(max_jitter))
    return levels


def psd_factorize(m: np.ndarray, max_jitter: float = 1e-4) -> PsdFactor:
    """Cholesky-factorize a symmetric matrix, adding jitter only if needed.

    Raises
    ------
    NotPositiveDefinite
        If every level of the jitter ladder fails.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    scale = max(np.max(np.abs(m)), 1e-300) if m.size else 1.0
    asym = np.max(np.abs(m - m.T)) if m.size else 0.0
    if asym > 1e-10 * scale:
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3g})")
    m = 0.5 * (m + m.T)
    n = m.shape[0]
    for jitter in jitter_ladder(max_jitter):
        a = m + jitter * np.eye(n) if jitter else m
        try:
            lower = la.cholesky(a, lower=True, check_finite=False)
        except la.LinAlgError:
            continue
        diag = np.diag(lower)
        if not np.all(np.isfinite(diag)) or np.any(diag <= 0.0):
            continue
        return PsdFactor(lower, float(2.0 * np.sum(np.log(diag))), jitter)
    raise NotPositiveDefinite(
        f"matrix of size {n} not positive definite with jitter up to {max_jitter:g}"
    )


def norm_pdf(z):
    return np.exp(-0.5 * np.square(z)) / math.sqrt(2.0 * math.pi)


def norm_cdf(z):
    return special.ndtr(z)


def log_norm_cdf(z):
    """log Phi(z), finite for every finite z.

    For negative arguments the scaled complementary error function is used,
    ``Phi(z) = erfcx(-z/sqrt2) exp(-z^2/2) / 2``, so the tail is never formed
    as a tiny probability before the logarithm.
    """
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    neg = z < 0.0
    zn = z[neg]
    out[neg] = _LOG_HALF + np.log(special.erfcx(-zn / _SQRT2)) - 0.5 * zn * zn
    out[~neg] = np.log1p(-0.5 * special.erfc(z[~neg] / _SQRT2))
    return out[()] if out.ndim == 0 else out


def pdf_cdf_ratio(z):
    """Stable ``norm_pdf(z) / norm_cdf(z)`` (inverse Mills ratio of -z)."""
    z = np.asarray(z, dtype=float)
    out = _SQRT_2_OVER_PI / special.erfcx(-z / _SQRT2)
    return out[()] if out.ndim == 0 else out


@numba.njit(cache=True)
def pdf_cdf_ratio_scalar(z: float) -> float:
    """Scalar ``norm_pdf(z) / norm_cdf(z)`` usable from compiled loops."""
    if z > -26.0:
        return math.exp(-0.5 * z * z) / (math.sqrt(2.0 * math.pi) * 0.5 * math.erfc(-z / _SQRT2))
    # Mills-ratio asymptotic series; truncation error < 1e-11 for |z| >= 26
    w = 1.0 / (z * z)
    return -z / (1.0 - w * (1.0 - 3.0 * w * (1.0 - 5.0 * w * (1.0 - 7.0 * w))))


def minimize_1d(
    f: Callable[[float], float],
    lower: float,
    upper: float,
    tol: float = 1e-8,
    n_grid: int = 128,
) -> tuple[float, float]:
    """Bracketing minimizer on ``(lower, upper]``.

    A uniform scan of ``n_grid`` points (the open lower end is never
    evaluated) selects a bracket around the best point, which is then
    shrunk by golden-section search until narrower than ``tol``.

    Returns
    -------
    (argmin, min_value)
    """
    if not lower < upper:
        raise InvalidBracket(f"lower={lower!r} must be < upper={upper!r}")
    h = (upper - lower) / n_grid
    grid = lower + h * np.arange(1, n_grid + 1)
    values = np.array([f(float(x)) for x in grid])
    values = np.where(np.isnan(values), np.inf, values)
    k = int(np.argmin(values))
    best_x, best_f = float(grid[k]), float(values[k])

    a = lower if k == 0 else float(grid[k - 1])
    b = float(grid[min(k + 1, n_grid - 1)]) if k < n_grid - 1 else upper
    c = b - _INV_GOLDEN * (b - a)
    d = a + _INV_GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(500):
        if b - a <= tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_GOLDEN * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    fx = f(x)
    for cand, fv in ((c, fc), (d, fd), (x, fx)):
        if fv < best_f:
            best_x, best_f = float(cand), float(fv)
    return best_x, best_f
