"""Expectation propagation engine shared by the GPC and SLT-GP models.

Latent vector ``f ~ N(m, K)`` of length N. The first ``n`` coordinates carry
probit likelihoods ``Phi(y_i f_i)`` that are approximated by sites; any
remaining coordinates carry exact Gaussian sites with fixed natural
parameters. Sites are kept in exponential-family form
``t_i(f) = exp(log_z_i) * exp(nu_i f - tau_i f^2 / 2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .numerics import PsdFactor, log_norm_cdf, pdf_cdf_ratio_scalar, psd_factorize


@dataclass(frozen=True)
class EPConfig:
    """EP iteration settings.

    ``order_seed`` permutes the site visiting order of every sweep; ``None``
    visits sites in index order.
    """

    tol: float = 1e-6
    max_sweeps: int = 100
    damping: float = 0.8
    order_seed: int | None = None


@dataclass(frozen=True)
class SiteState:
    nu_tilde: np.ndarray
    tau_tilde: np.ndarray
    log_z_tilde: np.ndarray


@dataclass
class EPResult:
    nu: np.ndarray  # all N site natural means
    tau: np.ndarray  # all N site precisions
    mean: np.ndarray
    cov: np.ndarray
    b_factor: PsdFactor
    log_z_target: np.ndarray
    log_marginal: float
    converged: bool
    sweeps: int
    incremental_cov: np.ndarray


def posterior_from_sites(K, m, nu, tau):
    """Return (Sigma, mu, B factor) for prior N(m, K) times the given sites."""
    s = np.sqrt(tau)
    B = np.eye(K.shape[0]) + s[:, None] * K * s[None, :]
    fac = psd_factorize(B)
    V = fac.solve_lower(s[:, None] * K)
    Sigma = K - V.T @ V
    Sigma = 0.5 * (Sigma + Sigma.T)
    mu = m + Sigma @ (nu - tau * m)
    return Sigma, mu, fac


def gaussian_site_log_scale(nu, tau, obs, noise_var):
    """log scale making exp(nu f - tau f^2/2) equal N(obs | f, noise_var)."""
    return -0.5 * np.log(2.0 * math.pi * noise_var) - 0.5 * obs**2 / noise_var


def _cavity(Sigma_diag, mu, nu, tau):
    tau_c = 1.0 / Sigma_diag - tau
    nu_c = mu / Sigma_diag - nu
    return nu_c, tau_c


def _probit_log_z(y, nu_c, tau_c):
    mc = nu_c / tau_c
    vc = 1.0 / tau_c
    z = y * mc / np.sqrt(1.0 + vc)
    return log_norm_cdf(z)


def _site_log_scale(log_zhat, nu, tau, nu_c, tau_c):
    """log C_i with  Zhat_i = C_i * int N(f | cavity) exp(nu f - tau f^2 / 2) df."""
    mc = nu_c / tau_c
    vc = 1.0 / tau_c
    log_a = (
        nu * mc
        - 0.5 * tau * mc**2
        - 0.5 * np.log1p(vc * tau)
        + 0.5 * (nu - tau * mc) ** 2 * vc / (1.0 + vc * tau)
    )
    return log_zhat - log_a


def gaussian_log_integral(K, m, nu, tau, fac: PsdFactor, Sigma):
    """log of  int N(f | m, K) exp(nu.f - f.T diag(tau) f / 2) df."""
    p = nu - tau * m
    return float(
        nu @ m - 0.5 * np.sum(tau * m * m) - 0.5 * fac.log_det + 0.5 * p @ Sigma @ p
    )


@numba.njit(cache=True)
def _sweep(Sigma, mu, nu, tau, y, order, damping):
    """One sequential pass over the probit sites; updates all arrays in place."""
    N = Sigma.shape[0]
    for i in order:
        s_ii = Sigma[i, i]
        tau_c = 1.0 / s_ii - tau[i]
        if tau_c <= 0.0:
            continue
        nu_c = mu[i] / s_ii - nu[i]
        vc = 1.0 / tau_c
        mc = nu_c * vc
        sq = math.sqrt(1.0 + vc)
        yi = y[i]
        z = yi * mc / sq
        r = pdf_cdf_ratio_scalar(z)
        v_hat = vc - vc * vc * r * (z + r) / (1.0 + vc)
        m_hat = mc + yi * vc * r / sq
        tau_new = 1.0 / v_hat - tau_c
        nu_new = m_hat / v_hat - nu_c
        if tau_new < 0.0:
            # negative precision would break B; zero precision forces zero nu
            tau_new = 0.0
            nu_new = 0.0
        tau_new = damping * tau_new + (1.0 - damping) * tau[i]
        nu_new = damping * nu_new + (1.0 - damping) * nu[i]
        d_tau = tau_new - tau[i]
        d_nu = nu_new - nu[i]
        tau[i] = tau_new
        nu[i] = nu_new
        denom = 1.0 + d_tau * s_ii
        si = Sigma[i, :].copy()
        c_mu = (d_nu - d_tau * mu[i]) / denom
        c_cov = d_tau / denom
        for a in range(N):
            mu[a] += c_mu * si[a]
            ca = c_cov * si[a]
            for b in range(N):
                Sigma[a, b] -= ca * si[b]


def run_ep(
    K: np.ndarray,
    m: np.ndarray,
    y: np.ndarray,
    fixed_nu: np.ndarray | None = None,
    fixed_tau: np.ndarray | None = None,
    fixed_log_scale: np.ndarray | None = None,
    config: EPConfig = EPConfig(),
) -> EPResult:
    """Sequential EP for probit sites on the first ``len(y)`` coordinates."""
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    N = K.shape[0]
    nu = np.zeros(N)
    tau = np.zeros(N)
    if N > n:
        nu[n:] = fixed_nu
        tau[n:] = fixed_tau
    d = config.damping
    rng = np.random.default_rng(config.order_seed) if config.order_seed is not None else None
    y = np.ascontiguousarray(y)

    Sigma, mu, fac = posterior_from_sites(K, m, nu, tau)
    Sigma = np.ascontiguousarray(Sigma)
    converged = False
    sweeps = 0
    incremental = None
    for sweeps in range(1, config.max_sweeps + 1):
        nu_old = nu[:n].copy()
        tau_old = tau[:n].copy()
        order = rng.permutation(n) if rng is not None else np.arange(n)
        _sweep(Sigma, mu, nu, tau, y, order, d)
        incremental = Sigma
        delta = max(
            np.max(np.abs(nu[:n] - nu_old), initial=0.0),
            np.max(np.abs(tau[:n] - tau_old), initial=0.0),
        )
        if delta < config.tol:
            converged = True
            break
        # drop accumulated rank-one rounding before the next sweep
        Sigma, mu, fac = posterior_from_sites(K, m, nu, tau)
        Sigma = np.ascontiguousarray(Sigma)

    return finalize(K, m, y, nu, tau, fixed_log_scale, converged, sweeps, incremental)


def finalize(K, m, y, nu, tau, fixed_log_scale=None, converged=True, sweeps=0, incremental=None):
    """Posterior moments and EP log marginal for fixed site parameters."""
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    N = K.shape[0]
    Sigma, mu, fac = posterior_from_sites(K, m, nu, tau)
    dg = np.diag(Sigma)
    nu_c, tau_c = _cavity(dg[:n], mu[:n], nu[:n], tau[:n])
    log_zhat = _probit_log_z(y, nu_c, tau_c)
    log_scale = _site_log_scale(log_zhat, nu[:n], tau[:n], nu_c, tau_c)
    log_marg = float(np.sum(log_scale)) + gaussian_log_integral(K, m, nu, tau, fac, Sigma)
    if N > n and fixed_log_scale is not None:
        log_marg += float(np.sum(fixed_log_scale))
    return EPResult(
        nu=nu,
        tau=tau,
        mean=mu,
        cov=Sigma,
        b_factor=fac,
        log_z_target=log_scale,
        log_marginal=log_marg,
        converged=converged,
        sweeps=sweeps,
        incremental_cov=None if incremental is None else np.ascontiguousarray(incremental),
    )


def predict(K_cross, k_diag, prior_mean_test, nu, tau, b_factor, m_train, K):
    """Predictive latent mean and variance for test columns of ``K_cross``.

    ``K_cross`` is N x T (train-by-test covariance), ``k_diag`` the T prior
    variances and ``prior_mean_test`` the T prior means.
    """
    s = np.sqrt(tau)
    p = nu - tau * m_train
    alpha = p - s * b_factor.solve(s * (K @ p))
    mu = prior_mean_test + K_cross.T @ alpha
    V = b_factor.solve_lower(s[:, None] * K_cross)
    var = k_diag - np.sum(V * V, axis=0)
    return mu, np.maximum(var, 0.0)
