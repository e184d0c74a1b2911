"""Binary Gaussian process classification with a probit likelihood.

Inference is analytic expectation propagation. The same fitted posterior type
is used for the baseline classifier, for the soft-label extractor trained on
privileged features, and for the shifted-prior form of the transfer model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from ._ep import EPConfig, SiteState, predict, run_ep
from .kernels import KernelSpec
from .numerics import PsdFactor, norm_cdf

__all__ = [
    "EPConfig",
    "SiteState",
    "GpcPosterior",
    "KernelPrior",
    "fit_gpc",
    "predict_latent",
    "predict_prob",
    "probit_predictive",
    "log_marginal_gpc",
    "extract_soft_labels",
    "check_labels",
]


_P_MIN = np.finfo(float).tiny
_P_MAX = np.nextafter(1.0, 0.0)


def check_labels(y) -> np.ndarray:
    y = np.asarray(y, dtype=float).ravel()
    if y.size == 0:
        raise ValueError("need at least one training point")
    if not np.all((y == 1.0) | (y == -1.0)):
        raise ValueError("labels must be +1 or -1")
    return y


@dataclass(frozen=True)
class KernelPrior:
    """Zero-mean GP prior given by a kernel over the training inputs."""

    kernel: KernelSpec
    inputs: np.ndarray

    def train_mean(self) -> np.ndarray:
        return np.zeros(self.inputs.shape[0])

    def train_cov(self) -> np.ndarray:
        return kernels.gram(self.kernel, self.inputs)

    def test_terms(self, X_test):
        """(train-by-test covariance, test prior variances, test prior means)."""
        K_cross = kernels.cross(self.kernel, self.inputs, X_test)
        return K_cross, kernels.diag(self.kernel, X_test), np.zeros(K_cross.shape[1])


@dataclass
class GpcPosterior:
    """EP posterior over the latent values at the training inputs."""

    sites: SiteState
    mean: np.ndarray
    cov: np.ndarray
    b_factor: PsdFactor
    kernel: KernelSpec
    training_inputs: np.ndarray
    log_marginal: float
    converged: bool
    sweeps_used: int
    prior: object = field(repr=False)
    prior_cov: np.ndarray = field(repr=False)
    prior_mean: np.ndarray = field(repr=False)
    incremental_cov: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.mean.shape[0]


def _fit_with_prior(prior, y, config: EPConfig) -> GpcPosterior:
    y = check_labels(y)
    K = prior.train_cov()
    m = prior.train_mean()
    if K.shape[0] != y.shape[0]:
        raise ValueError(f"{K.shape[0]} inputs but {y.shape[0]} labels")
    ep = run_ep(K, m, y, config=config)
    return GpcPosterior(
        sites=SiteState(ep.nu, ep.tau, ep.log_z_target),
        mean=ep.mean,
        cov=ep.cov,
        b_factor=ep.b_factor,
        kernel=prior.kernel,
        training_inputs=prior.inputs,
        log_marginal=ep.log_marginal,
        converged=ep.converged,
        sweeps_used=ep.sweeps,
        prior=prior,
        prior_cov=K,
        prior_mean=m,
        incremental_cov=ep.incremental_cov,
    )


def fit_gpc(X, y, kernel: KernelSpec, config: EPConfig = EPConfig()) -> GpcPosterior:
    """Fit a zero-mean GP classifier by EP."""
    X = kernels._as_points(X)
    return _fit_with_prior(KernelPrior(kernel, X), y, config)


def predict_latent(post: GpcPosterior, X_test):
    """Predictive latent mean and variance.

    ``X_test`` may be a single vector or a matrix of row vectors; the return
    type follows (scalars for a single vector, arrays otherwise).
    """
    X_test = np.asarray(X_test, dtype=float)
    single = X_test.ndim == 1 and post.training_inputs.shape[1] == X_test.shape[0]
    Xt = X_test[None, :] if single else kernels._as_points(X_test)
    K_cross, k_diag, m_test = post.prior.test_terms(Xt)
    mu, var = predict(
        K_cross,
        k_diag,
        m_test,
        post.sites.nu_tilde,
        post.sites.tau_tilde,
        post.b_factor,
        post.prior_mean,
        post.prior_cov,
    )
    if single:
        return float(mu[0]), float(var[0])
    return mu, var


def probit_predictive(mu, var):
    """Class-(+1) probability Phi(mu / sqrt(1 + var)), kept strictly inside (0, 1)."""
    p = norm_cdf(np.asarray(mu) / np.sqrt(1.0 + np.asarray(var)))
    return np.clip(p, _P_MIN, _P_MAX)


def predict_prob(post: GpcPosterior, X_test):
    mu, var = predict_latent(post, X_test)
    p = probit_predictive(mu, var)
    return float(p) if np.ndim(p) == 0 else p


def log_marginal_gpc(post: GpcPosterior) -> float:
    """EP approximation of log p(y | X)."""
    return post.log_marginal


def extract_soft_labels(
    X_priv, y, kernel: KernelSpec, config: EPConfig = EPConfig()
) -> tuple[np.ndarray, GpcPosterior]:
    """Soft labels = posterior latent means of a GPC fitted on privileged features.

    The fitted posterior is returned alongside so callers can report the
    extractor kernel or reuse it for prediction on privileged test features.
    """
    post = fit_gpc(X_priv, y, kernel, config)
    return post.mean.copy(), post
