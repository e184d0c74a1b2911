"""Soft-label transferred GP classification.

Two latent functions share one input kernel: a source function observed
through the soft labels with unit Gaussian noise, and a target function
observed through probit hard labels. Their cross-covariance is ``rho * k``.
Joint latent vectors are ordered target block first, then source block.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from ._ep import EPConfig, SiteState, finalize, gaussian_site_log_scale, predict, run_ep
from .errors import RhoOutOfRange
from .gpc import GpcPosterior, _fit_with_prior, check_labels, probit_predictive
from .kernels import KernelSpec
from .numerics import PsdFactor, psd_factorize

FORMAT_NAME = "privileged_gp.slt_model"
FORMAT_VERSION = 1


def _check_rho(rho: float) -> float:
    rho = float(rho)
    if not 0.0 <= rho <= 1.0:
        raise RhoOutOfRange(f"rho={rho!r} outside [0, 1]")
    return rho


@dataclass(frozen=True)
class JointPrior:
    rho: float
    k_x_gram: np.ndarray
    joint_cov: np.ndarray

    @property
    def n(self) -> int:
        return self.k_x_gram.shape[0]


def build_joint_prior(K_X, rho: float) -> JointPrior:
    """Kronecker prior ``[[1, rho], [rho, 1]] (x) K_X``."""
    rho = _check_rho(rho)
    K_X = np.asarray(K_X, dtype=float)
    if K_X.ndim != 2 or K_X.shape[0] != K_X.shape[1]:
        raise ValueError(f"K_X must be square, got {K_X.shape}")
    if not np.allclose(K_X, K_X.T, rtol=0.0, atol=1e-10 * max(1.0, np.abs(K_X).max())):
        raise ValueError("K_X must be symmetric")
    joint = np.kron(np.array([[1.0, rho], [rho, 1.0]]), K_X)
    return JointPrior(rho, K_X, joint)


@dataclass
class SltModel:
    prior: JointPrior
    soft_labels: np.ndarray
    labels: np.ndarray
    target_sites: SiteState
    joint_mean: np.ndarray
    joint_cov_post: np.ndarray
    b_factor: PsdFactor
    kernel: KernelSpec
    training_inputs: np.ndarray
    joint_log_marginal: float
    soft_log_marginal: float
    converged: bool
    sweeps_used: int

    @property
    def rho(self) -> float:
        return self.prior.rho

    @property
    def n(self) -> int:
        return self.prior.n

    def site_nu(self) -> np.ndarray:
        """All 2n site natural means; the source block is exactly ``s``."""
        return np.concatenate([self.target_sites.nu_tilde, self.soft_labels])

    def site_tau(self) -> np.ndarray:
        """All 2n site precisions; the source block is exactly one."""
        return np.concatenate([self.target_sites.tau_tilde, np.ones(self.n)])


def _source_log_scale(s: np.ndarray) -> np.ndarray:
    return gaussian_site_log_scale(s, np.ones_like(s), s, 1.0)


def _check_inputs(X, y, s):
    X = kernels._as_points(X)
    y = check_labels(y)
    s = np.asarray(s, dtype=float).ravel()
    if not (X.shape[0] == y.shape[0] == s.shape[0]):
        raise ValueError(f"sizes differ: {X.shape[0]} inputs, {y.shape[0]} labels, {s.shape[0]} soft labels")
    return X, y, s


def _model_from_ep(prior, ep, X, y, s, kernel) -> SltModel:
    n = prior.n
    return SltModel(
        prior=prior,
        soft_labels=s,
        labels=y,
        target_sites=SiteState(ep.nu[:n].copy(), ep.tau[:n].copy(), ep.log_z_target),
        joint_mean=ep.mean,
        joint_cov_post=ep.cov,
        b_factor=ep.b_factor,
        kernel=kernel,
        training_inputs=X,
        joint_log_marginal=ep.log_marginal,
        soft_log_marginal=soft_label_log_marginal(prior.k_x_gram, s),
        converged=ep.converged,
        sweeps_used=ep.sweeps,
    )


def fit_slt(X, y, s, kernel: KernelSpec, rho: float, config: EPConfig = EPConfig()) -> SltModel:
    """Joint EP over target and source latents.

    Source sites are exact Gaussians installed once; only the n target sites
    are iterated, with cavities taken from the 2n-dimensional posterior.
    """
    rho = _check_rho(rho)
    X, y, s = _check_inputs(X, y, s)
    prior = build_joint_prior(kernels.gram(kernel, X), rho)
    n = prior.n
    ep = run_ep(
        prior.joint_cov,
        np.zeros(2 * n),
        y,
        fixed_nu=s,
        fixed_tau=np.ones(n),
        fixed_log_scale=_source_log_scale(s),
        config=config,
    )
    return _model_from_ep(prior, ep, X, y, s, kernel)


def predict_latent_slt(model: SltModel, X_test):
    """Predictive latent mean/variance of the target function."""
    X_test = np.asarray(X_test, dtype=float)
    single = X_test.ndim == 1 and model.training_inputs.shape[1] == X_test.shape[0]
    Xt = X_test[None, :] if single else kernels._as_points(X_test)
    kx = kernels.cross(model.kernel, model.training_inputs, Xt)
    k_hat = np.vstack([kx, model.rho * kx])
    mu, var = predict(
        k_hat,
        kernels.diag(model.kernel, Xt),
        np.zeros(Xt.shape[0]),
        model.site_nu(),
        model.site_tau(),
        model.b_factor,
        np.zeros(2 * model.n),
        model.prior.joint_cov,
    )
    if single:
        return float(mu[0]), float(var[0])
    return mu, var


def predict_prob_slt(model: SltModel, X_test):
    mu, var = predict_latent_slt(model, X_test)
    p = probit_predictive(mu, var)
    return float(p) if np.ndim(p) == 0 else p


def soft_label_log_marginal(K_X, s) -> float:
    """Exact ``log N(s | 0, K_X + I)``."""
    K_X = np.asarray(K_X, dtype=float)
    s = np.asarray(s, dtype=float).ravel()
    n = s.shape[0]
    fac = psd_factorize(K_X + np.eye(n))
    w = fac.solve_lower(s)
    return float(-0.5 * w @ w - 0.5 * fac.log_det - 0.5 * n * math.log(2.0 * math.pi))


def conditional_log_marginal(model) -> float:
    """EP estimate of ``log p(y | s, X)``.

    For a joint model this is the joint EP log marginal minus the exact
    soft-label log marginal. A posterior from :func:`modified_prior_fit`
    already conditions on ``s`` through its prior, so its EP log marginal is
    returned unchanged.
    """
    if isinstance(model, SltModel):
        return model.joint_log_marginal - model.soft_log_marginal
    if isinstance(model, GpcPosterior):
        return model.log_marginal
    raise TypeError(f"unsupported model type {type(model).__name__}")


class SoftLabelPrior:
    """Target-function prior after conditioning the joint GP on the soft labels.

    mean(x)     = rho k(x)^T (K_X + noise I)^{-1} s
    cov(x, x')  = k(x, x') - rho^2 k(x)^T (K_X + noise I)^{-1} k(x')

    ``source_noise=1`` matches the unit-variance soft-label likelihood of the
    joint model; ``source_noise=0`` conditions on noise-free source values.
    """

    def __init__(self, kernel: KernelSpec, inputs, soft_labels, rho: float, source_noise: float = 1.0):
        self.kernel = kernel
        self.inputs = kernels._as_points(inputs)
        self.soft_labels = np.asarray(soft_labels, dtype=float).ravel()
        self.rho = _check_rho(rho)
        self.source_noise = float(source_noise)
        self._K = kernels.gram(kernel, self.inputs)
        n = self._K.shape[0]
        self._fac = psd_factorize(self._K + self.source_noise * np.eye(n))
        self._w = self._fac.solve(self.soft_labels)

    def train_mean(self) -> np.ndarray:
        return self.rho * (self._K @ self._w)

    def train_cov(self) -> np.ndarray:
        if self.rho == 0.0:
            return self._K.copy()
        A = self._fac.solve(self._K)
        C = self._K - self.rho**2 * (self._K @ A)
        return 0.5 * (C + C.T)

    def test_terms(self, X_test):
        kx = kernels.cross(self.kernel, self.inputs, X_test)
        A = self._fac.solve(kx)
        r2 = self.rho**2
        cross = kx - r2 * (self._K @ A)
        dg = kernels.diag(self.kernel, X_test) - r2 * np.sum(kx * A, axis=0)
        mean = self.rho * (kx.T @ self._w)
        return cross, dg, mean


def modified_prior_fit(
    X, y, s, kernel: KernelSpec, rho: float, config: EPConfig = EPConfig(), source_noise: float = 1.0
) -> GpcPosterior:
    """Single-task probit EP under the soft-label-conditioned prior.

    With the default unit source noise this reaches the same target
    posterior and conditional log marginal as :func:`fit_slt` using n x n
    instead of 2n x 2n algebra.
    """
    X, y, s = _check_inputs(X, y, s)
    return _fit_with_prior(SoftLabelPrior(kernel, X, s, rho, source_noise), y, config)


def save_model(model: SltModel, path) -> None:
    """Write a fitted model as a versioned JSON record (floats round-trip exactly)."""
    record = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "kernel": model.kernel.to_dict(),
        "rho": model.rho,
        "training_inputs": model.training_inputs.tolist(),
        "labels": model.labels.tolist(),
        "soft_labels": model.soft_labels.tolist(),
        "target_nu": model.target_sites.nu_tilde.tolist(),
        "target_tau": model.target_sites.tau_tilde.tolist(),
        "converged": bool(model.converged),
        "sweeps_used": int(model.sweeps_used),
    }
    Path(path).write_text(json.dumps(record))


def load_model(path) -> SltModel:
    record = json.loads(Path(path).read_text())
    if record.get("format") != FORMAT_NAME:
        raise ValueError(f"not a saved SLT model: format={record.get('format')!r}")
    if record.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model version {record.get('version')!r}")
    kernel = KernelSpec.from_dict(record["kernel"])
    X = np.asarray(record["training_inputs"], dtype=float)
    y = np.asarray(record["labels"], dtype=float)
    s = np.asarray(record["soft_labels"], dtype=float)
    prior = build_joint_prior(kernels.gram(kernel, X), record["rho"])
    n = prior.n
    nu = np.concatenate([np.asarray(record["target_nu"], dtype=float), s])
    tau = np.concatenate([np.asarray(record["target_tau"], dtype=float), np.ones(n)])
    ep = finalize(
        prior.joint_cov,
        np.zeros(2 * n),
        y,
        nu,
        tau,
        _source_log_scale(s),
        record["converged"],
        record["sweeps_used"],
    )
    return _model_from_ep(prior, ep, X, y, s, kernel)
