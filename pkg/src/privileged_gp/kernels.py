"""Covariance functions over real vectors.

All positive hyperparameters are stored as logarithms so that the search
in :mod:`privileged_gp.model_selection` can work on an unconstrained box.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DimensionMismatch


class Family(str, enum.Enum):
    RBF = "rbf"
    LINEAR = "linear"


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus log-space hyperparameters.

    RBF:    ``amplitude * exp(-|x - x'|^2 / (2 l^2))``
    Linear: ``signal_variance * x . x'``
    """

    family: Family = Family.RBF
    log_length_scale: float = 0.0
    log_amplitude: float = 0.0
    log_signal_variance: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))

    @classmethod
    def rbf(cls, length_scale: float = 1.0, amplitude: float = 1.0) -> "KernelSpec":
        return cls(Family.RBF, math.log(length_scale), math.log(amplitude), 0.0)

    @classmethod
    def linear(cls, signal_variance: float = 1.0) -> "KernelSpec":
        return cls(Family.LINEAR, 0.0, 0.0, math.log(signal_variance))

    @property
    def length_scale(self) -> float:
        return math.exp(self.log_length_scale)

    @property
    def amplitude(self) -> float:
        return math.exp(self.log_amplitude)

    @property
    def signal_variance(self) -> float:
        return math.exp(self.log_signal_variance)

    def param_names(self) -> tuple[str, ...]:
        """Names of the hyperparameters that are meaningful for the family."""
        if self.family is Family.RBF:
            return ("log_length_scale", "log_amplitude")
        return ("log_signal_variance",)

    def with_params(self, **params: float) -> "KernelSpec":
        return replace(self, **{k: float(v) for k, v in params.items()})

    def to_dict(self) -> dict:
        return {
            "family": self.family.value,
            "log_length_scale": self.log_length_scale,
            "log_amplitude": self.log_amplitude,
            "log_signal_variance": self.log_signal_variance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(
            Family(d["family"]),
            float(d["log_length_scale"]),
            float(d["log_amplitude"]),
            float(d["log_signal_variance"]),
        )


def _as_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D array of points, got shape {x.shape}")
    return x


def evaluate(spec: KernelSpec, x, x_prime) -> float:
    """Kernel value for a single pair of vectors."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x_prime = np.atleast_1d(np.asarray(x_prime, dtype=float))
    if x.shape != x_prime.shape:
        raise DimensionMismatch(f"{x.shape} vs {x_prime.shape}")
    if spec.family is Family.RBF:
        d2 = float(np.sum((x - x_prime) ** 2))
        return spec.amplitude * math.exp(-0.5 * d2 / spec.length_scale**2)
    return spec.signal_variance * float(np.dot(x, x_prime))


def _sq_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return cdist(a, b, "sqeuclidean")


def cross(spec: KernelSpec, X, Z) -> np.ndarray:
    """|X| x |Z| matrix of kernel values."""
    X = _as_points(X)
    Z = np.asarray(Z, dtype=float)
    if Z.size == 0:
        return np.zeros((X.shape[0], 0))
    Z = _as_points(Z)
    if X.shape[1] != Z.shape[1]:
        raise DimensionMismatch(f"input dimension {X.shape[1]} vs {Z.shape[1]}")
    if spec.family is Family.RBF:
        return spec.amplitude * np.exp(-0.5 * _sq_dist(X, Z) / spec.length_scale**2)
    return spec.signal_variance * (X @ Z.T)


def gram(spec: KernelSpec, X) -> np.ndarray:
    """Symmetric Gram matrix; the upper triangle is mirrored onto the lower."""
    X = _as_points(X)
    if X.shape[0] == 0:
        raise DimensionMismatch("empty input set")
    K = cross(spec, X, X)
    iu = np.triu_indices(K.shape[0], 1)
    K.T[iu] = K[iu]
    if spec.family is Family.RBF:
        np.fill_diagonal(K, spec.amplitude)
    return K


def diag(spec: KernelSpec, X) -> np.ndarray:
    """Prior variances k(x, x) for every row of ``X``."""
    X = _as_points(X)
    if spec.family is Family.RBF:
        return np.full(X.shape[0], spec.amplitude)
    return spec.signal_variance * np.sum(X * X, axis=1)


def median_distance(X) -> float:
    """Median pairwise Euclidean distance (length-scale heuristic)."""
    X = _as_points(X)
    if X.shape[0] < 2:
        return 1.0
    iu = np.triu_indices(X.shape[0], 1)
    med = float(np.median(np.sqrt(_sq_dist(X, X)[iu])))
    return med if med > 0 else 1.0
