"""Model family, datasets and Gaussian mixture densities.

Covariances follow the eigen-decomposition ``Sigma_g = lambda_g D_g A_g D_g'``
with ``|A_g| = 1``. Each member of the family fixes whether volume, shape and
orientation are shared across components.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

LOG_2PI = math.log(2.0 * math.pi)


class UnsupportedModelError(ValueError):
    """Raised for family members without conjugate priors (EVE, VVE)."""


class Constraint(str, Enum):
    EQUAL = "equal"
    VARIABLE = "variable"
    NONE = "none"


class ModelId(str, Enum):
    """The 12 covariance structures with conjugate variational updates."""

    EII = "EII"
    VII = "VII"
    EEI = "EEI"
    VEI = "VEI"
    EVI = "EVI"
    VVI = "VVI"
    EEE = "EEE"
    VEE = "VEE"
    EEV = "EEV"
    VEV = "VEV"
    EVV = "EVV"
    VVV = "VVV"

    @classmethod
    def parse(cls, name: str) -> "ModelId":
        key = name.strip().upper()
        if key in ("EVE", "VVE"):
            raise UnsupportedModelError(
                f"model {key} has no conjugate prior and is not implemented")
        try:
            return cls(key)
        except ValueError:
            raise UnsupportedModelError(f"unknown model {name!r}") from None

    @property
    def volume(self) -> Constraint:
        return _LETTER[self.value[0]]

    @property
    def shape(self) -> Constraint:
        if self.value[1:] == "II":
            return Constraint.NONE
        return _LETTER[self.value[1]]

    @property
    def orientation(self) -> Constraint:
        if self.value[2] == "I":
            return Constraint.NONE
        return _LETTER[self.value[2]]

    @property
    def uses_gibbs(self) -> bool:
        """EEV and VEV need Monte Carlo over the orientation posterior."""
        return self in (ModelId.EEV, ModelId.VEV)


_LETTER = {"E": Constraint.EQUAL, "V": Constraint.VARIABLE}


def free_covariance_params(model: ModelId | str, G: int, d: int) -> int:
    """Number of free covariance parameters for ``G`` components in ``d`` dims."""
    if G < 1 or d < 1:
        raise ValueError("G and d must be positive")
    if isinstance(model, str) and not isinstance(model, ModelId):
        model = ModelId.parse(model)
    full = d * (d + 1) // 2
    counts = {
        ModelId.EII: 1,
        ModelId.VII: G,
        ModelId.EEI: d,
        ModelId.VEI: d + G - 1,
        ModelId.EVI: d * G - G + 1,
        ModelId.VVI: d * G,
        ModelId.EEE: full,
        ModelId.VEE: full + G,
        ModelId.EEV: G * full - (G - 1) * d,
        ModelId.VEV: G * full - (G - 1) * (d - 1),
        ModelId.EVV: G * full - (G - 1),
        ModelId.VVV: G * full,
    }
    return counts[model]


def free_params(model: ModelId, G: int, d: int) -> int:
    """Total free parameters: mixing weights, means and covariances."""
    return (G - 1) + G * d + free_covariance_params(model, G, d)


@dataclass(frozen=True)
class Dataset:
    """Observation matrix with optional known labels.

    ``labels`` holds 1-based class indices for known rows and 0 for unknown
    rows. ``truth`` is ground-truth metadata used only for evaluation.
    """

    Y: np.ndarray
    labels: Optional[np.ndarray] = None
    truth: Optional[np.ndarray] = None
    columns: Optional[Sequence[str]] = field(default=None, compare=False)

    def __post_init__(self):
        Y = np.atleast_2d(np.asarray(self.Y, dtype=float))
        if Y.ndim != 2 or Y.shape[0] < 1 or Y.shape[1] < 1:
            raise ValueError("Y must be a non-empty n x d matrix")
        if not np.all(np.isfinite(Y)):
            raise ValueError("Y contains non-finite entries")
        object.__setattr__(self, "Y", Y)
        for name in ("labels", "truth"):
            v = getattr(self, name)
            if v is None:
                continue
            v = np.asarray(v, dtype=int).ravel()
            if v.shape[0] != Y.shape[0]:
                raise ValueError(f"{name} length {v.shape[0]} != n={Y.shape[0]}")
            if np.any(v < 0):
                raise ValueError(f"{name} must be non-negative (0 = unknown)")
            object.__setattr__(self, name, v)

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def d(self) -> int:
        return self.Y.shape[1]

    @property
    def known(self) -> np.ndarray:
        """Boolean mask of rows with a known class."""
        if self.labels is None:
            return np.zeros(self.n, dtype=bool)
        return self.labels > 0

    @property
    def is_classification(self) -> bool:
        return bool(self.known.any())


@dataclass(frozen=True)
class CovDecomposition:
    """Volume/shape/orientation factors for each component.

    lam: (G,), A: (G, d) diagonals of the shape matrices, D: (G, d, d).
    """

    lam: np.ndarray
    A: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        lam = np.atleast_1d(np.asarray(self.lam, dtype=float))
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        D = np.asarray(self.D, dtype=float)
        if D.ndim == 2:
            D = D[None]
        if np.any(lam <= 0) or np.any(A <= 0):
            raise ValueError("volumes and shape diagonals must be positive")
        if not np.allclose(np.prod(A, axis=1), 1.0, rtol=0, atol=1e-10):
            raise ValueError("shape matrices must have determinant 1")
        eye = np.eye(D.shape[-1])
        for Dg in D:
            if np.max(np.abs(Dg.T @ Dg - eye)) > 1e-10:
                raise ValueError("orientation matrices must be orthogonal")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "D", D)


def reconstruct_sigma(dec: CovDecomposition, g: int) -> np.ndarray:
    """Return ``lambda_g D_g A_g D_g'`` (indices broadcast when shared)."""
    lam = dec.lam[g if dec.lam.shape[0] > 1 else 0]
    A = dec.A[g if dec.A.shape[0] > 1 else 0]
    D = dec.D[g if dec.D.shape[0] > 1 else 0]
    S = lam * (D * A) @ D.T
    return 0.5 * (S + S.T)


@dataclass(frozen=True)
class MixturePoint:
    """Point estimate of mixture parameters: weights, means, precisions."""

    rho: np.ndarray
    mu: np.ndarray
    T: np.ndarray

    def __post_init__(self):
        rho = np.atleast_1d(np.asarray(self.rho, dtype=float))
        mu = np.atleast_2d(np.asarray(self.mu, dtype=float))
        T = np.asarray(self.T, dtype=float)
        if T.ndim == 2:
            T = T[None]
        if np.any(rho <= 0) or abs(rho.sum() - 1.0) > 1e-12:
            raise ValueError("mixing proportions must be positive and sum to 1")
        if not (rho.shape[0] == mu.shape[0] == T.shape[0]):
            raise ValueError("rho, mu and T disagree on G")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "T", T)

    @property
    def G(self) -> int:
        return self.rho.shape[0]

    def permuted(self, order) -> "MixturePoint":
        order = np.asarray(order)
        return MixturePoint(self.rho[order], self.mu[order], self.T[order])


def _logdet_spd(T: np.ndarray) -> float:
    try:
        L = np.linalg.cholesky(T)
    except np.linalg.LinAlgError:
        raise ValueError("precision matrix is not positive definite") from None
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def log_gaussian_density(y, mu, T) -> float:
    """Log N(y; mu, T^{-1}) parameterised by the precision ``T``."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    T = np.atleast_2d(np.asarray(T, dtype=float))
    d = y.shape[0]
    r = y - mu
    return -0.5 * d * LOG_2PI + 0.5 * _logdet_spd(T) - 0.5 * float(r @ T @ r)


def component_log_densities(Y: np.ndarray, mu: np.ndarray, T: np.ndarray) -> np.ndarray:
    """(n, G) matrix of log N(y_i; mu_g, T_g^{-1})."""
    Y = np.atleast_2d(Y)
    n, d = Y.shape
    G = mu.shape[0]
    out = np.empty((n, G))
    for g in range(G):
        r = Y - mu[g]
        quad = np.einsum("ij,jk,ik->i", r, T[g], r)
        out[:, g] = -0.5 * d * LOG_2PI + 0.5 * _logdet_spd(T[g]) - 0.5 * quad
    return out


def mixture_log_likelihood(data: Dataset | np.ndarray, point: MixturePoint) -> float:
    """Sum over rows of log sum_g rho_g N(y_i; mu_g, T_g^{-1})."""
    Y = data.Y if isinstance(data, Dataset) else np.atleast_2d(np.asarray(data, float))
    if Y.size == 0:
        raise ValueError("empty dataset")
    logp = component_log_densities(Y, point.mu, point.T) + np.log(point.rho)
    return float(np.sum(logsumexp(logp, axis=1)))
