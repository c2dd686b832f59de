"""Variational state and the coordinate-ascent updates for each covariance model.

Precision blocks by model (``vol`` = gamma on the volume precision
lambda^-1, ``diag`` = per-coordinate gammas, ``wish`` = Wishart):

    EII vol(1)          VII vol(G)          EEI diag(1) on (lambda A)^-1
    VEI vol(G)+diag(1)  EVI vol(1)+diag(G)  VVI vol(G)+diag(G)   (diag on c A^-1)
    EEE wish(1)         VEE vol(G)+wish(1)  EVV vol(1)+wish(G)   VVV wish(G)
    EEV diag(1)+orient  VEV vol(G)+diag(1)+orient

Scalar and diagonal scatter terms are the trace and diagonal of
``S_g = sum_i z_ig (y_i - m_g)(y_i - m_g)' + beta0_g (m_g - m0_g)(m_g - m0_g)'``,
which equals ``sum z y y' + beta0 m0 m0' - beta m m'``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.special import digamma, logsumexp

from .models import Dataset, MixturePoint, ModelId
from .priors import HyperPriors, InitConfig
from .stiefel import mc_precision_expectations

logger = logging.getLogger(__name__)

_VOLUME_SHARED = {ModelId.EII, ModelId.EVI, ModelId.EVV}
_VOLUME_PER_G = {ModelId.VII, ModelId.VEI, ModelId.VVI, ModelId.VEE, ModelId.VEV}
_DIAG_SHARED = {ModelId.EEI, ModelId.VEI, ModelId.EEV, ModelId.VEV}
_DIAG_PER_G = {ModelId.EVI, ModelId.VVI}
_WISH_SHARED = {ModelId.EEE, ModelId.VEE}
_WISH_PER_G = {ModelId.EVV, ModelId.VVV}
# diag block is a shape (c A^-1) to be normalised, not (lambda A)^-1
_DIAG_IS_SHAPE = {ModelId.VEI, ModelId.EVI, ModelId.VVI, ModelId.VEV}
# Wishart block carries orientation+shape only; volume comes from a gamma
_WISH_IS_SHAPE = {ModelId.VEE, ModelId.EVV}


class DegenerateFitError(RuntimeError):
    """Raised when every component falls below the pruning threshold."""


@dataclass
class VbState:
    """Variational hyperparameters for the surviving components.

    ``comp`` maps each surviving column to its original component index, which
    is how prior arrays are looked up after pruning. Shared blocks have a
    leading axis of length 1.
    """

    model: ModelId
    priors: HyperPriors
    Z: np.ndarray
    comp: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    m: np.ndarray
    frozen: np.ndarray
    vol_a: Optional[np.ndarray] = None
    vol_b: Optional[np.ndarray] = None
    diag_a: Optional[np.ndarray] = None
    diag_b: Optional[np.ndarray] = None
    wish_v: Optional[np.ndarray] = None
    wish_S: Optional[np.ndarray] = None
    orient: Optional[np.ndarray] = None
    E_T: Optional[np.ndarray] = None
    E_logdet: Optional[np.ndarray] = None

    @property
    def G(self) -> int:
        return self.Z.shape[1]

    @property
    def d(self) -> int:
        return self.m.shape[1]

    @property
    def protected(self) -> np.ndarray:
        """Components holding at least one known label are never pruned."""
        if not self.frozen.any():
            return np.zeros(self.G, dtype=bool)
        return self.Z[self.frozen].max(axis=0) > 0.5

    def E_log_rho(self) -> np.ndarray:
        return digamma(self.alpha) - digamma(self.alpha.sum())


# -- expectation helpers ----------------------------------------------------

def gamma_mean(a, b):
    return np.asarray(a) / np.asarray(b)


def gamma_log_mean(a, b):
    return digamma(np.asarray(a) / 2.0) - np.log(np.asarray(b) / 2.0)


def wishart_mean(v, S):
    """E[T] for T ~ Wishart(v, inv(S))."""
    return v * np.linalg.inv(S)


def wishart_log_det_mean(v, S) -> float:
    d = S.shape[0]
    k = np.arange(1, d + 1)
    sign, logdet = np.linalg.slogdet(S)
    return float(np.sum(digamma((v + 1 - k) / 2.0)) + d * math.log(2.0) - logdet)


def normalize_shape(expected_diag) -> tuple[np.ndarray, float]:
    """Split positive diagonal expectations into ``c * A_inv`` with ``|A_inv| = 1``."""
    x = np.asarray(expected_diag, dtype=float)
    if np.any(x <= 0) or not np.all(np.isfinite(x)):
        raise ValueError("shape expectations must be positive and finite")
    c = float(np.exp(np.mean(np.log(x))))
    return x / c, c


def _unit_det(M: np.ndarray) -> np.ndarray:
    d = M.shape[0]
    sign, logdet = np.linalg.slogdet(M)
    return M * math.exp(-logdet / d)


def _spd_or_jitter(S: np.ndarray, what: str) -> np.ndarray:
    S = 0.5 * (S + S.T)
    for attempt in range(2):
        try:
            np.linalg.cholesky(S)
            return S
        except np.linalg.LinAlgError:
            if attempt == 0:
                logger.warning("%s is not positive definite; adding 1e-10 I", what)
                S = S + 1e-10 * np.eye(S.shape[0])
    raise FloatingPointError(f"{what} is not positive definite after jitter")


# -- sufficient statistics --------------------------------------------------

def _scatter(state: VbState, Y: np.ndarray):
    """Effective counts (G,) and scatter matrices S_g (G, d, d)."""
    pri = state.priors
    beta0 = pri.beta0[state.comp]
    m0 = pri.m0[state.comp]
    N = state.Z.sum(axis=0)
    S = np.empty((state.G, state.d, state.d))
    for g in range(state.G):
        r = Y - state.m[g]
        S[g] = (state.Z[:, g, None] * r).T @ r
        dm = state.m[g] - m0[g]
        S[g] += beta0[g] * np.outer(dm, dm)
        S[g] = 0.5 * (S[g] + S[g].T)
    return N, S


def _rotated_diag(state: VbState, S: np.ndarray) -> np.ndarray:
    """Per-component diag(D' S_g D) averaged over orientation samples."""
    D = state.orient
    return np.einsum("gski,gkl,gsli->gi", D, S, D) / D.shape[1]


# -- updates ----------------------------------------------------------------

def update_responsibilities(state: VbState, data: Dataset) -> VbState:
    """Mean-field update of q(z); known-label rows stay one-hot."""
    Y = data.Y
    d = state.d
    logphi = np.empty((Y.shape[0], state.G))
    Elr = state.E_log_rho()
    for g in range(state.G):
        r = Y - state.m[g]
        quad = np.einsum("ij,jk,ik->i", r, state.E_T[g], r)
        logphi[:, g] = Elr[g] + 0.5 * state.E_logdet[g] - 0.5 * (quad + d / state.beta[g])
    logZ = logphi - logsumexp(logphi, axis=1, keepdims=True)
    Z = np.exp(logZ)
    sums = Z.sum(axis=1)
    if np.any(sums <= 0) or not np.all(np.isfinite(sums)):
        raise FloatingPointError("responsibility row underflowed to zero")
    Z /= sums[:, None]
    if state.frozen.any():
        Z[state.frozen] = state.Z[state.frozen]
    return replace(state, Z=Z)


def update_mean_block(state: VbState, data: Dataset) -> VbState:
    pri = state.priors
    beta0 = pri.beta0[state.comp]
    m0 = pri.m0[state.comp]
    N = state.Z.sum(axis=0)
    alpha = pri.alpha0[state.comp] + N
    beta = beta0 + N
    m = (beta0[:, None] * m0 + state.Z.T @ data.Y) / beta[:, None]
    return replace(state, alpha=alpha, beta=beta, m=m)


def _shape_precisions(state: VbState, G: int) -> np.ndarray:
    """Current determinant-one E[A_g^-1]-type factor per component (identity if unset)."""
    model, d = state.model, state.d
    out = np.tile(np.eye(d), (G, 1, 1))
    if model in _DIAG_IS_SHAPE and state.diag_a is not None:
        for g in range(G):
            k = g if state.diag_a.shape[0] > 1 else 0
            out[g] = np.diag(normalize_shape(gamma_mean(state.diag_a[k], state.diag_b[k]))[0])
    elif model in _WISH_IS_SHAPE and state.wish_v is not None:
        for g in range(G):
            k = g if state.wish_v.shape[0] > 1 else 0
            out[g] = _unit_det(wishart_mean(state.wish_v[k], state.wish_S[k]))
    return out


def update_precision_block(state: VbState, data: Dataset) -> VbState:
    """Conjugate gamma/Wishart updates for the state's covariance model.

    When a covariance splits into a volume and a determinant-one shape, the two
    factors are coupled: the volume rate uses the scatter measured in the
    current shape metric, tr(E[A^-1] S_g), and the shape block is then fed the
    scatter scaled by the new E[lambda_g^-1].
    """
    model = state.model
    pri = state.priors
    d, G = state.d, state.G
    N, S = _scatter(state, data.Y)
    if model.uses_gibbs and state.orient is not None:
        # work in each component's own eigenbasis, averaged over samples
        S = np.stack([np.diag(x) for x in _rotated_diag(state, S)])
    coupled = model in _DIAG_IS_SHAPE or model in _WISH_IS_SHAPE
    if coupled:
        U = _shape_precisions(state, G)
        tr = np.einsum("gkl,glk->g", U, S)
    else:
        tr = np.trace(S, axis1=1, axis2=2)
    upd = {}

    if model in _VOLUME_SHARED:
        upd["vol_a"] = np.array([pri.a0 + d * N.sum()])
        upd["vol_b"] = np.array([pri.b0 + tr.sum()])
    elif model in _VOLUME_PER_G:
        upd["vol_a"] = pri.a0 + d * N
        upd["vol_b"] = pri.b0 + tr

    if coupled:
        lam_inv = gamma_mean(upd["vol_a"], upd["vol_b"])
        S = S * np.broadcast_to(lam_inv, (G,))[:, None, None]
    diag = np.diagonal(S, axis1=1, axis2=2)

    if model in _DIAG_SHARED:
        a0, b0 = (pri.al0, pri.be0) if model in _DIAG_IS_SHAPE else (pri.ak0, pri.bk0)
        upd["diag_a"] = (a0 + N.sum())[None, :]
        upd["diag_b"] = (b0 + diag.sum(axis=0))[None, :]
    elif model in _DIAG_PER_G:
        upd["diag_a"] = pri.al0[None, :] + N[:, None]
        upd["diag_b"] = pri.be0[None, :] + diag

    if model in _WISH_SHARED:
        upd["wish_v"] = np.array([pri.wishart_df0 + N.sum()])
        upd["wish_S"] = _spd_or_jitter(pri.wishart_scale0 + S.sum(axis=0), "Wishart scale")[None]
    elif model in _WISH_PER_G:
        upd["wish_v"] = pri.wishart_df0 + N
        upd["wish_S"] = np.stack([
            _spd_or_jitter(pri.wishart_scale0 + S[g], "Wishart scale") for g in range(G)])
    return replace(state, **upd)


def precision_diagonals(state: VbState) -> tuple[np.ndarray, np.ndarray]:
    """Expected diagonal precisions (G, d) and E[log|T_g|] for axis/orientation models.

    For EEV this is (lambda A)^-1; for VEV it is E[lambda_g^-1] times the
    determinant-one normalised E[c A^-1].
    """
    model, G, d = state.model, state.G, state.d
    if model == ModelId.EEV:
        tau = gamma_mean(state.diag_a[0], state.diag_b[0])
        logdet = float(np.sum(gamma_log_mean(state.diag_a[0], state.diag_b[0])))
        return np.tile(tau, (G, 1)), np.full(G, logdet)
    if model == ModelId.VEV:
        A_inv, _ = normalize_shape(gamma_mean(state.diag_a[0], state.diag_b[0]))
        lam_inv = gamma_mean(state.vol_a, state.vol_b)
        logdet = d * gamma_log_mean(state.vol_a, state.vol_b)
        return lam_inv[:, None] * A_inv[None, :], logdet
    raise ValueError(f"{model.value} has no orientation factor")


def refresh_expectations(state: VbState) -> VbState:
    """Recompute E[T_g] and E[log|T_g|] from the precision block."""
    model, G, d = state.model, state.G, state.d
    ET = np.empty((G, d, d))
    logdet = np.empty(G)
    eye = np.eye(d)

    def per(arr, g):
        return arr[g if arr.shape[0] > 1 else 0]

    if model.uses_gibbs:
        tau, logdet = precision_diagonals(state)
        for g in range(G):
            ET[g], _ = mc_precision_expectations(state.orient[g], tau[g])
        return replace(state, E_T=ET, E_logdet=np.asarray(logdet, dtype=float))

    for g in range(G):
        if model in (ModelId.EII, ModelId.VII):
            a, b = per(state.vol_a, g), per(state.vol_b, g)
            ET[g] = gamma_mean(a, b) * eye
            logdet[g] = d * gamma_log_mean(a, b)
        elif model == ModelId.EEI:
            a, b = state.diag_a[0], state.diag_b[0]
            ET[g] = np.diag(gamma_mean(a, b))
            logdet[g] = np.sum(gamma_log_mean(a, b))
        elif model in (ModelId.VEI, ModelId.EVI, ModelId.VVI):
            a, b = per(state.vol_a, g), per(state.vol_b, g)
            A_inv, _ = normalize_shape(gamma_mean(per(state.diag_a, g), per(state.diag_b, g)))
            ET[g] = gamma_mean(a, b) * np.diag(A_inv)
            # |A_g| = 1 by construction, so only the volume enters
            logdet[g] = d * gamma_log_mean(a, b)
        elif model in (ModelId.EEE, ModelId.VVV):
            v, S = per(state.wish_v, g), per(state.wish_S, g)
            ET[g] = wishart_mean(v, S)
            logdet[g] = wishart_log_det_mean(v, S)
        elif model in (ModelId.VEE, ModelId.EVV):
            a, b = per(state.vol_a, g), per(state.vol_b, g)
            v, S = per(state.wish_v, g), per(state.wish_S, g)
            ET[g] = gamma_mean(a, b) * _unit_det(wishart_mean(v, S))
            logdet[g] = d * gamma_log_mean(a, b)
        ET[g] = 0.5 * (ET[g] + ET[g].T)
    return replace(state, E_T=ET, E_logdet=logdet)


def prune_components(state: VbState, threshold: float) -> VbState:
    """Drop components whose effective count is at or below ``threshold``."""
    counts = state.Z.sum(axis=0)
    keep = (counts > threshold) | state.protected
    if not keep.any():
        raise DegenerateFitError(
            f"all {state.G} components have effective count <= {threshold}")
    if keep.all():
        return state
    Z = state.Z[:, keep]
    sums = Z.sum(axis=1, keepdims=True)
    empty = sums[:, 0] <= 0
    if empty.any():
        Z[empty] = 1.0 / Z.shape[1]
        sums[empty] = 1.0
    Z = Z / sums

    return replace(
        state, Z=Z, comp=state.comp[keep], alpha=state.alpha[keep], beta=state.beta[keep],
        m=state.m[keep],
        vol_a=_cut_block(state.vol_a, keep, state.model in _VOLUME_PER_G),
        vol_b=_cut_block(state.vol_b, keep, state.model in _VOLUME_PER_G),
        diag_a=_cut_block(state.diag_a, keep, state.model in _DIAG_PER_G),
        diag_b=_cut_block(state.diag_b, keep, state.model in _DIAG_PER_G),
        wish_v=_cut_block(state.wish_v, keep, state.model in _WISH_PER_G),
        wish_S=_cut_block(state.wish_S, keep, state.model in _WISH_PER_G),
        orient=None if state.orient is None else state.orient[keep],
        E_T=None if state.E_T is None else state.E_T[keep],
        E_logdet=None if state.E_logdet is None else state.E_logdet[keep],
    )


def _cut_block(arr, keep, per_g):
    if arr is None or not per_g:
        return arr
    return arr[keep]


# -- orientation (EEV / VEV) ------------------------------------------------

def orientation_bmf_params(state: VbState, data: Dataset):
    """Batched (Q, P, R) of the orientation posterior for every component.

    Q_g = -S_g / 2, P_g = expected diagonal precision, R_g = C0_g.
    """
    _, S = _scatter(state, data.Y)
    tau, _ = precision_diagonals(state)
    return -0.5 * S, tau, state.priors.C0[state.comp]


def with_orientations(state: VbState, samples: np.ndarray) -> VbState:
    return refresh_expectations(replace(state, orient=np.asarray(samples)))


# -- initialisation ---------------------------------------------------------

def init_state(data: Dataset, cfg: InitConfig, priors: HyperPriors, model: ModelId | str,
               rng: Optional[np.random.Generator] = None) -> VbState:
    """Initial responsibilities plus one sweep of hyperparameter updates."""
    model = ModelId.parse(model) if isinstance(model, str) else model
    priors.validate(model)
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    n, d = data.Y.shape
    G = cfg.G_max
    if priors.G < G:
        raise ValueError(f"priors cover {priors.G} components but G_max={G}")

    known = data.known
    if cfg.strategy == "provided-labels" and not known.any():
        raise ValueError("provided-labels initialisation requires known labels")
    if known.any() and data.labels.max() > G:
        raise ValueError(f"known label {data.labels.max()} exceeds G_max={G}")

    if cfg.strategy == "k-means-labels":
        _, lab = kmeans2(data.Y, G, minit="++", seed=rng)
        Z = np.eye(G)[lab]
    else:
        Z = rng.dirichlet(np.ones(G), size=n)
    if known.any():
        Z[known] = np.eye(G)[data.labels[known] - 1]

    state = VbState(
        model=model, priors=priors, Z=Z, comp=np.arange(G),
        alpha=priors.alpha0[:G].copy(), beta=priors.beta0[:G].copy(),
        m=priors.m0[:G].copy(), frozen=known.copy(),
    )
    if model.uses_gibbs:
        state.orient = np.tile(np.eye(d), (G, 1, 1, 1))
    return sweep_parameters(state, data)


def sweep_parameters(state: VbState, data: Dataset) -> VbState:
    """Mean, precision and expectation updates from the current Z."""
    state = update_mean_block(state, data)
    state = update_precision_block(state, data)
    return refresh_expectations(state)


def point_estimate(state: VbState) -> MixturePoint:
    """Posterior point (alpha / sum alpha, m_g, E[T_g])."""
    return MixturePoint(rho=state.alpha / state.alpha.sum(), mu=state.m, T=state.E_T)
