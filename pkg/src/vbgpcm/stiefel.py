"""Gibbs sampling on the orthogonal group and Monte Carlo precision moments.

The orientation posterior of EEV/VEV components is a matrix
Bingham-von Mises-Fisher law with density proportional to
``exp(tr(Q D P D' + R' D))``. Square ``D`` is sampled two columns at a time:
the span of any two columns is fixed by the others, so each pair update is a
draw of a 2x2 orthogonal matrix, which we sample exactly on a bounded grid.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

logger = logging.getLogger(__name__)

ORTHO_TOL = 1e-10


@dataclass(frozen=True)
class BmfParams:
    """Density kernel ``exp(tr(Q D diag(P) D' + R' D))``."""

    Q: np.ndarray
    P: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        P = np.asarray(self.P, dtype=float)
        if P.ndim == 2:
            if np.max(np.abs(P - np.diag(np.diag(P)))) > 0:
                raise ValueError("P must be diagonal")
            P = np.diag(P).copy()
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if np.max(np.abs(Q - Q.T), initial=0.0) > 1e-10:
            raise ValueError("Q must be symmetric")
        d = Q.shape[0]
        if P.shape != (d,) or R.shape != (d, d):
            raise ValueError("Q, P and R must agree on dimension")
        object.__setattr__(self, "Q", 0.5 * (Q + Q.T))
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "R", R)


@dataclass(frozen=True)
class McConfig:
    n_samples: int = 100
    burn_in: int = 50
    max_restarts: int = 50
    seed: Optional[int] = None

    def __post_init__(self):
        if min(self.n_samples, self.burn_in, self.max_restarts) < 1:
            raise ValueError("McConfig counts must be >= 1")


def uniform_orthogonal(d: int, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """Haar-distributed orthogonal matrices via sign-fixed QR."""
    shape = (d, d) if size is None else (size, d, d)
    X = rng.standard_normal(shape)
    Qm, Rm = np.linalg.qr(X)
    signs = np.sign(np.diagonal(Rm, axis1=-2, axis2=-1))
    signs[signs == 0] = 1.0
    return Qm * signs[..., None, :]


def _polish(X: np.ndarray) -> np.ndarray:
    """Pull a batch of near-orthogonal matrices back onto the group."""
    eye = np.eye(X.shape[-1])
    for _ in range(3):
        err = np.max(np.abs(np.swapaxes(X, -1, -2) @ X - eye))
        if err <= 1e-13:
            break
        if err > 1e-8:
            logger.warning("orthonormality drift %.2e; re-orthonormalising", err)
            U, _, Vt = np.linalg.svd(X)
            X = U @ Vt
        else:
            X = 1.5 * X - 0.5 * X @ np.swapaxes(X, -1, -2) @ X
    err = np.max(np.abs(np.swapaxes(X, -1, -2) @ X - eye))
    if err > 1e-8:
        raise FloatingPointError(f"cannot restore orthonormality (error {err:.2e})")
    return X


def _sample_o2(A: np.ndarray, b: np.ndarray, C: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Exact draws from ``exp(tr(C'Y + diag(b) Y'AY))`` over 2x2 orthogonal Y.

    Batched over the leading axis: A (B,2,2), b (B,2), C (B,2,2).
    Y(theta, s) = [[cos, -s sin], [sin, s cos]]; the log density is a degree-2
    trigonometric polynomial in theta for each sign s. Proposals come from a
    per-cell upper envelope on a uniform grid and are accepted against the
    exact density, so the output has the target law.
    """
    B = A.shape[0]
    db = b[:, 0] - b[:, 1]
    u = 0.5 * db * (A[:, 0, 0] - A[:, 1, 1])
    w = db * A[:, 0, 1]
    signs = np.array([1.0, -1.0])
    # k1[s], k2[s]: coefficients of cos(theta), sin(theta)
    k1 = C[:, 0, 0][:, None] + signs[None, :] * C[:, 1, 1][:, None]
    k2 = C[:, 1, 0][:, None] - signs[None, :] * C[:, 0, 1][:, None]
    curv = np.max(np.hypot(k1, k2), axis=1) + 4.0 * np.hypot(u, w)

    M = 256
    worst = float(np.max(curv, initial=0.0))
    while M < 65536 and (2 * math.pi / M) ** 2 * worst / 8.0 > 0.1:
        M *= 2
    h = 2 * math.pi / M
    grid = np.arange(M + 1) * h

    def logf(theta):
        # theta (B, K) -> (B, 2, K), one row per sign
        c1, s1 = np.cos(theta), np.sin(theta)
        quad = u[:, None] * np.cos(2 * theta) + w[:, None] * np.sin(2 * theta)
        return (k1[:, :, None] * c1[:, None, :] + k2[:, :, None] * s1[:, None, :]
                + quad[:, None, :])

    fg = logf(np.broadcast_to(grid, (B, M + 1)))  # (B, 2, M+1)
    env = np.maximum(fg[:, :, :-1], fg[:, :, 1:]) + (h * h / 8.0) * curv[:, None, None]
    flat = env.reshape(B, -1)
    top = flat.max(axis=1, keepdims=True)
    cdf = np.cumsum(np.exp(flat - top), axis=1)
    cdf /= cdf[:, -1:]

    theta = np.empty(B)
    s_out = np.empty(B, dtype=int)
    pending = np.arange(B)
    for _ in range(10000):
        if pending.size == 0:
            break
        k = pending.size
        cell = np.minimum(
            (cdf[pending] < rng.random(k)[:, None]).sum(axis=1), 2 * M - 1)
        s_idx = cell // M
        j = cell % M
        th = (j + rng.random(k)) * h
        lf = _logf_rows(th, s_idx, k1[pending], k2[pending], u[pending], w[pending])
        bound = env[pending, s_idx, j]
        ok = np.log(rng.random(k)) < lf - bound
        theta[pending[ok]] = th[ok]
        s_out[pending[ok]] = s_idx[ok]
        pending = pending[~ok]
    else:  # pragma: no cover - acceptance rate is bounded well away from 0
        raise RuntimeError("2x2 orthogonal sampler failed to accept")

    s = signs[s_out]
    c, sn = np.cos(theta), np.sin(theta)
    Y = np.empty((B, 2, 2))
    Y[:, 0, 0] = c
    Y[:, 1, 0] = sn
    Y[:, 0, 1] = -s * sn
    Y[:, 1, 1] = s * c
    return Y


def _logf_rows(theta, s_idx, k1, k2, u, w):
    """Row-wise log kernel of the 2x2 sampler for chosen signs."""
    rows = np.arange(theta.shape[0])
    return (k1[rows, s_idx] * np.cos(theta) + k2[rows, s_idx] * np.sin(theta)
            + u * np.cos(2 * theta) + w * np.sin(2 * theta))


def _gibbs_sweep(Q, P, R, X, rng):
    """One sweep of d random column-pair updates, batched over matrices."""
    B, d, _ = X.shape
    if d == 1:
        # O(1) = {+1, -1}; density exp(Q P + R x) over x in {+-1}
        logit = 2.0 * R[:, 0, 0]
        p_plus = 1.0 / (1.0 + np.exp(-logit))
        X = np.where(rng.random(B) < p_plus, 1.0, -1.0)[:, None, None]
        return X
    rows = np.arange(B)
    for _ in range(d):
        pair = np.sort(np.argsort(rng.random((B, d)), axis=1)[:, :2], axis=1)
        # the span of the chosen columns is the null space of the others
        N = X[rows[:, None], :, pair].transpose(0, 2, 1)  # (B, d, 2)
        An = np.swapaxes(N, 1, 2) @ Q @ N
        bn = np.take_along_axis(P, pair, axis=1)
        Rn = R[rows[:, None], :, pair].transpose(0, 2, 1)
        Cn = np.swapaxes(N, 1, 2) @ Rn
        Y = _sample_o2(An, bn, Cn, rng)
        newcols = N @ Y
        X = X.copy()
        X[rows[:, None], :, pair] = newcols.transpose(0, 2, 1)
    return _polish(X)


def gibbs_chain(Q, P, R, init, n_keep: int, burn_in: int, rng) -> np.ndarray:
    """Run batched chains; returns kept draws with shape (B, n_keep, d, d)."""
    X = np.array(init, dtype=float)
    kept = np.empty((X.shape[0], n_keep) + X.shape[1:])
    for _ in range(burn_in):
        X = _gibbs_sweep(Q, P, R, X, rng)
    for t in range(n_keep):
        X = _gibbs_sweep(Q, P, R, X, rng)
        kept[:, t] = X
    return kept


def bmf_gibbs_sample(params: BmfParams, init: np.ndarray, steps: int,
                     rng: np.random.Generator) -> np.ndarray:
    """Advance one chain ``steps`` Gibbs sweeps from ``init``; returns the last state."""
    init = np.asarray(init, dtype=float)
    d = init.shape[0]
    if np.max(np.abs(init.T @ init - np.eye(d))) > ORTHO_TOL:
        raise ValueError("init must be orthogonal")
    X = init[None].copy()
    for _ in range(steps):
        X = _gibbs_sweep(params.Q[None], params.P[None], params.R[None], X, rng)
    return X[0]


def mc_precision_expectations(samples, tau_diag) -> tuple[np.ndarray, float]:
    """Average ``D diag(tau) D'`` over orientation samples.

    The log-determinant does not depend on ``D``, so it is returned exactly.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 2:
        samples = samples[None]
    if samples.shape[0] == 0:
        raise ValueError("no orientation samples")
    tau = np.asarray(tau_diag, dtype=float)
    if np.any(tau <= 0):
        raise ValueError("tau must be positive")
    ET = np.einsum("sik,k,sjk->ij", samples, tau, samples) / samples.shape[0]
    return 0.5 * (ET + ET.T), float(np.sum(np.log(tau)))


def guarded_orientation_update(state, data, cfg: McConfig, rng, best_loglik):
    """Resample orientations until the posterior log-likelihood improves.

    Returns ``(state, n_restarts, loglik)`` on acceptance, or
    ``(None, max_restarts, None)`` when every restart fails to beat
    ``best_loglik``. ``best_loglik=None``
    accepts the first draw.
    """
    from .vb import orientation_bmf_params, with_orientations, point_estimate
    from .selection import posterior_loglik

    if not state.model.uses_gibbs:
        raise ValueError(f"{state.model.value} has no orientation factor")
    Q, P, R = orientation_bmf_params(state, data)
    G, d = state.m.shape
    for attempt in range(1, cfg.max_restarts + 1):
        init = uniform_orthogonal(d, rng, size=G)
        samples = gibbs_chain(Q, P, R, init, cfg.n_samples, cfg.burn_in, rng)
        candidate = with_orientations(state, samples)
        ll = posterior_loglik(data, point_estimate(candidate))
        if best_loglik is None or ll > best_loglik:
            return candidate, attempt, ll
    return None, cfg.max_restarts, None
