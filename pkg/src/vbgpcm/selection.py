"""Posterior log-likelihood, Aitken stopping rule and DIC/BIC scores."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional

import numpy as np
from scipy.special import digamma, gammaln, multigammaln
from scipy.stats import wishart

from .models import (Dataset, MixturePoint, ModelId, free_covariance_params,
                     free_params, mixture_log_likelihood)


@dataclass(frozen=True)
class ConvergenceConfig:
    epsilon: float = 1e-5
    max_iters: int = 1000
    min_iters: int = 3

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not self.max_iters >= self.min_iters >= 3:
            raise ValueError("need max_iters >= min_iters >= 3")


class Verdict(str, Enum):
    CONVERGED = "converged"
    NOT_CONVERGED = "not-converged"
    UNDEFINED = "undefined"


def aitken_converged(l_prev2: float, l_prev: float, l_curr: float, epsilon: float):
    """Aitken-accelerated stopping test on three consecutive log-likelihoods.

    Returns ``(verdict, l_inf)``; ``l_inf`` is None when the acceleration is
    undefined (flat denominator or a >= 1).
    """
    denom = l_prev - l_prev2
    if abs(denom) < 1e-12:
        return Verdict.UNDEFINED, None
    a = (l_curr - l_prev) / denom
    if a >= 1:
        return Verdict.UNDEFINED, None
    l_inf = l_prev + (l_curr - l_prev) / (1.0 - a)
    gap = l_inf - l_curr
    return (Verdict.CONVERGED if 0 <= gap < epsilon else Verdict.NOT_CONVERGED), l_inf


def has_converged(trace, epsilon: float) -> bool:
    """Aitken test on the last three values, falling back to the lagged difference."""
    if len(trace) < 3:
        return False
    l0, l1, l2 = trace[-3], trace[-2], trace[-1]
    verdict, _ = aitken_converged(l0, l1, l2, epsilon)
    if verdict is Verdict.UNDEFINED:
        return abs(l2 - l1) < epsilon
    return verdict is Verdict.CONVERGED


def posterior_loglik(data: Dataset, point: MixturePoint) -> float:
    """Log-likelihood at the posterior point estimate."""
    return mixture_log_likelihood(data, point)


# -- closed-form divergences (q first, prior second) --------------------------

def kl_dirichlet(alpha, alpha0) -> float:
    alpha, alpha0 = np.asarray(alpha, float), np.asarray(alpha0, float)
    sa, sa0 = alpha.sum(), alpha0.sum()
    return float(gammaln(sa) - gammaln(alpha).sum() - gammaln(sa0) + gammaln(alpha0).sum()
                 + np.sum((alpha - alpha0) * (digamma(alpha) - digamma(sa))))


def log_dirichlet(x, alpha) -> float:
    alpha = np.asarray(alpha, float)
    return float(gammaln(alpha.sum()) - gammaln(alpha).sum() + np.sum((alpha - 1) * np.log(x)))


def kl_gamma(shape, rate, shape0, rate0) -> float:
    """KL(Gamma(shape, rate) || Gamma(shape0, rate0)), shape/rate form."""
    return float((shape - shape0) * digamma(shape) - gammaln(shape) + gammaln(shape0)
                 + shape0 * (math.log(rate) - math.log(rate0))
                 + shape * (rate0 - rate) / rate)


def log_gamma_pdf(x, shape, rate) -> float:
    return float(shape * math.log(rate) - gammaln(shape) + (shape - 1) * math.log(x) - rate * x)


def kl_gaussian(m, P, m0, P0) -> float:
    """KL(N(m, P^-1) || N(m0, P0^-1)) with precision matrices."""
    d = len(m)
    dm = np.asarray(m) - np.asarray(m0)
    _, ld = np.linalg.slogdet(P)
    _, ld0 = np.linalg.slogdet(P0)
    return float(0.5 * (np.trace(P0 @ np.linalg.inv(P)) + dm @ P0 @ dm - d + ld - ld0))


def log_gaussian_pdf(x, m, P) -> float:
    d = len(m)
    r = np.asarray(x) - np.asarray(m)
    _, ld = np.linalg.slogdet(P)
    return float(-0.5 * d * math.log(2 * math.pi) + 0.5 * ld - 0.5 * r @ P @ r)


def kl_wishart(v, V, v0, V0) -> float:
    """KL(W(v, V) || W(v0, V0)) with scale matrices V, V0."""
    d = V.shape[0]
    V0_inv = np.linalg.inv(V0)
    _, ld = np.linalg.slogdet(V0_inv @ V)
    k = np.arange(1, d + 1)
    psi_d = np.sum(digamma((v + 1 - k) / 2.0))
    return float(-0.5 * v0 * ld + 0.5 * v * (np.trace(V0_inv @ V) - d)
                 + multigammaln(v0 / 2.0, d) - multigammaln(v / 2.0, d)
                 + 0.5 * (v - v0) * psi_d)


def _pd_term(kl: float, log_q: float, log_p: float) -> float:
    return -kl + log_q - log_p


# -- scores -------------------------------------------------------------------

@dataclass
class SelectionScore:
    dic: float
    p_d: float
    posterior_loglik: float
    bic: float
    omitted_kl_terms: list = field(default_factory=list)
    converged: bool = True
    p_d_terms: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "dic": self.dic, "p_d": self.p_d, "posterior_loglik": self.posterior_loglik,
            "bic": self.bic, "omitted_kl_terms": list(self.omitted_kl_terms),
            "converged": self.converged,
            "p_d_terms": {k: float(v) for k, v in self.p_d_terms.items()},
        }


def bic(loglik: float, model: ModelId, G: int, n: int, d: int) -> float:
    """2 log L - k log n, larger is better."""
    return 2.0 * loglik - free_params(model, G, d) * math.log(n)


def effective_parameters(state) -> dict:
    """Per-factor contributions ``-KL(q||p) + log q(theta~) - log p(theta~)``."""
    from .vb import _WISH_IS_SHAPE, _DIAG_IS_SHAPE

    pri = state.priors
    model = state.model
    comp = state.comp
    d = state.d
    terms: dict[str, float] = {}

    a0 = pri.alpha0[comp]
    rho = state.alpha / state.alpha.sum()
    terms["dirichlet"] = _pd_term(kl_dirichlet(state.alpha, a0),
                                  log_dirichlet(rho, state.alpha), log_dirichlet(rho, a0))

    for g in range(state.G):
        P_q = state.beta[g] * state.E_T[g]
        P_p = pri.beta0[comp[g]] * state.E_T[g]
        m, m0 = state.m[g], pri.m0[comp[g]]
        terms[f"mean[{g}]"] = _pd_term(kl_gaussian(m, P_q, m0, P_p),
                                       log_gaussian_pdf(m, m, P_q), log_gaussian_pdf(m, m0, P_p))

    def gamma_terms(label, a, b, a0_, b0_):
        a, b = np.atleast_1d(a), np.atleast_1d(b)
        a0_, b0_ = np.broadcast_to(a0_, a.shape), np.broadcast_to(b0_, b.shape)
        total = 0.0
        for x in range(a.size):
            sq, rq = a.flat[x] / 2.0, b.flat[x] / 2.0
            sp, rp = a0_.flat[x] / 2.0, b0_.flat[x] / 2.0
            mean = sq / rq
            total += _pd_term(kl_gamma(sq, rq, sp, rp),
                              log_gamma_pdf(mean, sq, rq), log_gamma_pdf(mean, sp, rp))
        terms[label] = total

    if state.vol_a is not None:
        gamma_terms("volume", state.vol_a, state.vol_b, pri.a0, pri.b0)
    if state.diag_a is not None:
        if model in _DIAG_IS_SHAPE:
            gamma_terms("shape", state.diag_a, state.diag_b, pri.al0, pri.be0)
        else:
            gamma_terms("axis-precision", state.diag_a, state.diag_b, pri.ak0, pri.bk0)
    if state.wish_v is not None:
        V0 = np.linalg.inv(pri.wishart_scale0)
        total = 0.0
        for w in range(state.wish_v.shape[0]):
            v, V = state.wish_v[w], np.linalg.inv(state.wish_S[w])
            mean = v * V
            total += _pd_term(kl_wishart(v, V, pri.wishart_df0, V0),
                              wishart.logpdf(mean, df=v, scale=V),
                              wishart.logpdf(mean, df=pri.wishart_df0, scale=V0))
        terms["wishart"] = total
    return terms


def dic(data: Dataset, state, converged: bool = True) -> SelectionScore:
    """DIC = -2 log p(y | theta~) + 2 p_D with p_D summed over tractable factors."""
    from .vb import point_estimate

    ll = posterior_loglik(data, point_estimate(state))
    terms = effective_parameters(state)
    p_d = float(sum(terms.values()))
    omitted = [f"orientation[{g}]" for g in range(state.G)] if state.model.uses_gibbs else []
    return SelectionScore(
        dic=-2.0 * ll + 2.0 * p_d, p_d=p_d, posterior_loglik=ll,
        bic=bic(ll, state.model, state.G, data.n, data.d),
        omitted_kl_terms=omitted, converged=converged, p_d_terms=terms,
    )


def select_model(scores: Mapping, G: Optional[Mapping] = None, d: int = 1):
    """Model with minimum DIC; ties go to fewer covariance parameters, then name.

    ``G`` optionally maps each model to its fitted component count for the
    parsimony tie-break (defaults to 1 component per model).
    """
    if not scores:
        raise ValueError("no scores to select from")

    def key(item):
        model, score = item
        mid = ModelId.parse(model) if isinstance(model, str) else model
        g = 1 if G is None else G.get(model, 1)
        value = score.dic if isinstance(score, SelectionScore) else float(score)
        return (value, free_covariance_params(mid, g, d), mid.value)

    return min(scores.items(), key=key)[0]


_ELBO_MODELS = {ModelId.EII, ModelId.VII, ModelId.EEI, ModelId.EEE, ModelId.VVV}


def evidence_lower_bound(data: Dataset, state) -> float:
    """Variational lower bound on log p(y) for the exactly conjugate models.

    Only EII, VII, EEI, EEE and VVV are covered: there every block update is an
    exact coordinate step, so this bound never decreases between prunings.
    Models with a normalised shape or sampled orientations raise ValueError.
    """
    if state.model not in _ELBO_MODELS:
        raise ValueError(f"no closed-form bound for {state.model.value}")
    pri, comp, d = state.priors, state.comp, state.d
    Y, Z = data.Y, state.Z
    Elr = state.E_log_rho()
    total = 0.0
    for g in range(state.G):
        r = Y - state.m[g]
        quad = np.einsum("ij,jk,ik->i", r, state.E_T[g], r) + d / state.beta[g]
        loglik = -0.5 * d * math.log(2 * math.pi) + 0.5 * state.E_logdet[g] - 0.5 * quad
        total += float(Z[:, g] @ (Elr[g] + loglik))
        b0, b = pri.beta0[comp[g]], state.beta[g]
        dm = state.m[g] - pri.m0[comp[g]]
        total -= 0.5 * (d * b0 / b - d + d * math.log(b / b0) + b0 * dm @ state.E_T[g] @ dm)
    Zp = Z[Z > 0]
    total -= float(np.sum(Zp * np.log(Zp)))
    total -= kl_dirichlet(state.alpha, pri.alpha0[comp])
    if state.vol_a is not None:
        for a, b in zip(state.vol_a, state.vol_b):
            total -= kl_gamma(a / 2, b / 2, pri.a0 / 2, pri.b0 / 2)
    if state.diag_a is not None:
        for a, b, a0, b0 in zip(state.diag_a[0], state.diag_b[0], pri.ak0, pri.bk0):
            total -= kl_gamma(a / 2, b / 2, a0 / 2, b0 / 2)
    if state.wish_v is not None:
        V0 = np.linalg.inv(pri.wishart_scale0)
        for v, S in zip(state.wish_v, state.wish_S):
            total -= kl_wishart(v, np.linalg.inv(S), pri.wishart_df0, V0)
    return total
