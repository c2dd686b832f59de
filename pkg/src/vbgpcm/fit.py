"""The variational Bayes fitting loop and its report."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from .classify import map_labels
from .models import Dataset, ModelId
from .priors import HyperPriors, InitConfig, default_priors
from .selection import ConvergenceConfig, SelectionScore, dic, has_converged, posterior_loglik
from .stiefel import McConfig, guarded_orientation_update
from .vb import (VbState, init_state, point_estimate, prune_components,
                 refresh_expectations, update_mean_block, update_precision_block,
                 update_responsibilities)

logger = logging.getLogger(__name__)


def priors_digest(priors: HyperPriors) -> str:
    h = hashlib.sha256()
    for f in fields(priors):
        v = getattr(priors, f.name)
        h.update(f.name.encode())
        if v is not None:
            h.update(np.ascontiguousarray(np.asarray(v, dtype=float)).tobytes())
    return h.hexdigest()[:16]


@dataclass
class FitReport:
    model: ModelId
    seed: int
    G: int
    rho: np.ndarray
    mu: np.ndarray
    T: np.ndarray
    labels: np.ndarray
    loglik_trace: list
    n_iter: int
    converged: bool
    score: SelectionScore
    components: np.ndarray
    priors_digest: str = ""
    restarts: list = field(default_factory=list)
    state: Optional[VbState] = field(default=None, repr=False)

    @property
    def dic(self) -> float:
        return self.score.dic

    @property
    def covariances(self) -> np.ndarray:
        return np.linalg.inv(self.T)

    def to_dict(self) -> dict:
        return {
            "model": self.model.value,
            "seed": self.seed,
            "G": self.G,
            "converged": self.converged,
            "n_iter": self.n_iter,
            "rho": self.rho.tolist(),
            "mu": self.mu.tolist(),
            "T": self.T.tolist(),
            "labels": self.labels.tolist(),
            "components": self.components.tolist(),
            "loglik_trace": [float(x) for x in self.loglik_trace],
            "restarts": list(self.restarts),
            "priors_digest": self.priors_digest,
            **self.score.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _sweep(state: VbState, data: Dataset, threshold: float) -> VbState:
    state = update_responsibilities(state, data)
    state = prune_components(state, threshold)
    state = update_mean_block(state, data)
    return update_precision_block(state, data)


def fit(data: Dataset, model: ModelId | str, priors: Optional[HyperPriors] = None,
        cfg: Optional[InitConfig] = None, conv: Optional[ConvergenceConfig] = None,
        mc: Optional[McConfig] = None) -> FitReport:
    """Fit one covariance model by coordinate-ascent variational Bayes.

    Each sweep updates responsibilities, prunes components whose effective
    count is at or below the threshold, then refreshes the mean, precision and
    expectation blocks. For EEV/VEV the orientation draw is accepted only if
    the posterior log-likelihood increases; when ``mc.max_restarts`` draws in a
    row fail, the fit is taken as converged.
    """
    model = ModelId.parse(model) if isinstance(model, str) else model
    cfg = cfg or InitConfig()
    conv = conv or ConvergenceConfig()
    mc = mc or McConfig()
    if priors is None:
        priors = default_priors(data, model, cfg.G_max)
    rng = np.random.default_rng(cfg.seed)

    state = init_state(data, cfg, priors, model, rng=rng)
    trace: list[float] = []
    restarts: list[int] = []
    converged = False
    best_state, best_ll = state, -np.inf
    it = 0

    for it in range(1, conv.max_iters + 1):
        proposal = _sweep(state, data, cfg.prune_threshold)
        if model.uses_gibbs:
            accepted, tries, ll = guarded_orientation_update(
                proposal, data, mc, rng, trace[-1] if trace else None)
            restarts.append(tries)
            if accepted is None:
                logger.info("%s: no improving orientation in %d restarts; stopping at iteration %d",
                            model.value, tries, it)
                converged = True
                it -= 1
                break
            state = accepted
        else:
            state = refresh_expectations(proposal)
            ll = posterior_loglik(data, point_estimate(state))
        trace.append(ll)
        if ll > best_ll:
            best_state, best_ll = state, ll
        if it >= conv.min_iters and has_converged(trace, conv.epsilon):
            converged = True
            break

    if not converged:
        logger.warning("%s did not converge in %d iterations", model.value, conv.max_iters)
        state = best_state

    point = point_estimate(state)
    score = dic(data, state, converged=converged)
    return FitReport(
        model=model, seed=cfg.seed, G=state.G, rho=point.rho, mu=point.mu, T=point.T,
        labels=map_labels(state.Z), loglik_trace=trace, n_iter=it, converged=converged,
        score=score, components=state.comp.copy(), priors_digest=priors_digest(priors),
        restarts=restarts, state=state,
    )
