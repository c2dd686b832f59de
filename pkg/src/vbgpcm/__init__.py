"""Variational Bayes estimation and DIC selection for eigen-decomposed Gaussian mixtures."""

from .classify import adjusted_rand_index, classification_loglik, confusion, map_labels
from .fit import FitReport, fit
from .models import (CovDecomposition, Dataset, MixturePoint, ModelId, free_covariance_params,
                     log_gaussian_density, mixture_log_likelihood, reconstruct_sigma)
from .priors import HyperPriors, InitConfig, default_priors
from .selection import ConvergenceConfig, SelectionScore, aitken_converged, dic, select_model
from .simulate import generate_sim1, generate_sim2, pca_transform
from .stiefel import BmfParams, McConfig, bmf_gibbs_sample, mc_precision_expectations
from .sweep import RunConfig, SweepResult, run_sweep

__version__ = "0.1.0"
