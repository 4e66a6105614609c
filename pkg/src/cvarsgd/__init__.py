"""CVaR optimization by likelihood-ratio gradient estimation."""

from .gcvar import GradientEstimate, bias_study, gcvar_estimate, naive_tail_lr_estimate, plain_lr_estimate
from .importance import (GaussianShiftProposal, fit_proposal_saa, is_empirical_var,
                         is_gcvar_estimate, variance_comparison)
from .models import (CategoricalSoftmaxFamily, GaussianMeanFamily, ScoredBatch, ScoredSample,
                     StochasticModel, categorical_softmax_family, gaussian_mean_family,
                     score_identity_check)
from .optimizer import ProjectionBox, RunTrace, Schedules, cvarsgd, evaluate_policy, project
from .risk import empirical_cdf, empirical_cvar, empirical_var

__version__ = "0.1.0"
