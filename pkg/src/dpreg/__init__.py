"""Demographic-parity post-processing of regression models without sensitive attributes at prediction time."""

from .core_math import Grid, build_grid, lse, softmax, neg_entropy, t_vector, r_vector, policy_probs
from .dual import (DualVars, ProblemParams, FeaturePool, sigma_squared, sigma_hat_squared,
                   smoothness_constant, objective_value, stochastic_gradient, full_gradient,
                   project_nonneg, gradient_mapping, clipped_gradient_norm, pool_oracle)
from .optimizers import (OracleHandle, OptimizerConfig, ac_sa, ac_sa2, sgd3_refined, projected_sgd,
                         grad_map_alpha_default)
from .base_models import (LinearModel, MulticlassLogistic, fit_least_squares, fit_logistic,
                          discretize_tl)
from .pipeline import (PostprocessConfig, FairPolicy, Predictors, default_params, estimate_marginals,
                       build_pool, dp_postprocess, predict_distribution, sample_prediction)
from .evaluation import (MetricsReport, empirical_risk, ks_unfairness, discretized_unfairness,
                         kkt_residual, risk_gain_check, risk_excess_bound)
from .data import Dataset, RunConfig, load_csv, split, generate_synthetic
from .errors import (DPRegError, InvalidParameterError, DegenerateGroupError, OutOfRangeError,
                     RankDeficiencyError, PreconditionError, ParseError)

__version__ = "0.1.0"
