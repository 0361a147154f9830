"""One full run: split, fit base models, post-process, evaluate on the test part."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .base_models import LinearModel, MulticlassLogistic, default_bound, fit_least_squares, fit_logistic, squared_error
from .data import Dataset, split
from .evaluation import empirical_risk, ks_from_values, ks_unfairness
from .pipeline import FairPolicy, PostprocessConfig, Predictors, dp_postprocess, estimate_marginals


@dataclass
class ExperimentResult:
    base_risk: float
    base_ks: np.ndarray
    fair_risk: float
    fair_ks: np.ndarray
    policy: FairPolicy
    regressor: LinearModel
    classifier: MulticlassLogistic


def fit_base_models(train: Dataset, B: Optional[float] = None, ridge: float = 0.0,
                    l2: float = 1e-4, iters: int = 500):
    """Least-squares regressor and logistic group classifier on the training part."""
    bound = default_bound(train.targets) if B is None else B
    reg = fit_least_squares(train.features, train.targets, ridge=ridge, bound=bound)
    clf = fit_logistic(train.features, train.sensitive, K=train.K, l2=l2, iters=iters)
    return reg, clf


def run_experiment(data: Dataset, config: PostprocessConfig, fractions=(0.4, 0.4, 0.2),
                   split_seed=0, record_history: bool = False) -> ExperimentResult:
    """Split, train, post-process and score one dataset.

    The base regressor's KS statistic uses its raw (clamped) predictions;
    the fair policy's uses its exact distribution over the grid.
    """
    train, unlab, test = split(data, fractions, split_seed)
    reg, clf = fit_base_models(train, config.B)
    p = estimate_marginals(train.sensitive, train.K)
    monitor = (test.features, test.targets, test.sensitive) if record_history else None
    policy = dp_postprocess(config, p, Predictors(reg, clf), unlab.features, monitor=monitor)
    base_pred = reg.predict(test.features)
    return ExperimentResult(
        base_risk=squared_error(base_pred, test.targets),
        base_ks=ks_from_values(base_pred, test.sensitive, test.K),
        fair_risk=empirical_risk(policy, test.features, test.targets),
        fair_ks=ks_unfairness(policy, test.features, test.sensitive, test.K),
        policy=policy, regressor=reg, classifier=clf)
