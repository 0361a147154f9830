"""Fair post-processing end to end: defaults, pool, optimizer run, policy.

:func:`dp_postprocess` turns a regressor ``eta`` and a group-posterior model
``tau`` into a :class:`FairPolicy`, a randomized predictor over the grid
that needs only the features at prediction time.
"""

from dataclasses import dataclass, field
import json
import math
import os
from typing import Any, Optional, Sequence, Union
import warnings

import numpy as np

from .base_models import LinearModel, MulticlassLogistic, load_model, model_from_dict
from .core_math import Grid, build_grid, policy_probs
from .dual import (DualVars, FeaturePool, ProblemParams, full_gradient, gradient_mapping,
                   pool_oracle, sigma_hat_squared, sigma_squared, smoothness_constant)
from .errors import DegenerateGroupError, InvalidParameterError, ParseError
from .evaluation import (ConstantPolicy, MetricsReport, clipped_unfairness_norm, ks_from_probs,
                         plugin_risk, pool_discretized_unfairness, risk_from_probs)
from .fileio import atomic_write_text
from .optimizers import (ac_sa, ac_sa2, grad_map_alpha_default, ladder_depth, projected_sgd,
                         sgd3_refined)

OPTIMIZERS = ("sgd3-acsa", "sgd3-acsa2", "acsa", "acsa2", "sgd")


@dataclass(frozen=True)
class DefaultParams:
    beta: float
    L: int
    mu: float
    M: float
    alpha: float
    J: int


def default_params(T: int, sigma2: float = 1.0) -> DefaultParams:
    """Budget-driven defaults: ``beta = T / (8 log2 T)``, ``L = floor(sqrt T)``.

    ``mu = 2 sigma2 / beta`` and ``M = 2 beta sigma2``, so ``M / mu = beta^2``
    and the ladder depth ``J`` does not depend on ``sigma2``. ``beta < 1``
    (tiny budgets) puts ``mu`` above ``M`` and triggers a warning.
    """
    if int(T) != T or T < 2:
        raise InvalidParameterError(f"budget T must be an integer >= 2, got {T!r}")
    if sigma2 < 0:
        raise InvalidParameterError(f"sigma2 must be nonnegative, got {sigma2!r}")
    beta = T / (8.0 * math.log2(T))
    L = max(1, math.isqrt(int(T)))
    mu = 2.0 * sigma2 / beta
    M = 2.0 * beta * sigma2
    if beta < 1:
        warnings.warn(f"beta={beta:.3g} < 1 for T={T}: mu exceeds M, budget is very small",
                      RuntimeWarning, stacklevel=2)
    J = ladder_depth(1.0, beta * beta) if beta >= 1 else 0
    alpha = 1.0 / (2.0 ** (J + 2) * mu) if mu > 0 else math.inf
    return DefaultParams(beta, L, mu, M, alpha, J)


@dataclass
class PostprocessConfig:
    """Settings of one post-processing run.

    ``T`` sets the theory defaults for ``beta`` and ``L``; ``n_iter`` (default
    ``T``) is the number of oracle calls actually spent. ``sigma_mode``
    ``"plugin"`` uses the pool estimate of the gradient variance,
    ``"exact"`` the analytic bound from the marginals.
    """

    T: int = 10_000
    eps: Union[float, Sequence[float]] = 2.0 ** -8
    L: Optional[int] = None
    beta: Optional[float] = None
    B: Optional[float] = None
    optimizer: str = "sgd3-acsa"
    n_iter: Optional[int] = None
    seed: int = 0
    record_every: int = 0
    sigma_mode: str = "plugin"

    def __post_init__(self):
        if int(self.T) != self.T or self.T < 2:
            raise InvalidParameterError(f"T must be an integer >= 2, got {self.T!r}")
        if self.optimizer not in OPTIMIZERS:
            raise InvalidParameterError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.sigma_mode not in ("plugin", "exact"):
            raise InvalidParameterError(f"sigma_mode must be 'plugin' or 'exact', got {self.sigma_mode!r}")
        if self.n_iter is not None and self.n_iter < 1:
            raise InvalidParameterError("n_iter must be >= 1")
        if self.record_every < 0:
            raise InvalidParameterError("record_every must be >= 0 (0 disables history)")
        if self.L is not None and (int(self.L) != self.L or self.L < 1):
            raise InvalidParameterError(f"L must be an integer >= 1, got {self.L!r}")
        if self.beta is not None and not self.beta > 0:
            raise InvalidParameterError(f"beta must be positive, got {self.beta!r}")
        if self.B is not None and not self.B > 0:
            raise InvalidParameterError(f"B must be positive, got {self.B!r}")
        eps = np.asarray(self.eps, dtype=float)
        if np.any(eps < 0) or np.any(eps > 1):
            raise InvalidParameterError(f"eps must lie in [0, 1], got {self.eps!r}")


def _call_model(model, method: str, X):
    fn = getattr(model, method, None)
    if fn is None:
        if not callable(model):
            raise InvalidParameterError(f"predictor needs a {method}() method or must be callable")
        fn = model
    return np.asarray(fn(X), dtype=float)


@dataclass(frozen=True)
class Predictors:
    """Regressor (``predict`` or callable) and group-posterior model (``predict_proba`` or callable)."""

    regressor: Any
    classifier: Any

    def eta(self, X) -> np.ndarray:
        return _call_model(self.regressor, "predict", X).ravel()

    def tau(self, X) -> np.ndarray:
        return np.atleast_2d(_call_model(self.classifier, "predict_proba", X))


def estimate_marginals(sensitive, K: Optional[int] = None) -> np.ndarray:
    """Empirical group frequencies of 0-based labels."""
    s = np.asarray(sensitive)
    if s.ndim != 1 or s.size == 0:
        raise InvalidParameterError("need at least one group label")
    if not np.all(s == np.round(s)) or s.min() < 0:
        raise InvalidParameterError("group labels must be nonnegative integers")
    s = s.astype(int)
    K = int(s.max()) + 1 if K is None else int(K)
    if s.max() >= K:
        raise InvalidParameterError(f"label {s.max()} out of range for K={K}")
    counts = np.bincount(s, minlength=K)
    if np.any(counts == 0):
        raise DegenerateGroupError(f"groups {np.flatnonzero(counts == 0).tolist()} are empty")
    return counts / counts.sum()


def _posteriors(predictors: Predictors, X, K: int) -> np.ndarray:
    tau = predictors.tau(X)
    if tau.shape != (np.atleast_2d(X).shape[0], K):
        raise InvalidParameterError(f"posterior model returned shape {tau.shape}, expected (n, {K})")
    return tau


def build_pool(X, predictors: Predictors, params: ProblemParams) -> FeaturePool:
    """One ``(t(x), r(x))`` row per unlabeled point; regression values clamped to ``[-B, B]``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0 or not np.all(np.isfinite(X)):
        raise InvalidParameterError("unlabeled features must be a finite nonempty n x d matrix")
    eta = predictors.eta(X)
    if eta.shape != (X.shape[0],):
        raise InvalidParameterError(f"regressor returned shape {eta.shape}, expected ({X.shape[0]},)")
    return FeaturePool.from_predictions(eta, _posteriors(predictors, X, params.K), params.p,
                                        params.grid)


@dataclass
class FairPolicy:
    """Randomized predictor ``softmax(beta (<lambda_l - nu_l, t(x)> - r_l(x)))``."""

    dual: DualVars
    params: ProblemParams
    predictors: Predictors
    history: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def grid(self) -> Grid:
        return self.params.grid

    def rows(self, X) -> FeaturePool:
        return build_pool(np.atleast_2d(np.asarray(X, dtype=float)), self.predictors, self.params)

    def predict_distribution(self, X):
        """``(atoms, probs)`` with one probability row per input row."""
        pool = self.rows(X)
        return self.grid.atoms, policy_probs(self.dual, pool.t, pool.r, self.params.beta)


def predict_distribution(policy, x):
    """Distribution over the grid for one feature vector (or a matrix of them)."""
    x = np.asarray(x, dtype=float)
    atoms, probs = policy.predict_distribution(np.atleast_2d(x))
    return (atoms, probs[0]) if x.ndim == 1 else (atoms, probs)


def sample_prediction(policy, x, rng):
    """Draw atoms from the policy's distribution (one per input row)."""
    x = np.asarray(x, dtype=float)
    atoms, probs = policy.predict_distribution(np.atleast_2d(x))
    cum = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0])[:, None]
    idx = np.minimum((u >= cum).sum(axis=1), atoms.size - 1)
    draws = atoms[idx]
    return float(draws[0]) if x.ndim == 1 else draws


def _bound_from(predictors: Predictors, eta) -> float:
    B = getattr(predictors.regressor, "clamp_bound", None)
    if B is not None:
        return float(B)
    return max(1.0, float(np.max(np.abs(eta))))


def snapshot(w, params: ProblemParams, pool: FeaturePool, alpha: float, step: int, calls: int,
             monitor=None) -> MetricsReport:
    """Metrics of dual point ``w``: risk and KS on the monitor set when given.

    Without a monitor set the risk is the pool plug-in risk and KS is NaN.
    """
    g = full_gradient(w, params, pool)
    G = gradient_mapping(w, g, alpha)
    U = pool_discretized_unfairness(w, params, pool)
    if monitor is not None:
        mpool, y, s = monitor
        probs = policy_probs(w, mpool.t, mpool.r, params.beta)
        risk = risk_from_probs(probs, params.grid.atoms, y)
        ks = ks_from_probs(probs, s, params.K)
    else:
        risk = plugin_risk(w, params, pool)
        ks = np.full(params.K, math.nan)
    return MetricsReport(step, calls, risk, ks, clipped_unfairness_norm(U, params.eps),
                         float(np.linalg.norm(G)))


def dp_postprocess(config: PostprocessConfig, p, predictors: Predictors, X_unlabeled,
                   monitor=None) -> FairPolicy:
    """Fit the dual multipliers on the unlabeled pool and return the fair policy.

    Parameters
    ----------
    config : PostprocessConfig
    p : array_like
        Group marginals, all positive.
    predictors : Predictors
    X_unlabeled : array_like
        Features of the unlabeled pool.
    monitor : tuple, optional
        ``(X, y, s)`` evaluation set used for the risk and KS columns of the
        history; only read when ``config.record_every > 0``.

    The optimizer starts from zero multipliers. With zero gradient variance
    (one group, or posteriors equal to the marginals everywhere) the
    gradient is ``eps >= 0`` at zero, which is already optimal, and no
    oracle calls are made.
    """
    p = np.asarray(p, dtype=float).ravel()
    if np.any(p <= 0):
        raise DegenerateGroupError(f"every group marginal must be positive, got {p!r}")
    X = np.asarray(X_unlabeled, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0 or not np.all(np.isfinite(X)):
        raise InvalidParameterError("unlabeled features must be a finite nonempty n x d matrix")

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        defaults = default_params(config.T)
    beta = config.beta if config.beta is not None else defaults.beta
    L = config.L if config.L is not None else defaults.L
    eta = predictors.eta(X)
    B = config.B if config.B is not None else _bound_from(predictors, eta)
    grid = build_grid(B, L)
    params = ProblemParams(beta, config.eps, p, grid)
    tau = _posteriors(predictors, X, params.K)
    pool = FeaturePool.from_predictions(eta, tau, p, grid)

    sigma2 = sigma_squared(p) if config.sigma_mode == "exact" else sigma_hat_squared(tau, p)
    M = smoothness_constant(beta, sigma2)
    mu = 2.0 * sigma2 / beta
    if mu > M:
        warnings.warn(f"beta={beta:.3g} < 1 gives mu > M; using mu = M", RuntimeWarning,
                      stacklevel=2)
        mu = M
    budget = config.n_iter if config.n_iter is not None else config.T
    alpha = grad_map_alpha_default(mu, M) if M > 0 else 1.0

    mon = None
    if monitor is not None and config.record_every:
        mX, my, ms = monitor
        mX = np.asarray(mX, dtype=float)
        mon = (FeaturePool.from_predictions(predictors.eta(mX), _posteriors(predictors, mX, params.K),
                                            p, grid), np.asarray(my, dtype=float), np.asarray(ms))

    w0 = np.zeros(params.shape)
    info = {"beta": beta, "L": L, "B": B, "sigma2": sigma2, "mu": mu, "M": M, "alpha": alpha,
            "budget": budget, "optimizer": config.optimizer}
    history = []
    if M == 0:
        w = w0
        info["oracle_calls"] = 0
        if config.record_every:
            history.append(snapshot(w, params, pool, alpha, 0, 0, mon))
    else:
        oracle = pool_oracle(params, pool, seed=config.seed)
        steps = [0]

        def record(w):
            history.append(snapshot(w, params, pool, alpha, steps[0], oracle.calls, mon))

        def callback(w):
            steps[0] += 1
            if steps[0] % config.record_every == 0:
                record(w)

        cb = callback if config.record_every else None
        if config.record_every:
            record(w0)
        name = config.optimizer
        if name.startswith("sgd3"):
            ladder = {}
            w = sgd3_refined(oracle, w0, mu, M, budget, inner=name.split("-")[1], callback=cb,
                             info=ladder)
            info["ladder"] = {k: v for k, v in ladder.items() if k != "stage_grad_map_norms"}
        elif name == "acsa":
            w = ac_sa(oracle, w0, 0.0, M, budget, callback=cb)
        elif name == "acsa2":
            w = ac_sa2(oracle, w0, 0.0, M, budget, callback=cb)
        else:
            w = projected_sgd(oracle, w0, 1.0 / M, budget, callback=cb)
        if config.record_every and steps[0] % config.record_every != 0:
            record(w)
        info["oracle_calls"] = oracle.calls
    return FairPolicy(DualVars.from_stacked(w), params, predictors, history, info)


def _model_entry(model, ref: Optional[str]):
    if ref is not None:
        return {"path": ref}
    if isinstance(model, (LinearModel, MulticlassLogistic)):
        return {"model": model.to_dict()}
    raise InvalidParameterError("predictor is not serializable; pass a saved model path")


def policy_to_dict(policy: FairPolicy, regressor_path: Optional[str] = None,
                   classifier_path: Optional[str] = None) -> dict:
    params = policy.params
    return {
        "kind": "dp_policy",
        "B": params.grid.B, "L": params.grid.L, "beta": params.beta,
        "eps": params.eps.tolist(), "p": params.p.tolist(),
        "lambda": policy.dual.lam.tolist(), "nu": policy.dual.nu.tolist(),
        "regressor": _model_entry(policy.predictors.regressor, regressor_path),
        "classifier": _model_entry(policy.predictors.classifier, classifier_path),
    }


def save_policy(policy, path, regressor_path: Optional[str] = None,
                classifier_path: Optional[str] = None) -> None:
    """Write a policy as JSON; models are embedded unless file references are given."""
    doc = policy.to_dict() if isinstance(policy, ConstantPolicy) else \
        policy_to_dict(policy, regressor_path, classifier_path)
    atomic_write_text(path, json.dumps(doc, indent=2) + "\n")


def _resolve_model(entry, base_dir):
    if "model" in entry:
        return model_from_dict(entry["model"])
    path = entry["path"]
    if not os.path.isabs(path):
        path = os.path.join(base_dir, path)
    return load_model(path)


def load_policy(path):
    """Load a :class:`FairPolicy` or :class:`ConstantPolicy` written by :func:`save_policy`."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc
    kind = doc.get("kind")
    try:
        if kind == "constant":
            return ConstantPolicy(np.array(doc["atoms"], dtype=float),
                                  np.array(doc["probs"], dtype=float))
        if kind == "dp_policy":
            base_dir = os.path.dirname(os.path.abspath(path))
            grid = build_grid(doc["B"], doc["L"])
            params = ProblemParams(doc["beta"], np.array(doc["eps"]), np.array(doc["p"]), grid)
            dual = DualVars(np.array(doc["lambda"], dtype=float), np.array(doc["nu"], dtype=float))
            predictors = Predictors(_resolve_model(doc["regressor"], base_dir),
                                    _resolve_model(doc["classifier"], base_dir))
            return FairPolicy(dual, params, predictors)
    except KeyError as exc:
        raise ParseError(f"{path}: missing field {exc}") from exc
    raise ParseError(f"{path}: unknown policy kind {kind!r}")
