"""Projected stochastic first-order methods over the nonnegative orthant.

* :func:`ac_sa` -- accelerated stochastic approximation for strongly convex,
  smooth objectives.
* :func:`ac_sa2` -- two chained AC-SA runs, restarting the step sizes halfway.
* :func:`sgd3_refined` -- regularization ladder around an inner AC-SA / AC-SA^2
  solver, tailored to make the *gradient mapping* small rather than the
  objective gap.
* :func:`projected_sgd` -- plain projected SGD baseline.

Every method works on ``numpy`` arrays of any shape and only touches the
objective through an :class:`OracleHandle`.
"""

from dataclasses import dataclass, field
import math
import warnings
from typing import Callable, Optional

import numpy as np

from .errors import InvalidParameterError


@dataclass
class OracleHandle:
    """Stochastic first-order oracle with a call counter.

    ``stochastic_gradient(w)`` returns an unbiased gradient estimate at
    ``w``; ``full_gradient`` (optional) returns the exact gradient and is
    only used for diagnostics.
    """

    stochastic_gradient: Callable[[np.ndarray], np.ndarray]
    full_gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    shape: Optional[tuple] = None
    calls: int = field(default=0, init=False)

    def __call__(self, w):
        self.calls += 1
        return self.stochastic_gradient(w)


@dataclass
class OptimizerConfig:
    T: int
    mu: float
    M: float
    seed: int = 0
    record_every: int = 100

    def __post_init__(self):
        if self.T < 1:
            raise InvalidParameterError(f"budget T must be >= 1, got {self.T}")
        if not 0 < self.mu <= self.M:
            raise InvalidParameterError(f"need 0 < mu <= M, got mu={self.mu}, M={self.M}")
        if self.record_every < 1:
            raise InvalidParameterError("record_every must be >= 1")


def _check_start(w0, T):
    if T < 1:
        raise InvalidParameterError(f"budget T must be >= 1, got {T}")
    w0 = np.array(w0, dtype=float)
    if np.any(w0 < 0) or not np.all(np.isfinite(w0)):
        raise InvalidParameterError("starting point must be finite and entrywise nonnegative")
    return w0


def acsa_schedule(t: int, M: float):
    """Step weights ``(alpha_t, gamma_t)`` of iteration ``t >= 1``."""
    return 2.0 / (t + 1), 4.0 * M / (t * (t + 1))


def _ac_sa(grad, w0, mu, M, T, callback=None):
    w = w0.copy()
    w_ag = w0.copy()
    for t in range(1, T + 1):
        a, g = acsa_schedule(t, M)
        denom = g + (1.0 - a * a) * mu
        w_md = ((1.0 - a) * (mu + g) / denom) * w_ag + (a * ((1.0 - a) * mu + g) / denom) * w
        step = mu + g
        w = (((1.0 - a) * mu + g) / step) * w + (a * mu / step) * w_md - (a / step) * grad(w_md)
        np.maximum(w, 0.0, out=w)
        w_ag = a * w + (1.0 - a) * w_ag
        if callback is not None:
            callback(w_ag)
    return w_ag


def ac_sa(oracle, w0, mu: float, M: float, T: int, callback=None) -> np.ndarray:
    """Projected AC-SA; returns the aggregated iterate after ``T`` oracle calls.

    The ``w_md`` combination keeps its standard form; its
    denominator ``gamma_t + (1 - alpha_t^2) mu`` is positive for ``M > 0``,
    so ``mu -> 0`` needs no special case.
    """
    w0 = _check_start(w0, T)
    if mu < 0 or M <= 0:
        raise InvalidParameterError(f"need mu >= 0 and M > 0 (mu={mu}, M={M})")
    return _ac_sa(oracle, w0, mu, M, T, callback)


def _split(T: int, parts: int):
    base = T // parts
    return [base] * (parts - 1) + [T - base * (parts - 1)]


def _ac_sa2(grad, w0, mu, M, T, callback=None):
    w = w0
    for budget in _split(T, 2):
        if budget > 0:
            w = _ac_sa(grad, w, mu, M, budget, callback)
    return w


def ac_sa2(oracle, w0, mu: float, M: float, T: int, callback=None) -> np.ndarray:
    """AC-SA restarted halfway: two chained runs of ``T // 2`` and the rest."""
    w0 = _check_start(w0, T)
    if mu < 0 or M <= 0:
        raise InvalidParameterError(f"need mu >= 0 and M > 0 (mu={mu}, M={M})")
    return _ac_sa2(oracle, w0, mu, M, T, callback)


def ladder_depth(mu: float, M: float) -> int:
    """Number of ladder stages ``floor(log2(M / mu))``."""
    if mu <= 0:
        raise InvalidParameterError(f"mu must be positive, got {mu}")
    ratio = M / mu
    J = int(math.floor(math.log2(ratio))) if ratio >= 1 else 0
    # guard against log2 rounding at exact powers of two
    while 2.0 ** (J + 1) <= ratio:
        J += 1
    while J > 0 and 2.0 ** J > ratio:
        J -= 1
    return J


def grad_map_alpha_default(mu: float, M: float) -> float:
    """Gradient-mapping step ``1 / (2^(J+2) mu)`` matched to the ladder depth."""
    if mu <= 0:
        raise InvalidParameterError(f"mu must be positive, got {mu}")
    if M < mu:
        raise InvalidParameterError(f"need mu <= M, got mu={mu}, M={M}")
    return 1.0 / (2.0 ** (ladder_depth(mu, M) + 2) * mu)


def sgd3_thresholds(mu: float, M: float) -> dict:
    """Budget thresholds above which the squared gradient-mapping bounds hold."""
    J = ladder_depth(mu, M)
    root = math.sqrt(M / mu)
    return {
        "acsa": 4.0 * root * J,
        "acsa2": 2.0 ** 2.75 * root * J,
        "linear": (M / mu) * math.log2(M / mu) if M > mu else 0.0,
    }


def sgd3_refined(oracle, w0, mu: float, M: float, T: int, inner: str = "acsa2",
                 callback=None, info: Optional[dict] = None) -> np.ndarray:
    """Regularization-ladder wrapper (refined SGD3) around AC-SA or AC-SA^2.

    Stage ``j`` minimizes ``F^(j-1)``, the objective plus the proximal terms
    ``mu_i / 2 * ||w - anchor_i||^2`` accumulated so far (``anchor_0 = w0``,
    ``anchor_i`` the output of stage ``i``, ``mu_i = 2^i mu``), with strong
    convexity ``mu_{j-1}``, smoothness ``2 (M + mu)`` and ``T // J`` oracle
    calls (remainder to the last stage). With ``M < 2 mu`` the ladder is
    empty and a single inner run on ``F + mu/2 ||w - w0||^2`` uses the whole
    budget.

    If ``info`` is a dict it is filled with the ladder, the stage budgets,
    the budget thresholds and, when the oracle exposes ``full_gradient``,
    the gradient-mapping norm of every stage output.
    """
    w0 = _check_start(w0, T)
    if not 0 < mu <= M:
        raise InvalidParameterError(f"need 0 < mu <= M, got mu={mu}, M={M}")
    if inner not in ("acsa", "acsa2"):
        raise InvalidParameterError(f"inner solver must be 'acsa' or 'acsa2', got {inner!r}")
    solve = _ac_sa if inner == "acsa" else _ac_sa2

    J = ladder_depth(mu, M)
    thresholds = sgd3_thresholds(mu, M)
    if T <= thresholds[inner]:
        warnings.warn(
            f"budget T={T} is below the guarantee threshold {thresholds[inner]:.1f} "
            f"for mu={mu:g}, M={M:g}; running anyway", RuntimeWarning, stacklevel=2)

    inner_M = 2.0 * (M + mu)
    alpha = grad_map_alpha_default(mu, M)
    stages = max(J, 1)
    budgets = _split(T, stages)
    mus = [mu * 2.0 ** j for j in range(stages + 1)]

    # F^(j-1)'s proximal part is c * w - d with c = sum mu_i, d = sum mu_i anchor_i
    c = mu
    d = mu * w0
    w_hat = w0
    stage_norms = []
    for j in range(1, stages + 1):
        def grad(w, c=c, d=d):
            g = c * w
            g += oracle(w)
            g -= d
            return g
        w_hat = solve(grad, w_hat, mus[j - 1], inner_M, budgets[j - 1], callback) \
            if budgets[j - 1] > 0 else w_hat
        c = c + mus[j]
        d = d + mus[j] * w_hat
        if getattr(oracle, "full_gradient", None) is not None and info is not None:
            G = (w_hat - np.maximum(w_hat - alpha * oracle.full_gradient(w_hat), 0.0)) / alpha
            stage_norms.append(float(np.linalg.norm(G)))

    if info is not None:
        info.update(J=J, mus=mus[:J + 1], budgets=budgets, alpha=alpha,
                    thresholds=thresholds, stage_grad_map_norms=stage_norms, inner=inner)
    return w_hat


def projected_sgd(oracle, w0, step_schedule, T: int, average: bool = False, callback=None):
    """``w_{t+1} = (w_t - eta_t g_t)_+``.

    ``step_schedule`` is a positive constant or a callable ``t -> eta_t``
    (``t`` starting at 1). Returns the last iterate, or ``(last, mean)``
    with ``average=True``.
    """
    w = _check_start(w0, T)
    steps = step_schedule if callable(step_schedule) else (lambda t: step_schedule)
    total = np.zeros_like(w)
    for t in range(1, T + 1):
        eta = steps(t)
        if eta <= 0:
            raise InvalidParameterError(f"step size must be positive, got {eta} at t={t}")
        w = np.maximum(w - eta * oracle(w), 0.0)
        if average:
            total += w
        if callback is not None:
            callback(w)
    return (w, total / T) if average else w
