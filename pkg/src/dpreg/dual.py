"""Smooth convex dual objective over nonnegative multiplier matrices.

The objective, for multipliers ``lambda, nu >= 0`` of shape ``(2L+1, K)``, is::

    F(lambda, nu) = E[ lse_beta( <lambda_l - nu_l, t(X)> - r_l(X) )_l ]
                    + sum_l <lambda_l + nu_l, eps>

with the expectation taken over a finite pool of unlabeled rows
``(t(x), r(x))``. Its minimizer parameterizes the fair randomized policy
(see :func:`dpreg.core_math.policy_probs`).

Dual points and gradients are handled as stacked ``(2, 2L+1, K)`` arrays,
index 0 holding the lambda block and index 1 the nu block; :class:`DualVars`
is the named wrapper used at API boundaries.
"""

from dataclasses import dataclass
import math

import numpy as np

from .core_math import Grid, as_stacked, policy_scores, softmax, t_vector, r_vector
from .errors import DegenerateGroupError, InvalidParameterError
from .optimizers import OracleHandle


@dataclass(frozen=True)
class DualVars:
    lam: np.ndarray
    nu: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        nu = np.asarray(self.nu, dtype=float)
        if lam.shape != nu.shape or lam.ndim != 2:
            raise InvalidParameterError(
                f"lambda and nu must be matrices of equal shape, got {lam.shape} and {nu.shape}")
        if np.any(lam < 0) or np.any(nu < 0):
            raise InvalidParameterError("dual variables must be entrywise nonnegative")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "nu", nu)

    @classmethod
    def zeros(cls, n_atoms: int, K: int) -> "DualVars":
        return cls(np.zeros((n_atoms, K)), np.zeros((n_atoms, K)))

    @classmethod
    def from_stacked(cls, w) -> "DualVars":
        w = np.asarray(w, dtype=float)
        return cls(w[0].copy(), w[1].copy())

    @property
    def stacked(self) -> np.ndarray:
        return np.stack([self.lam, self.nu])

    @property
    def shape(self):
        return self.lam.shape

    def norm(self) -> float:
        return float(np.linalg.norm(self.stacked))


@dataclass(frozen=True)
class ProblemParams:
    beta: float
    eps: np.ndarray
    p: np.ndarray
    grid: Grid

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float).ravel()
        eps = np.broadcast_to(np.asarray(self.eps, dtype=float), p.shape).copy()
        if self.beta <= 0:
            raise InvalidParameterError(f"beta must be positive, got {self.beta!r}")
        if np.any(p <= 0):
            raise DegenerateGroupError(f"every group marginal must be positive, got {p!r}")
        if abs(p.sum() - 1.0) > 1e-9:
            raise InvalidParameterError(f"marginals must sum to one, got {p.sum()!r}")
        if np.any(eps < 0) or np.any(eps > 1):
            raise InvalidParameterError(f"slacks must lie in [0, 1], got {eps!r}")
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "eps", eps)

    @property
    def K(self) -> int:
        return self.p.shape[0]

    @property
    def shape(self):
        return (2, self.grid.size, self.K)


@dataclass(frozen=True)
class FeaturePool:
    """Precomputed ``(t(x), r(x))`` rows of the unlabeled sample."""

    t: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        t = np.atleast_2d(np.asarray(self.t, dtype=float))
        r = np.atleast_2d(np.asarray(self.r, dtype=float))
        if t.shape[0] < 1 or t.shape[0] != r.shape[0]:
            raise InvalidParameterError(
                f"pool needs matching nonempty t and r rows, got {t.shape} and {r.shape}")
        if np.any(r < 0) or not (np.all(np.isfinite(t)) and np.all(np.isfinite(r))):
            raise InvalidParameterError("pool rows must be finite with nonnegative r")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "r", r)

    @property
    def size(self) -> int:
        return self.t.shape[0]

    def __len__(self):
        return self.size

    @classmethod
    def from_predictions(cls, eta_values, tau_rows, p, grid: Grid) -> "FeaturePool":
        """Build rows from regression values and group posteriors (clamped to ``[-B, B]``)."""
        eta = np.clip(np.asarray(eta_values, dtype=float), -grid.B, grid.B)
        return cls(t_vector(np.atleast_2d(tau_rows), p), r_vector(eta, grid))


def sigma_squared(p) -> float:
    """Variance bound ``sum_s (1 - p_s) / p_s`` for exact posteriors."""
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0):
        raise DegenerateGroupError(f"zero group marginal in {p!r}")
    return float(np.sum((1.0 - p) / p))


def sigma_hat_squared(tau_hat_rows, p) -> float:
    """Pool mean of ``sum_s (p_s - tau_s(x))^2 / p_s^2`` for plug-in posteriors."""
    tau = np.atleast_2d(np.asarray(tau_hat_rows, dtype=float))
    if tau.shape[0] == 0 or tau.size == 0:
        raise InvalidParameterError("empty pool")
    t = t_vector(tau, p)
    return math.fsum(np.sum(t * t, axis=1)) / tau.shape[0]


def smoothness_constant(beta: float, sigma2: float) -> float:
    if beta <= 0:
        raise InvalidParameterError(f"beta must be positive, got {beta!r}")
    return 2.0 * beta * sigma2


def _check_shapes(w: np.ndarray, params: ProblemParams, pool: FeaturePool):
    if w.shape != params.shape:
        raise InvalidParameterError(f"dual has shape {w.shape}, expected {params.shape}")
    if pool.t.shape[1] != params.K or pool.r.shape[1] != params.grid.size:
        raise InvalidParameterError(
            f"pool rows {pool.t.shape[1]}/{pool.r.shape[1]} do not match K={params.K}, "
            f"grid size={params.grid.size}")


def objective_value(dual, params: ProblemParams, pool: FeaturePool) -> float:
    w = as_stacked(dual)
    _check_shapes(w, params, pool)
    beta = params.beta
    z = policy_scores(w, pool.t, pool.r, beta)
    zmax = z.max(axis=1)
    lse_rows = (zmax + np.log(np.exp(z - zmax[:, None]).sum(axis=1))) / beta
    penalty = np.sum((w[0] + w[1]) * params.eps)
    return math.fsum(lse_rows) / pool.size + float(penalty)


def _row_gradients(w: np.ndarray, params: ProblemParams, t: np.ndarray, r: np.ndarray):
    pi = softmax(policy_scores(w, t, r, params.beta))
    data = pi[:, :, None] * t[:, None, :]
    return np.stack([data + params.eps, -data + params.eps], axis=1)


def stochastic_gradient(dual, params: ProblemParams, row) -> np.ndarray:
    """Unbiased one-sample gradient from a single pool row ``(t, r)``.

    Returns a ``(2, 2L+1, K)`` array: ``pi_l * t_s + eps_s`` in the lambda
    block and ``-pi_l * t_s + eps_s`` in the nu block.
    """
    w = as_stacked(dual)
    t, r = (np.asarray(a, dtype=float) for a in row)
    if w.shape != params.shape or t.shape != (params.K,) or r.shape != (params.grid.size,):
        raise InvalidParameterError(
            f"dimension mismatch: dual {w.shape}, t {t.shape}, r {r.shape}")
    return _row_gradients(w, params, t[None, :], r[None, :])[0]


def full_gradient(dual, params: ProblemParams, pool: FeaturePool) -> np.ndarray:
    """Exact gradient under the pool measure: the mean of every row's stochastic gradient."""
    w = as_stacked(dual)
    _check_shapes(w, params, pool)
    return _row_gradients(w, params, pool.t, pool.r).mean(axis=0)


def project_nonneg(point):
    if isinstance(point, DualVars):
        return point
    return np.maximum(np.asarray(point, dtype=float), 0.0)


def gradient_mapping(dual, grad, alpha: float) -> np.ndarray:
    """Projected-step residual ``(w - (w - alpha * grad)_+) / alpha``."""
    if alpha <= 0:
        raise InvalidParameterError(f"alpha must be positive, got {alpha!r}")
    w = as_stacked(dual)
    grad = np.asarray(grad, dtype=float)
    return (w - np.maximum(w - alpha * grad, 0.0)) / alpha


def clipped_gradient_norm(grad) -> float:
    """Frobenius norm of ``(-grad)_+``."""
    return float(np.linalg.norm(np.maximum(-np.asarray(grad, dtype=float), 0.0)))


def pool_oracle(params: ProblemParams, pool: FeaturePool, seed=None,
                block: int = 4096) -> OracleHandle:
    """Stochastic first-order oracle sampling pool rows uniformly with replacement."""
    rng = np.random.default_rng(seed)
    beta, eps = params.beta, params.eps
    t_rows, r_rows = pool.t, pool.r
    n = pool.size
    buf = {"idx": rng.integers(n, size=block), "pos": 0}

    def stochastic(w):
        if buf["pos"] == block:
            buf["idx"] = rng.integers(n, size=block)
            buf["pos"] = 0
        i = buf["idx"][buf["pos"]]
        buf["pos"] += 1
        t = t_rows[i]
        z = (w[0] - w[1]) @ t
        z -= r_rows[i]
        z *= beta
        z = np.exp(z - z.max())
        z /= z.sum()
        data = z[:, None] * t
        out = np.empty((2,) + data.shape)
        np.add(data, eps, out=out[0])
        np.subtract(eps, data, out=out[1])
        return out

    return OracleHandle(stochastic, lambda w: full_gradient(w, params, pool), params.shape)
