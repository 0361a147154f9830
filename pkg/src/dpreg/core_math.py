"""Prediction grid and the elementary maps everything else is built from.

All functions are pure. Vectors are plain ``numpy`` arrays; a "simplex
vector" is a nonnegative array summing to one (see :func:`check_simplex`).
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGroupError, InvalidParameterError

SIMPLEX_ATOL = 1e-9


@dataclass(frozen=True)
class Grid:
    """Uniform grid ``{l * B / L : l = -L..L}`` on ``[-B, B]``."""

    B: float
    L: int

    @property
    def size(self) -> int:
        return 2 * self.L + 1

    @property
    def step(self) -> float:
        return self.B / self.L

    @property
    def atoms(self) -> np.ndarray:
        a = np.arange(-self.L, self.L + 1) * self.B / self.L
        a[0], a[-1] = -self.B, self.B  # the product-quotient can miss B by one ulp
        return a

    def index_of_zero(self) -> int:
        return self.L


def build_grid(B: float, L: int) -> Grid:
    if not np.isfinite(B) or B <= 0:
        raise InvalidParameterError(f"grid bound B must be positive, got {B!r}")
    if int(L) != L or L < 1:
        raise InvalidParameterError(f"grid half-count L must be an integer >= 1, got {L!r}")
    return Grid(float(B), int(L))


def check_simplex(v, atol: float = SIMPLEX_ATOL) -> np.ndarray:
    """Return ``v`` as an array, raising if it is not a probability vector."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise InvalidParameterError("simplex vector must be a nonempty 1-d array")
    if np.any(v < 0) or abs(v.sum() - 1.0) > atol:
        raise InvalidParameterError(f"not a probability vector: {v!r}")
    return v


def _as_nonempty(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape[-1:] == (0,) or w.ndim == 0:
        raise InvalidParameterError("empty vector")
    return w


def lse(w, beta: float) -> float:
    """Smoothed maximum ``beta^-1 log sum exp(beta * w)``.

    Computed in max-shifted form, so ``beta * w`` may be far outside the
    range of ``exp``. Operates on the last axis, so a 2-d input gives one
    value per row.
    """
    w = _as_nonempty(w)
    if beta <= 0:
        raise InvalidParameterError(f"beta must be positive, got {beta!r}")
    wmax = w.max(axis=-1, keepdims=True)
    s = np.exp(beta * (w - wmax)).sum(axis=-1)
    out = wmax[..., 0] + np.log(s) / beta
    return float(out) if out.ndim == 0 else out


def softmax(w) -> np.ndarray:
    """Soft-argmax over the last axis. The caller applies any inverse temperature."""
    w = _as_nonempty(w)
    z = np.exp(w - w.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def neg_entropy(mu) -> float:
    """``sum mu log mu`` with ``0 log 0 = 0``; lies in ``[-log m, 0]``."""
    mu = check_simplex(mu)
    nz = mu[mu > 0]
    return float(np.sum(nz * np.log(nz)))


def t_vector(tau, p) -> np.ndarray:
    """Centered likelihood ratio ``1 - tau / p``.

    ``tau`` may be a single posterior (length K) or a stack of them (n x K).
    """
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0):
        raise DegenerateGroupError(f"every group marginal must be positive, got {p!r}")
    tau = np.asarray(tau, dtype=float)
    if tau.shape[-1] != p.shape[0]:
        raise InvalidParameterError(
            f"posterior has {tau.shape[-1]} groups but marginals have {p.shape[0]}")
    return 1.0 - tau / p


def r_vector(eta_val, grid: Grid) -> np.ndarray:
    """Squared distance from ``eta_val`` to every grid atom.

    A 1-d array of values gives an (n, 2L+1) matrix.
    """
    eta = np.asarray(eta_val, dtype=float)
    return (eta[..., None] - grid.atoms) ** 2


def as_stacked(dual) -> np.ndarray:
    """Dual variables as one ``(2, 2L+1, K)`` array (``[0]`` = lambda, ``[1]`` = nu)."""
    if hasattr(dual, "stacked"):
        return dual.stacked
    w = np.asarray(dual, dtype=float)
    if w.ndim != 3 or w.shape[0] != 2:
        raise InvalidParameterError(f"expected dual of shape (2, 2L+1, K), got {w.shape}")
    return w


def policy_scores(dual, t, r, beta: float) -> np.ndarray:
    """``beta * (<lambda_l - nu_l, t> - r_l)`` for every atom ``l``.

    ``t`` is (K,) or (n, K) and ``r`` is (m,) or (n, m) correspondingly.
    """
    w = as_stacked(dual)
    diff = w[0] - w[1]
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    m, K = diff.shape
    if t.shape[-1] != K or r.shape[-1] != m or t.shape[:-1] != r.shape[:-1]:
        raise InvalidParameterError(
            f"dimension mismatch: dual {diff.shape}, t {t.shape}, r {r.shape}")
    # Explicit product-sum keeps single rows and batches bitwise consistent.
    return beta * ((t[..., None, :] * diff).sum(axis=-1) - r)


def policy_probs(dual, t, r, beta: float) -> np.ndarray:
    """Randomized prediction over the grid atoms for one input (or a batch)."""
    if beta <= 0:
        raise InvalidParameterError(f"beta must be positive, got {beta!r}")
    return softmax(policy_scores(dual, t, r, beta))
