"""Risk and fairness measurements for randomized grid policies.

Functions ending in ``_from_probs`` work on a probability matrix ``probs``
of shape ``(n, 2L+1)`` (one prediction distribution per evaluation point).
The policy-level wrappers accept any object with a
``predict_distribution(X) -> (atoms, probs)`` method.
"""

from dataclasses import dataclass
import csv
import io
import json
import math
from typing import List, Optional

import numpy as np

from .core_math import as_stacked, check_simplex, policy_probs
from .dual import (ProblemParams, FeaturePool, clipped_gradient_norm, full_gradient,
                   gradient_mapping)
from .errors import DegenerateGroupError, InvalidParameterError, PreconditionError
from .fileio import atomic_write_text


@dataclass
class MetricsReport:
    """One recorded point of an optimization run."""

    step: int
    oracle_calls: int
    risk: float
    ks_unfairness: np.ndarray
    clipped_unfairness_norm: float
    gradient_map_norm: float

    @property
    def ks_max(self) -> float:
        ks = np.asarray(self.ks_unfairness, dtype=float)
        return float(np.max(ks)) if ks.size else math.nan

    def as_row(self) -> dict:
        return {"step": self.step, "oracle_calls": self.oracle_calls, "risk": self.risk,
                "ks_max": self.ks_max, "clipped_unfairness_norm": self.clipped_unfairness_norm,
                "grad_map_norm": self.gradient_map_norm}


@dataclass(frozen=True)
class ConstantPolicy:
    """Same prediction distribution for every input."""

    atoms: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        probs = check_simplex(self.probs)
        if atoms.shape != probs.shape:
            raise InvalidParameterError("atoms and probabilities must align")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probs", probs)

    def predict_distribution(self, X):
        n = np.atleast_2d(np.asarray(X, dtype=float)).shape[0]
        return self.atoms, np.tile(self.probs, (n, 1))

    def to_dict(self) -> dict:
        return {"kind": "constant", "atoms": self.atoms.tolist(), "probs": self.probs.tolist()}


def _labels(sensitive, K: Optional[int]):
    s = np.asarray(sensitive)
    if s.ndim != 1 or s.size == 0:
        raise InvalidParameterError("need a nonempty vector of group labels")
    s = s.astype(int)
    K = int(s.max()) + 1 if K is None else int(K)
    if s.min() < 0 or s.max() >= K:
        raise InvalidParameterError(f"group labels must lie in 0..{K - 1}")
    counts = np.bincount(s, minlength=K)
    if np.any(counts == 0):
        raise DegenerateGroupError(
            f"groups {np.flatnonzero(counts == 0).tolist()} have no evaluation points")
    return s, K, counts


def risk_from_probs(probs, atoms, targets) -> float:
    """``mean_i sum_l (atom_l - y_i)^2 pi(l | x_i)``, evaluated exactly."""
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    y = np.asarray(targets, dtype=float).ravel()
    if y.size == 0:
        raise InvalidParameterError("empty evaluation set")
    if probs.shape[0] != y.size or probs.shape[1] != np.size(atoms):
        raise InvalidParameterError("probabilities, atoms and targets do not align")
    sq = (np.asarray(atoms, dtype=float)[None, :] - y[:, None]) ** 2
    return math.fsum(np.sum(probs * sq, axis=1)) / y.size


def group_cdf_gaps(probs, sensitive, K: Optional[int] = None) -> np.ndarray:
    """``(K, m)`` matrix of group-mean CDF minus overall-mean CDF at every atom."""
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    s, K, counts = _labels(sensitive, K)
    if probs.shape[0] != s.size:
        raise InvalidParameterError("one group label per evaluation point is required")
    cdf = np.cumsum(probs, axis=1)
    # centering on one row is exact for identical rows, so a constant policy gives exact zeros
    cdf -= cdf[0]
    overall = cdf.mean(axis=0)
    sums = np.zeros((K, cdf.shape[1]))
    np.add.at(sums, s, cdf)
    return sums / counts[:, None] - overall


def ks_from_probs(probs, sensitive, K: Optional[int] = None) -> np.ndarray:
    """Per-group sup-norm gap between group and overall prediction CDFs.

    The CDFs are step functions jumping only at atoms, so the maximum over
    atoms is the exact supremum.
    """
    gaps = group_cdf_gaps(probs, sensitive, K)
    return np.clip(np.max(np.abs(gaps), axis=1), 0.0, 1.0)


def ks_from_values(values, sensitive, K: Optional[int] = None) -> np.ndarray:
    """Same statistic for deterministic real-valued predictions.

    Empirical CDFs are compared at every distinct prediction value.
    """
    v = np.asarray(values, dtype=float).ravel()
    s, K, counts = _labels(sensitive, K)
    if v.size != s.size:
        raise InvalidParameterError("one group label per prediction is required")
    thresholds = np.unique(v)
    overall = np.searchsorted(np.sort(v), thresholds, side="right") / v.size
    out = np.empty(K)
    for g in range(K):
        vg = np.sort(v[s == g])
        out[g] = np.max(np.abs(np.searchsorted(vg, thresholds, side="right") / vg.size - overall))
    return out


def discretized_unfairness_from_probs(probs, sensitive, K: Optional[int] = None) -> np.ndarray:
    """``(m, K)`` matrix ``|mean_{s_i = s} pi(l|x_i) - mean_i pi(l|x_i)|``."""
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    s, K, counts = _labels(sensitive, K)
    if probs.shape[0] != s.size:
        raise InvalidParameterError("one group label per evaluation point is required")
    centered = probs - probs[0]
    sums = np.zeros((K, probs.shape[1]))
    np.add.at(sums, s, centered)
    return np.abs(sums / counts[:, None] - centered.mean(axis=0)).T


def pool_discretized_unfairness(dual, params: ProblemParams, pool: FeaturePool) -> np.ndarray:
    """``|pool-mean pi(l|x) t_s(x)|``: the unfairness seen through posteriors."""
    probs = policy_probs(dual, pool.t, pool.r, params.beta)
    return np.abs(probs.T @ pool.t / pool.size)


def clipped_unfairness_norm(U, eps) -> float:
    """``sqrt(sum_{l,s} (U_{ls} - eps_s)_+^2)``."""
    return float(np.linalg.norm(np.maximum(np.asarray(U) - np.asarray(eps), 0.0)))


def _distribution(policy, X):
    atoms, probs = policy.predict_distribution(X)
    return np.asarray(atoms, dtype=float), np.atleast_2d(probs)


def empirical_risk(policy, X, y) -> float:
    atoms, probs = _distribution(policy, X)
    return risk_from_probs(probs, atoms, y)


def ks_unfairness(policy, X, sensitive, K: Optional[int] = None) -> np.ndarray:
    _, probs = _distribution(policy, X)
    return ks_from_probs(probs, sensitive, K)


def discretized_unfairness(policy, X, sensitive, K: Optional[int] = None) -> np.ndarray:
    _, probs = _distribution(policy, X)
    return discretized_unfairness_from_probs(probs, sensitive, K)


def plugin_risk(dual, params: ProblemParams, pool: FeaturePool) -> float:
    """Pool mean of ``sum_l pi(l|x) r_l(x)``: risk measured against the regressor."""
    probs = policy_probs(dual, pool.t, pool.r, params.beta)
    return math.fsum(np.sum(probs * pool.r, axis=1)) / pool.size


def kkt_residual(dual, params: ProblemParams, pool: FeaturePool) -> float:
    """Sum of constraint violation, complementary slackness and dual infeasibility.

    With ``g`` the pool gradient: ``||(-g)_+||`` measures
    ``|mean pi t_s| > eps_s``, ``sum |w * g|`` the slackness and ``||w_-||``
    negative multipliers. All three vanish exactly at a minimizer over the
    orthant.
    """
    w = as_stacked(dual)
    g = full_gradient(w, params, pool)
    return (clipped_gradient_norm(g) + float(np.sum(np.abs(w * g)))
            + float(np.linalg.norm(np.minimum(w, 0.0))))


def risk_gain_check(probs_star, probs_feasible, params: ProblemParams, pool: FeaturePool,
                    tol: float = 1e-6) -> bool:
    """Whether ``R(pi*) <= R(pi) + log(2L+1) / beta`` for a feasible comparator ``pi``.

    Both policies are ``(n, 2L+1)`` probability matrices over the pool rows;
    risk and unfairness use the pool measure. Raises
    :class:`PreconditionError` when the comparator violates a constraint by
    more than ``tol``.
    """
    probs_star = np.atleast_2d(np.asarray(probs_star, dtype=float))
    probs_feasible = np.atleast_2d(np.asarray(probs_feasible, dtype=float))
    shape = (pool.size, params.grid.size)
    if probs_star.shape != shape or probs_feasible.shape != shape:
        raise InvalidParameterError(f"policies must have shape {shape}")
    U = np.abs(probs_feasible.T @ pool.t / pool.size)
    violation = float(np.max(U - params.eps))
    if violation > tol:
        raise PreconditionError(f"comparator violates the fairness constraints by {violation:.3g}")
    risk_star = math.fsum(np.sum(probs_star * pool.r, axis=1)) / pool.size
    risk_cmp = math.fsum(np.sum(probs_feasible * pool.r, axis=1)) / pool.size
    return risk_star <= risk_cmp + math.log(params.grid.size) / params.beta + tol


def risk_excess_bound(dual, params: ProblemParams, pool: FeaturePool, alpha: float) -> float:
    """``||w|| ||G_alpha(w)|| + log(2L+1) / beta``.

    Bounds how much the plug-in risk of the policy at ``w`` can exceed the
    risk of the policy at the exact dual minimizer; computable from ``w``
    alone.
    """
    w = as_stacked(dual)
    G = gradient_mapping(w, full_gradient(w, params, pool), alpha)
    return float(np.linalg.norm(w) * np.linalg.norm(G)) + math.log(params.grid.size) / params.beta


def sample_risk(probs, atoms, targets, n_draws: int, rng) -> float:
    """Monte Carlo risk: sample ``n_draws`` (point, prediction) pairs."""
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    atoms = np.asarray(atoms, dtype=float)
    y = np.asarray(targets, dtype=float).ravel()
    rows = rng.integers(y.size, size=n_draws)
    cum = np.cumsum(probs[rows], axis=1)
    u = rng.random(n_draws)[:, None]
    picks = np.minimum((u >= cum).sum(axis=1), atoms.size - 1)
    return float(np.mean((atoms[picks] - y[rows]) ** 2))


HISTORY_COLUMNS = ("step", "oracle_calls", "risk", "ks_max", "clipped_unfairness_norm",
                   "grad_map_norm")


def _fmt(x) -> str:
    return format(float(x), ".17g") if not isinstance(x, (int, np.integer)) else str(int(x))


def history_to_csv(history: List[MetricsReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HISTORY_COLUMNS)
    for rep in history:
        row = rep.as_row()
        writer.writerow([_fmt(row[c]) for c in HISTORY_COLUMNS])
    return buf.getvalue()


def write_history_csv(history: List[MetricsReport], path) -> None:
    atomic_write_text(path, history_to_csv(history))


def read_history_csv(path) -> List[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        out.append({c: (int(row[c]) if c in ("step", "oracle_calls") else float(row[c]))
                    for c in HISTORY_COLUMNS})
    return out


def summary_json(report: MetricsReport, **extra) -> str:
    doc = {"step": report.step, "oracle_calls": report.oracle_calls, "risk": report.risk,
           "ks_unfairness": np.asarray(report.ks_unfairness, dtype=float).tolist(),
           "ks_max": report.ks_max, "clipped_unfairness_norm": report.clipped_unfairness_norm,
           "grad_map_norm": report.gradient_map_norm}
    doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
