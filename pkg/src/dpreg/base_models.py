"""Base estimators for the plug-in pipeline and the grid discretization operator.

* :func:`fit_least_squares` -- ridge regression with an unpenalized intercept,
  predictions clamped to ``[-B, B]``.
* :func:`fit_logistic` -- multinomial logistic regression by gradient descent
  with Armijo backtracking.
* :func:`discretize_tl` -- truncation of a bounded prediction onto the grid.

Models are immutable and serialize to small JSON documents.
"""

from dataclasses import dataclass
import json
import math
from typing import Optional

import numpy as np

from .core_math import Grid, softmax
from .errors import (DegenerateGroupError, InvalidParameterError, OutOfRangeError,
                     ParseError, RankDeficiencyError)
from .fileio import atomic_write_text


def _as_features(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or not np.all(np.isfinite(X)):
        raise InvalidParameterError("features must be a finite n x d matrix")
    return X


@dataclass(frozen=True)
class LinearModel:
    """Affine regressor ``clip(w[0] + X @ w[1:], -B, B)``."""

    weights: np.ndarray
    clamp_bound: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.size < 1 or not np.all(np.isfinite(w)):
            raise InvalidParameterError("weights must be a finite nonempty vector")
        if not self.clamp_bound > 0:
            raise InvalidParameterError(f"clamp bound must be positive, got {self.clamp_bound!r}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "clamp_bound", float(self.clamp_bound))

    @property
    def n_features(self) -> int:
        return self.weights.size - 1

    def predict_raw(self, X) -> np.ndarray:
        X = _as_features(X)
        if X.shape[1] != self.n_features:
            raise InvalidParameterError(
                f"model expects {self.n_features} features, got {X.shape[1]}")
        return self.weights[0] + X @ self.weights[1:]

    def predict(self, X) -> np.ndarray:
        B = self.clamp_bound
        return np.clip(self.predict_raw(X), -B, B)

    def to_dict(self) -> dict:
        return {"kind": "linear", "weights": self.weights.tolist(),
                "clamp_bound": self.clamp_bound}


@dataclass(frozen=True)
class MulticlassLogistic:
    """Posterior ``softmax(W[:, 0] + W[:, 1:] @ x)`` over ``K`` groups."""

    weights: np.ndarray

    def __post_init__(self):
        W = np.asarray(self.weights, dtype=float)
        if W.ndim != 2 or W.shape[0] < 1 or W.shape[1] < 1 or not np.all(np.isfinite(W)):
            raise InvalidParameterError("weights must be a finite K x (d+1) matrix")
        object.__setattr__(self, "weights", W)

    @property
    def K(self) -> int:
        return self.weights.shape[0]

    @property
    def n_features(self) -> int:
        return self.weights.shape[1] - 1

    def logits(self, X) -> np.ndarray:
        X = _as_features(X)
        if X.shape[1] != self.n_features:
            raise InvalidParameterError(
                f"model expects {self.n_features} features, got {X.shape[1]}")
        return self.weights[:, 0] + X @ self.weights[:, 1:].T

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.logits(X))

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.logits(X), axis=1)

    def to_dict(self) -> dict:
        return {"kind": "logistic", "weights": self.weights.tolist()}


def default_bound(targets) -> float:
    """``max(1, max |y|)``: a signal bound that never shrinks a normalized target range."""
    y = np.asarray(targets, dtype=float)
    if y.size == 0:
        raise InvalidParameterError("cannot infer a bound from no targets")
    return max(1.0, float(np.max(np.abs(y))))


def fit_least_squares(X, y, ridge: float = 0.0, bound: Optional[float] = None) -> LinearModel:
    """Minimize ``||Xw + b - y||^2 + ridge ||w||^2`` (intercept ``b`` unpenalized).

    Solved through the normal equations of the centered problem, which is
    the same system with the intercept eliminated. ``bound`` defaults to
    :func:`default_bound` of the targets.
    """
    X = _as_features(X)
    y = np.asarray(y, dtype=float).ravel()
    n, d = X.shape
    if n == 0 or y.shape[0] != n or not np.all(np.isfinite(y)):
        raise InvalidParameterError("need n >= 1 finite targets matching the feature rows")
    if ridge < 0:
        raise InvalidParameterError(f"ridge must be nonnegative, got {ridge!r}")
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = X - x_mean
    A = Xc.T @ Xc + ridge * np.eye(d)
    if ridge == 0 and d > 0 and np.linalg.matrix_rank(Xc) < d:
        raise RankDeficiencyError(
            f"design has rank {np.linalg.matrix_rank(Xc)} < {d} after centering; use ridge > 0")
    slopes = np.linalg.solve(A, Xc.T @ (y - y_mean)) if d > 0 else np.zeros(0)
    intercept = y_mean - x_mean @ slopes
    return LinearModel(np.concatenate([[intercept], slopes]),
                       default_bound(y) if bound is None else bound)


def _cross_entropy(W, Z, onehot, l2):
    logits = W[:, 0] + Z @ W[:, 1:].T
    zmax = logits.max(axis=1, keepdims=True)
    log_norm = zmax[:, 0] + np.log(np.exp(logits - zmax).sum(axis=1))
    loss = np.mean(log_norm - (logits * onehot).sum(axis=1)) + 0.5 * l2 * np.sum(W[:, 1:] ** 2)
    probs = np.exp(logits - log_norm[:, None])
    diff = (probs - onehot) / Z.shape[0]
    grad = np.empty_like(W)
    grad[:, 0] = diff.sum(axis=0)
    grad[:, 1:] = diff.T @ Z + l2 * W[:, 1:]
    return loss, grad


def fit_logistic(X, labels, K: Optional[int] = None, l2: float = 1e-4, iters: int = 500,
                 lr: float = 1.0, tol: float = 1e-10, info: Optional[dict] = None
                 ) -> MulticlassLogistic:
    """Multinomial logistic regression on 0-based labels.

    Features are standardized internally and the weights are mapped back to
    the original coordinates. Each step starts from twice the previous
    accepted step size and halves it until the Armijo condition holds, so
    the training loss never increases. ``info`` receives the loss history.
    """
    X = _as_features(X)
    labels = np.asarray(labels)
    if labels.shape != (X.shape[0],) or X.shape[0] == 0:
        raise InvalidParameterError("need one label per feature row")
    if not np.all(labels == np.round(labels)) or labels.min() < 0:
        raise InvalidParameterError("labels must be nonnegative integers")
    labels = labels.astype(int)
    K = int(labels.max()) + 1 if K is None else int(K)
    if labels.max() >= K:
        raise InvalidParameterError(f"label {labels.max()} out of range for K={K}")
    counts = np.bincount(labels, minlength=K)
    if np.any(counts == 0):
        raise DegenerateGroupError(f"classes {np.flatnonzero(counts == 0).tolist()} are absent")
    if l2 < 0 or lr <= 0 or iters < 0:
        raise InvalidParameterError("need l2 >= 0, lr > 0 and iters >= 0")

    center = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Z = (X - center) / scale
    onehot = np.eye(K)[labels]
    W = np.zeros((K, Z.shape[1] + 1))
    W[:, 0] = np.log(counts / counts.sum())
    loss, grad = _cross_entropy(W, Z, onehot, l2)
    history = [loss]
    step = lr
    for _ in range(iters):
        gsq = float(np.sum(grad * grad))
        if gsq <= tol * tol:
            break
        step *= 2.0
        while True:
            cand = W - step * grad
            cand_loss, cand_grad = _cross_entropy(cand, Z, onehot, l2)
            if cand_loss <= loss - 0.5 * step * gsq or step < 1e-16:
                break
            step *= 0.5
        if cand_loss > loss:
            break
        W, loss, grad = cand, cand_loss, cand_grad
        history.append(loss)

    slopes = W[:, 1:] / scale
    weights = np.column_stack([W[:, 0] - slopes @ center, slopes])
    if info is not None:
        info["loss_history"] = history
    return MulticlassLogistic(weights)


def calibrate_intercepts(model: MulticlassLogistic, X, p, iters: int = 200,
                         tol: float = 1e-12) -> MulticlassLogistic:
    """Shift intercepts so the average posterior over ``X`` matches ``p``.

    Fixed-point iteration ``b_s += log(p_s / mean tau_s)``; optional, the
    pipeline does not call it unless asked.
    """
    p = np.asarray(p, dtype=float)
    if p.shape != (model.K,) or np.any(p <= 0):
        raise DegenerateGroupError("calibration targets must be positive, one per group")
    W = model.weights.copy()
    X = _as_features(X)
    for _ in range(iters):
        avg = MulticlassLogistic(W).predict_proba(X).mean(axis=0)
        shift = np.log(p / avg)
        W[:, 0] += shift
        if np.max(np.abs(shift)) < tol:
            break
    return MulticlassLogistic(W)


def discretize_tl_index(h_val, grid: Grid) -> np.ndarray:
    """Signed atom index ``trunc(L h / B)`` of :func:`discretize_tl`."""
    h = np.asarray(h_val, dtype=float)
    if not np.all(np.isfinite(h)) or np.any(np.abs(h) > grid.B):
        raise OutOfRangeError(f"values must lie in [-{grid.B}, {grid.B}]; clamp first")
    q = grid.L * h / grid.B
    k = np.trunc(q)
    # inputs that are grid atoms up to rounding map to themselves
    near = np.round(q)
    k = np.where(np.abs(q - near) <= 8 * np.finfo(float).eps * grid.L, near, k)
    return k.astype(int)


def discretize_tl(h_val, grid: Grid):
    """Truncate toward zero onto the grid: ``trunc(L h / B) * B / L``.

    Keeps ``|T_L(h)| <= |h|`` and ``|T_L(h) - h| < B / L``; ``h = B`` maps to
    ``B``. Raises :class:`OutOfRangeError` for ``|h| > B``.
    """
    k = discretize_tl_index(h_val, grid)
    out = grid.atoms[k + grid.L]
    return float(out) if np.ndim(out) == 0 else out


def model_from_dict(doc: dict):
    kind = doc.get("kind")
    try:
        if kind == "linear":
            return LinearModel(np.array(doc["weights"], dtype=float), doc["clamp_bound"])
        if kind == "logistic":
            return MulticlassLogistic(np.array(doc["weights"], dtype=float))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InvalidParameterError):
            raise
        raise ParseError(f"malformed {kind} model document: {exc}") from exc
    raise ParseError(f"unknown model kind {kind!r}")


def save_model(model, path) -> None:
    atomic_write_text(path, json.dumps(model.to_dict(), indent=2) + "\n")


def load_model(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc
    return model_from_dict(doc)


def squared_error(pred, y) -> float:
    """Mean squared error, the risk of a deterministic predictor."""
    pred = np.asarray(pred, dtype=float)
    y = np.asarray(y, dtype=float)
    if pred.shape != y.shape or y.size == 0:
        raise InvalidParameterError("predictions and targets must be nonempty and aligned")
    return math.fsum((pred - y) ** 2) / y.size
