"""Datasets: CSV ingestion, the train/unlabeled/test split and the synthetic generator.

Group labels are stored 0-based (``0..K-1``); ``Dataset.group_values``
keeps the original value of each code, in sorted order.
"""

from dataclasses import dataclass, field
import csv
import io
import math
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import DegenerateGroupError, InvalidParameterError, ParseError
from .fileio import atomic_write_text


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    sensitive: Optional[np.ndarray] = None
    targets: Optional[np.ndarray] = None
    K: Optional[int] = None
    feature_names: Tuple[str, ...] = ()
    group_values: Tuple = ()

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim != 2 or not np.all(np.isfinite(X)):
            raise InvalidParameterError("features must be a finite n x d matrix")
        n = X.shape[0]
        object.__setattr__(self, "features", X)
        if self.targets is not None:
            y = np.asarray(self.targets, dtype=float).ravel()
            if y.shape != (n,) or not np.all(np.isfinite(y)):
                raise InvalidParameterError("targets must be n finite values")
            object.__setattr__(self, "targets", y)
        if self.sensitive is not None:
            s = np.asarray(self.sensitive)
            if s.shape != (n,) or (n and (not np.all(s == np.round(s)) or s.min() < 0)):
                raise InvalidParameterError("sensitive labels must be n nonnegative integers")
            s = s.astype(int)
            K = self.K if self.K is not None else (int(s.max()) + 1 if n else 0)
            if n and s.max() >= K:
                raise InvalidParameterError(f"sensitive label {s.max()} out of range for K={K}")
            object.__setattr__(self, "sensitive", s)
            object.__setattr__(self, "K", int(K))
        if not self.feature_names:
            object.__setattr__(self, "feature_names",
                               tuple(f"x{j + 1}" for j in range(X.shape[1])))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    def subset(self, idx, keep_labels: bool = True) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(
            self.features[idx],
            self.sensitive[idx] if keep_labels and self.sensitive is not None else None,
            self.targets[idx] if keep_labels and self.targets is not None else None,
            self.K if keep_labels else None, self.feature_names,
            self.group_values if keep_labels else ())


@dataclass
class RunConfig:
    """Everything one experiment run needs besides the data."""

    fractions: Tuple[float, float, float] = (0.4, 0.4, 0.2)
    seed: int = 0
    T: int = 10_000
    eps: Sequence[float] = field(default_factory=lambda: [2.0 ** -i for i in range(1, 9)])
    optimizer: str = "sgd3-acsa"
    n_iter: Optional[int] = None
    record_every: int = 0
    B: Optional[float] = None
    data_path: Optional[str] = None
    out_dir: Optional[str] = None

    def __post_init__(self):
        check_fractions(self.fractions)
        if self.T < 2:
            raise InvalidParameterError(f"T must be >= 2, got {self.T}")


def check_fractions(fractions) -> Tuple[float, ...]:
    fr = tuple(float(f) for f in fractions)
    if len(fr) != 3 or any(f <= 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
        raise InvalidParameterError(f"split fractions must be 3 positive numbers summing to 1, got {fractions!r}")
    return fr


def _parse_float(text: str, row: int, col: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"row {row}, column {col!r}: cannot parse {text!r} as a number") from None
    if not math.isfinite(v):
        raise ParseError(f"row {row}, column {col!r}: non-finite value {text!r}")
    return v


def _sorted_groups(values):
    distinct = set(values)
    try:
        return sorted(distinct, key=float)
    except ValueError:
        return sorted(distinct)


def load_csv(path, feature_cols: Optional[Sequence[str]] = None, sensitive_col: Optional[str] = "s",
             target_col: Optional[str] = "y") -> Dataset:
    """Read a comma-separated file with a header row.

    ``feature_cols`` defaults to every column other than the sensitive and
    target columns. Group values are coded by sorted order (numerically when
    every value parses as a number, lexicographically otherwise). Row numbers
    in error messages count the header as row 1.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    if not rows:
        raise ParseError(f"{path}: no data rows")
    special = [c for c in (sensitive_col, target_col) if c is not None]
    if feature_cols is None:
        feature_cols = [h for h in header if h not in special]
    missing = [c for c in list(feature_cols) + special if c not in header]
    if missing:
        raise ParseError(f"{path}: missing columns {missing}")
    if not feature_cols:
        raise ParseError(f"{path}: no feature columns")
    pos = {h: i for i, h in enumerate(header)}
    X = np.empty((len(rows), len(feature_cols)))
    y = np.empty(len(rows)) if target_col is not None else None
    raw_s = []
    for i, row in enumerate(rows):
        line = i + 2
        if len(row) != len(header):
            raise ParseError(f"{path}: row {line} has {len(row)} cells, expected {len(header)}")
        for j, c in enumerate(feature_cols):
            X[i, j] = _parse_float(row[pos[c]].strip(), line, c)
        if y is not None:
            y[i] = _parse_float(row[pos[target_col]].strip(), line, target_col)
        if sensitive_col is not None:
            raw_s.append(row[pos[sensitive_col]].strip())
    s = None
    groups = ()
    if sensitive_col is not None:
        groups = tuple(_sorted_groups(raw_s))
        code = {g: k for k, g in enumerate(groups)}
        s = np.array([code[v] for v in raw_s], dtype=int)
    return Dataset(X, s, y, len(groups) if s is not None else None, tuple(feature_cols), groups)


def dataset_to_csv(data: Dataset) -> str:
    """CSV text with 17 significant digits; group codes are written as stored values."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = list(data.feature_names)
    if data.sensitive is not None:
        header.append("s")
    if data.targets is not None:
        header.append("y")
    writer.writerow(header)
    for i in range(data.n):
        row = [format(v, ".17g") for v in data.features[i]]
        if data.sensitive is not None:
            code = int(data.sensitive[i])
            row.append(str(data.group_values[code]) if data.group_values else str(code))
        if data.targets is not None:
            row.append(format(data.targets[i], ".17g"))
        writer.writerow(row)
    return buf.getvalue()


def save_csv(data: Dataset, path) -> None:
    atomic_write_text(path, dataset_to_csv(data))


def split_sizes(n: int, fractions) -> Tuple[int, int, int]:
    """Floor of each training/unlabeled share; the remainder goes to the test split."""
    fr = check_fractions(fractions)
    n_train = int(math.floor(n * fr[0] + 1e-9))
    n_unlab = int(math.floor(n * fr[1] + 1e-9))
    return n_train, n_unlab, n - n_train - n_unlab


def split_indices(data: Dataset, fractions=(0.4, 0.4, 0.2), seed=0, max_tries: int = 100):
    """Shuffled index sets ``(train, unlabeled, test)`` with every group in every part."""
    if data.n < 3:
        raise InvalidParameterError(f"need at least 3 rows to split, got {data.n}")
    sizes = split_sizes(data.n, fractions)
    if min(sizes) < 1:
        raise InvalidParameterError(f"split sizes {sizes} leave a part empty")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        perm = rng.permutation(data.n)
        parts = (perm[:sizes[0]], perm[sizes[0]:sizes[0] + sizes[1]], perm[sizes[0] + sizes[1]:])
        if data.sensitive is None or all(
                np.unique(data.sensitive[idx]).size == data.K for idx in parts):
            return parts
    raise DegenerateGroupError(
        f"some group is missing from a split part after {max_tries} reshuffles")


def split(data: Dataset, fractions=(0.4, 0.4, 0.2), seed=0, max_tries: int = 100):
    """``(train, unlabeled, test)`` datasets; the unlabeled part keeps features only."""
    train, unlab, test = split_indices(data, fractions, seed, max_tries)
    return data.subset(train), data.subset(unlab, keep_labels=False), data.subset(test)


SYNTHETIC_THRESHOLDS = (-0.7, 0.0, 0.7)


def generate_synthetic(n: int, seed=0) -> Dataset:
    """Three standard normal features, four groups cut from the first one.

    ``s = 0`` for ``x1 <= -0.7``, ``1`` for ``x1 < 0``, ``2`` for ``x1 < 0.7``
    and ``3`` otherwise; ``y = 4 (x1 + x2 + x3) + x1 + xi`` with standard
    normal noise ``xi``.
    """
    if int(n) != n or n < 1:
        raise InvalidParameterError(f"n must be a positive integer, got {n!r}")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((int(n), 3))
    x1 = X[:, 0]
    s = np.where(x1 <= -0.7, 0, np.where(x1 < 0.0, 1, np.where(x1 < 0.7, 2, 3)))
    y = 4.0 * X.sum(axis=1) + x1 + rng.standard_normal(int(n))
    return Dataset(X, s, y, 4, ("x1", "x2", "x3"), (0, 1, 2, 3))
