"""Windowed feature-domain averaging.

Each feature column is unfolded into overlapping windows of length L. A
unit-norm weight vector per feature combines the window entries into a new
series chosen to maximize the squared cosine between that series and the
glucose values aligned with the window ends. The maximization is a rank-one
generalized Rayleigh quotient with a closed-form solution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .dataset import Dataset, NormalizationGains

# relative ridge added to the window Gram matrix before solving
_RIDGE_SCALE = 1e-8


@dataclass(frozen=True)
class WindowMatrix:
    """Overlapping windows of one series: row i holds series[i : i + window_length]."""

    values: np.ndarray
    window_length: int


@dataclass(frozen=True)
class AveragingModel:
    """Per-feature window weights, plus normalization gains once fitted downstream.

    weights has one row per feature; every row has unit 2-norm.
    """

    window_length: int
    weights: np.ndarray
    gains: NormalizationGains | None = None

    def __post_init__(self) -> None:
        if self.window_length < 1:
            raise ValueError(f"window length must be >= 1, got {self.window_length}")
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[1] != self.window_length:
            raise ValueError(
                f"weights must be K x {self.window_length}, got shape {w.shape}"
            )
        if not np.isfinite(w).all():
            raise ValueError("weights must be finite")
        object.__setattr__(self, "weights", w)


def build_window_matrix(series, window_length: int) -> WindowMatrix:
    """Unfold a length-N series into an (N - L + 1) x L matrix of windows."""
    x = np.ascontiguousarray(np.asarray(series, dtype=np.float64))
    if x.ndim != 1:
        raise ValueError("series must be 1-D")
    n = x.shape[0]
    if not 1 <= window_length <= n:
        raise ValueError(f"window length must be in [1, {n}], got {window_length}")
    values = sliding_window_view(x, window_length).copy()
    return WindowMatrix(values, window_length)


def align_glucose(glucose, window_length: int) -> np.ndarray:
    """Glucose values aligned with window ends: entry j is glucose[j + L - 1]."""
    g = np.asarray(glucose, dtype=np.float64)
    if g.ndim != 1:
        raise ValueError("glucose must be 1-D")
    if not 1 <= window_length <= g.shape[0]:
        raise ValueError(f"window length must be in [1, {g.shape[0]}], got {window_length}")
    return g[window_length - 1 :].copy()


def squared_alignment(series, target) -> float:
    """Squared cosine between two vectors; 0.0 when either has zero norm."""
    y = np.asarray(series, dtype=np.float64)
    g = np.asarray(target, dtype=np.float64)
    yy = float(y @ y)
    gg = float(g @ g)
    if yy == 0.0 or gg == 0.0:
        return 0.0
    yg = float(y @ g)
    return yg * yg / (yy * gg)


def solve_averaging_weights(windows: WindowMatrix, aligned_glucose) -> tuple[np.ndarray, float]:
    """Best unit-norm combination of window columns against the aligned target.

    Maximizes q(w) = ((X w) . g)^2 / ||X w||^2 over unit vectors w, where X is
    the window matrix and g the aligned glucose. The maximizer is proportional
    to (X^T X + ridge I)^{-1} X^T g with a small relative ridge for numerical
    stability; the sign is fixed so that (X w) . g >= 0.

    Returns (w, attained quotient). Dividing the quotient by g . g gives the
    squared cosine achieved.
    """
    x = windows.values
    length = windows.window_length
    g = np.asarray(aligned_glucose, dtype=np.float64)
    if g.ndim != 1 or g.shape[0] != x.shape[0]:
        raise ValueError(f"aligned glucose must have {x.shape[0]} entries, got {g.shape}")
    if float(g @ g) == 0.0:
        raise ValueError("aligned glucose has zero norm")

    gram = x.T @ x
    cross = x.T @ g
    ridge = _RIDGE_SCALE * float(np.trace(gram)) / length
    if ridge == 0.0:
        raise ValueError("window matrix is identically zero")
    try:
        direction = np.linalg.solve(gram + ridge * np.eye(length), cross)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"window Gram matrix is numerically singular: {exc}") from exc
    if not np.all(np.isfinite(direction)):
        raise ValueError("window Gram matrix is numerically singular")

    norm = float(np.linalg.norm(direction))
    if norm == 0.0:
        # target orthogonal to every window column: any w scores 0, keep the
        # pass-through weight selecting the aligned raw sample
        w = np.zeros(length)
        w[-1] = 1.0
        return w, 0.0
    w = direction / norm
    combined = x @ w
    if float(combined @ g) < 0.0:
        w = -w
        combined = -combined
    denom = float(combined @ combined)
    if denom == 0.0:
        return w, 0.0
    proj = float(combined @ g)
    return w, proj * proj / denom


def fit_feature_averaging(train: Dataset, window_length: int) -> tuple[AveragingModel, Dataset]:
    """Fit per-feature window weights on a training set.

    Returns the fitted model (gains unset) and the averaged training set:
    N - L + 1 rows of combined features with glucose aligned to window ends.
    """
    if train.n <= window_length:
        raise ValueError(f"need more than window_length={window_length} rows, got {train.n}")
    target = align_glucose(train.glucose, window_length)
    weights = np.empty((train.k, window_length))
    columns = np.empty((train.n - window_length + 1, train.k))
    for k in range(train.k):
        windows = build_window_matrix(train.features[:, k], window_length)
        try:
            w, _ = solve_averaging_weights(windows, target)
        except ValueError as exc:
            raise ValueError(f"feature {train.feature_names[k]!r} (column {k}): {exc}") from exc
        weights[k] = w
        columns[:, k] = windows.values @ w
    model = AveragingModel(window_length=window_length, weights=weights)
    averaged = Dataset(columns, target, train.feature_names)
    return model, averaged
