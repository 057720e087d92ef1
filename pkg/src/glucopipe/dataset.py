"""Dataset container, CSV I/O, train/test splitting, and energy normalization."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

GLUCOSE_COLUMN = "glucose_mmol_l"

_MASK64 = (1 << 64) - 1


def _format_number(value: float) -> str:
    """Shortest decimal with at most 9 significant digits that round-trips.

    Falls back to 9 significant digits when no shorter form parses back to
    the exact same double. Re-formatting the parsed value reproduces the
    same text, so saved files are stable under load/save cycles.
    """
    for digits in range(1, 10):
        text = f"{value:.{digits}g}"
        if float(text) == value:
            return text
    return f"{value:.9g}"


class _SplitMix64:
    """SplitMix64 64-bit generator (Steele, Lea, Flood 2014).

    Pure integer arithmetic, so the stream is identical on every platform
    and Python version.
    """

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, bound: int) -> int:
        # rejection sampling keeps the bounded draw unbiased
        span = _MASK64 + 1
        limit = span - (span % bound)
        while True:
            z = self.next_u64()
            if z < limit:
                return z % bound


def _shuffled_indices(n: int, seed: int) -> list[int]:
    """Fisher-Yates shuffle of range(n) driven by SplitMix64."""
    rng = _SplitMix64(seed)
    order = list(range(n))
    for i in range(n - 1, 0, -1):
        j = rng.below(i + 1)
        order[i], order[j] = order[j], order[i]
    return order


@dataclass(frozen=True)
class SplitConfig:
    """Train/test split settings: train fraction in (0, 1) and a 64-bit seed."""

    train_fraction: float = 0.75
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        if not 0 <= self.seed <= _MASK64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {self.seed}")


@dataclass(frozen=True)
class NormalizationGains:
    """Per-feature multiplicative gains produced by unit-energy normalization."""

    q: np.ndarray

    def __post_init__(self) -> None:
        q = np.ascontiguousarray(np.asarray(self.q, dtype=np.float64))
        if q.ndim != 1:
            raise ValueError("gains must be a 1-D vector")
        if not np.all(np.isfinite(q)) or not np.all(q > 0.0):
            raise ValueError("gains must be finite and strictly positive")
        object.__setattr__(self, "q", q)


@dataclass(frozen=True)
class Dataset:
    """N measurement rows: a float feature matrix plus a glucose vector (mmol/L).

    Every entry must be finite and glucose strictly positive. Treated as
    immutable after construction.
    """

    features: np.ndarray
    glucose: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self) -> None:
        features = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        glucose = np.ascontiguousarray(np.asarray(self.glucose, dtype=np.float64))
        if features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if glucose.ndim != 1:
            raise ValueError("glucose must be a 1-D vector")
        n, k = features.shape
        if n < 1:
            raise ValueError("dataset needs at least one row")
        if k < 1:
            raise ValueError("dataset needs at least one feature column")
        if glucose.shape[0] != n:
            raise ValueError(f"glucose length {glucose.shape[0]} does not match {n} feature rows")
        names = tuple(str(name) for name in self.feature_names)
        if len(names) != k:
            raise ValueError(f"{len(names)} feature names for {k} feature columns")
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")
        if GLUCOSE_COLUMN in names:
            raise ValueError(f"{GLUCOSE_COLUMN!r} is reserved for the glucose column")
        if not np.all(np.isfinite(features)):
            raise ValueError("features contain non-finite values")
        if not np.all(np.isfinite(glucose)):
            raise ValueError("glucose contains non-finite values")
        if not np.all(glucose > 0.0):
            raise ValueError("glucose values must be strictly positive")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "glucose", glucose)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def k(self) -> int:
        return self.features.shape[1]

    def take(self, rows) -> "Dataset":
        """New Dataset holding the given rows, in the given order."""
        idx = np.asarray(rows, dtype=np.intp)
        return Dataset(self.features[idx], self.glucose[idx], self.feature_names)


def load_csv(path) -> Dataset:
    """Read a dataset from a UTF-8 comma-separated file.

    The header row names K feature columns followed by a final
    ``glucose_mmol_l`` column. Malformed content raises ValueError with the
    offending line number.
    """
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a header row") from None
        header = [cell.strip() for cell in header]
        if len(header) < 2:
            raise ValueError(f"{path}: line 1: header needs at least one feature column and {GLUCOSE_COLUMN}")
        if header[-1] != GLUCOSE_COLUMN:
            raise ValueError(f"{path}: line 1: last column must be named {GLUCOSE_COLUMN!r}, got {header[-1]!r}")
        names = header[:-1]
        width = len(header)
        feature_rows: list[list[float]] = []
        glucose_values: list[float] = []
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != width:
                raise ValueError(f"{path}: line {line}: expected {width} columns, got {len(row)}")
            values = []
            for name, cell in zip(header, row):
                try:
                    value = float(cell)
                except ValueError:
                    raise ValueError(f"{path}: line {line}: column {name!r} is not numeric: {cell!r}") from None
                if not math.isfinite(value):
                    raise ValueError(f"{path}: line {line}: column {name!r} must be finite, got {cell!r}")
                values.append(value)
            if values[-1] <= 0.0:
                raise ValueError(f"{path}: line {line}: {GLUCOSE_COLUMN} must be strictly positive, got {values[-1]}")
            feature_rows.append(values[:-1])
            glucose_values.append(values[-1])
    if not feature_rows:
        raise ValueError(f"{path}: no data rows after the header")
    return Dataset(np.array(feature_rows), np.array(glucose_values), tuple(names))


def save_csv(data: Dataset, path) -> None:
    """Write a dataset in the canonical CSV form read back by load_csv."""
    for name in data.feature_names:
        if any(ch in name for ch in (",", '"', "\n", "\r")):
            raise ValueError(f"feature name {name!r} cannot be written unquoted")
    path = Path(path)
    lines = [",".join((*data.feature_names, GLUCOSE_COLUMN))]
    for row, glucose in zip(data.features, data.glucose):
        cells = [_format_number(v) for v in row]
        cells.append(_format_number(glucose))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def split_train_test(data: Dataset, config: SplitConfig) -> tuple[Dataset, Dataset]:
    """Split rows into train and test subsets.

    The train size is floor(train_fraction * N + 0.5). Membership comes from
    a Fisher-Yates shuffle seeded through SplitMix64, so the same seed gives
    the same partition everywhere. Both subsets keep the original row order,
    preserving any sequential structure in the data.
    """
    n = data.n
    if n < 4:
        raise ValueError(f"need at least 4 rows to split, got {n}")
    train_size = math.floor(config.train_fraction * n + 0.5)
    order = _shuffled_indices(n, config.seed)
    train_rows = sorted(order[:train_size])
    test_rows = sorted(order[train_size:])
    return data.take(train_rows), data.take(test_rows)


def normalize_unit_energy(features: np.ndarray, feature_names=None) -> tuple[np.ndarray, NormalizationGains]:
    """Scale each column to unit energy (sum of squares 1).

    Returns the normalized matrix and the per-column gains q, where
    q[k] = 1 / sqrt(sum(column_k ** 2)).
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("features must be a 2-D matrix")
    energy = np.einsum("nk,nk->k", x, x)
    if np.any(energy == 0.0):
        k = int(np.argmax(energy == 0.0))
        label = feature_names[k] if feature_names is not None else f"column {k}"
        raise ValueError(f"cannot normalize all-zero feature {label}")
    gains = NormalizationGains(1.0 / np.sqrt(energy))
    return x * gains.q, gains


def rescale_test(features: np.ndarray, gains: NormalizationGains) -> np.ndarray:
    """Apply training gains to new measurement rows: output[m][k] = q[k] * input[m][k]."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("features must be a 2-D matrix")
    if x.shape[1] != gains.q.shape[0]:
        raise ValueError(f"{x.shape[1]} feature columns but {gains.q.shape[0]} gains")
    return x * gains.q
