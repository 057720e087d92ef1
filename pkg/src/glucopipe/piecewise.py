"""Piecewise glucose model: three range-specific forests behind a feature-space classifier.

Training rows (after averaging and normalization) are ranked by glucose and
cut into three contiguous blocks, each fitting its own forest. New rows are
gain-rescaled, assigned to the nearest block centroid under importance
weighted Euclidean distance, and predicted by that block's forest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .averaging import AveragingModel, fit_feature_averaging
from .dataset import Dataset, NormalizationGains, normalize_unit_energy, rescale_test
from .forest import Forest, ForestParams, TreeNodes, feature_importance, fit_forest, predict_forest_batch

_MASK64 = (1 << 64) - 1

MODEL_SCHEMA_VERSION = 1
MODEL_KIND = "glucopipe-piecewise-model"

N_SUBSETS = 3


@dataclass(frozen=True)
class SubsetPartition:
    """Row indices of the three glucose blocks (descending order) plus the block-edge glucose values."""

    indices: tuple[np.ndarray, np.ndarray, np.ndarray]
    boundaries: tuple[float, float]


@dataclass
class PiecewisePipeline:
    averaging: AveragingModel
    importance_weights: np.ndarray
    boundaries: tuple[float, float]
    centroids: np.ndarray
    forests: tuple[Forest, Forest, Forest]
    params: ForestParams
    subset_sizes: tuple[int, int, int]
    feature_names: tuple[str, ...]

    @property
    def window_length(self) -> int:
        return self.averaging.window_length


def partition_by_glucose(data: Dataset) -> SubsetPartition:
    """Split rows into three contiguous blocks of descending glucose.

    A stable sort breaks glucose ties by original row index. When N is not a
    multiple of 3 the earlier blocks take the extra rows (10 -> 4, 3, 3).
    Block 1 holds the highest glucose values.
    """
    if data.n < N_SUBSETS:
        raise ValueError(f"need at least {N_SUBSETS} rows to partition, got {data.n}")
    order = np.argsort(-data.glucose, kind="stable")
    base, rem = divmod(data.n, N_SUBSETS)
    sizes = [base + (1 if t < rem else 0) for t in range(N_SUBSETS)]
    first_cut, second_cut = sizes[0], sizes[0] + sizes[1]
    blocks = (order[:first_cut], order[first_cut:second_cut], order[second_cut:])
    boundaries = (float(data.glucose[blocks[0][-1]]), float(data.glucose[blocks[1][-1]]))
    return SubsetPartition(indices=blocks, boundaries=boundaries)


def compute_centroids(features, partition: SubsetPartition) -> np.ndarray:
    """Per-block feature means, one row per block."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("features must be a 2-D matrix")
    return np.stack([x[idx].mean(axis=0) for idx in partition.indices])


def weighted_distance(x, centroid, weights) -> float:
    """sqrt(sum_k weights[k] * (x[k] - centroid[k])^2)."""
    xv = np.asarray(x, dtype=np.float64)
    cv = np.asarray(centroid, dtype=np.float64)
    wv = np.asarray(weights, dtype=np.float64)
    if not xv.shape == cv.shape == wv.shape or xv.ndim != 1:
        raise ValueError(f"x, centroid, and weights must be equal-length vectors, got {xv.shape}, {cv.shape}, {wv.shape}")
    if not np.all(np.isfinite(xv)) or not np.all(np.isfinite(cv)):
        raise ValueError("vectors must be finite")
    if not np.all(np.isfinite(wv)) or np.any(wv < 0.0):
        raise ValueError("weights must be finite and non-negative")
    return float(np.sqrt(np.sum(wv * (xv - cv) ** 2)))


def classify_measurement(x, centroids, weights) -> int:
    """Class of the nearest centroid (1-based); ties go to the lowest class."""
    c = np.asarray(centroids, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != N_SUBSETS:
        raise ValueError(f"centroids must be a {N_SUBSETS} x K matrix, got {c.shape}")
    distances = [weighted_distance(x, c[t], weights) for t in range(N_SUBSETS)]
    return int(np.argmin(distances)) + 1


def _classify_rows(features: np.ndarray, centroids: np.ndarray, weights: np.ndarray) -> np.ndarray:
    diffs = features[:, None, :] - centroids[None, :, :]
    d2 = (diffs**2 * weights).sum(axis=2)
    return np.argmin(d2, axis=1)


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ValueError as exc:
        raise ValueError(f"stage {name!r}: {exc}") from exc
    except Exception as exc:
        raise RuntimeError(f"stage {name!r}: {exc}") from exc


def train_pipeline(train: Dataset, window_length: int, params: ForestParams) -> PiecewisePipeline:
    """Fit the full estimation pipeline on a training set.

    Order: window averaging, unit-energy normalization, a stage-one forest on
    all averaged rows whose importances become the distance weights, glucose
    partition, per-block centroids, then one forest per block with seeds
    derived as params.seed + block number.
    """
    averaging, averaged = _stage("feature averaging", fit_feature_averaging, train, window_length)
    normalized, gains = _stage(
        "unit-energy normalization", normalize_unit_energy, averaged.features, averaged.feature_names
    )
    averaging = replace(averaging, gains=gains)
    stage_one = _stage("stage-one forest", fit_forest, normalized, averaged.glucose, params)
    weights = feature_importance(stage_one)
    partition = _stage("glucose partition", partition_by_glucose, averaged)
    centroids = _stage("centroids", compute_centroids, normalized, partition)
    forests = []
    for t, idx in enumerate(partition.indices, start=1):
        sub_params = replace(params, seed=(params.seed + t) & _MASK64)
        forests.append(_stage(f"subset forest {t}", fit_forest, normalized[idx], averaged.glucose[idx], sub_params))
    return PiecewisePipeline(
        averaging=averaging,
        importance_weights=weights,
        boundaries=partition.boundaries,
        centroids=centroids,
        forests=tuple(forests),
        params=params,
        subset_sizes=tuple(len(idx) for idx in partition.indices),
        feature_names=averaged.feature_names,
    )


def _check_compatible(pipeline: PiecewisePipeline, data: Dataset) -> None:
    if data.k != len(pipeline.feature_names):
        raise ValueError(f"model expects {len(pipeline.feature_names)} features, dataset has {data.k}")
    if data.feature_names != pipeline.feature_names:
        raise ValueError(
            f"feature names do not match the model: expected {list(pipeline.feature_names)}, got {list(data.feature_names)}"
        )
    if pipeline.averaging.gains is None:
        raise ValueError("pipeline has no normalization gains; it was not produced by train_pipeline")


def predict_with_classes(pipeline: PiecewisePipeline, test: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Predictions plus the 1-based class each row was routed to, in row order."""
    _check_compatible(pipeline, test)
    rescaled = rescale_test(test.features, pipeline.averaging.gains)
    classes = _classify_rows(rescaled, pipeline.centroids, pipeline.importance_weights)
    predictions = np.empty(test.n)
    for t in range(N_SUBSETS):
        mask = classes == t
        if mask.any():
            predictions[mask] = predict_forest_batch(pipeline.forests[t], rescaled[mask])
    return predictions, classes + 1


def predict_pipeline(pipeline: PiecewisePipeline, test: Dataset) -> np.ndarray:
    """Predicted glucose (mmol/L) for each test row, in row order."""
    predictions, _ = predict_with_classes(pipeline, test)
    return predictions


def _forest_to_dict(forest: Forest) -> dict:
    return {
        "seed": forest.params.seed,
        "n_features": forest.n_features,
        "importances": forest.importances.tolist(),
        "trees": [
            {
                "feature": tree.feature.tolist(),
                "threshold": tree.threshold.tolist(),
                "left": tree.left.tolist(),
                "right": tree.right.tolist(),
                "value": tree.value.tolist(),
            }
            for tree in forest.trees
        ],
    }


def _forest_from_dict(entry: dict, base: ForestParams) -> Forest:
    trees = [
        TreeNodes(
            feature=np.array(tree["feature"], dtype=np.int32),
            threshold=np.array(tree["threshold"], dtype=np.float64),
            left=np.array(tree["left"], dtype=np.int32),
            right=np.array(tree["right"], dtype=np.int32),
            value=np.array(tree["value"], dtype=np.float64),
        )
        for tree in entry["trees"]
    ]
    params = replace(base, seed=entry["seed"])
    return Forest(
        trees=trees,
        params=params,
        importances=np.array(entry["importances"], dtype=np.float64),
        n_features=int(entry["n_features"]),
    )


def pipeline_to_dict(pipeline: PiecewisePipeline) -> dict:
    if pipeline.averaging.gains is None:
        raise ValueError("cannot serialize a pipeline without normalization gains")
    p = pipeline.params
    return {
        "schema_version": MODEL_SCHEMA_VERSION,
        "kind": MODEL_KIND,
        "window_length": pipeline.window_length,
        "feature_names": list(pipeline.feature_names),
        "averaging_weights": pipeline.averaging.weights.tolist(),
        "gains": pipeline.averaging.gains.q.tolist(),
        "importance_weights": pipeline.importance_weights.tolist(),
        "glucose_boundaries": list(pipeline.boundaries),
        "centroids": pipeline.centroids.tolist(),
        "subset_sizes": list(pipeline.subset_sizes),
        "forest_params": {
            "n_trees": p.n_trees,
            "max_depth": p.max_depth,
            "min_samples_leaf": p.min_samples_leaf,
            "mtry": p.mtry,
            "bootstrap": p.bootstrap,
            "seed": p.seed,
        },
        "forests": [_forest_to_dict(f) for f in pipeline.forests],
    }


def pipeline_from_dict(payload: dict) -> PiecewisePipeline:
    if payload.get("kind") != MODEL_KIND or payload.get("schema_version") != MODEL_SCHEMA_VERSION:
        raise ValueError(
            f"unsupported model payload: kind={payload.get('kind')!r} schema_version={payload.get('schema_version')!r}"
        )
    fp = payload["forest_params"]
    params = ForestParams(
        n_trees=int(fp["n_trees"]),
        max_depth=None if fp["max_depth"] is None else int(fp["max_depth"]),
        min_samples_leaf=int(fp["min_samples_leaf"]),
        mtry=None if fp["mtry"] is None else int(fp["mtry"]),
        bootstrap=bool(fp["bootstrap"]),
        seed=int(fp["seed"]),
    )
    averaging = AveragingModel(
        window_length=int(payload["window_length"]),
        weights=np.array(payload["averaging_weights"], dtype=np.float64),
        gains=NormalizationGains(np.array(payload["gains"], dtype=np.float64)),
    )
    forests = tuple(_forest_from_dict(entry, params) for entry in payload["forests"])
    if len(forests) != N_SUBSETS:
        raise ValueError(f"model file must hold {N_SUBSETS} forests, found {len(forests)}")
    return PiecewisePipeline(
        averaging=averaging,
        importance_weights=np.array(payload["importance_weights"], dtype=np.float64),
        boundaries=tuple(float(b) for b in payload["glucose_boundaries"]),
        centroids=np.array(payload["centroids"], dtype=np.float64),
        forests=forests,
        params=params,
        subset_sizes=tuple(int(s) for s in payload["subset_sizes"]),
        feature_names=tuple(payload["feature_names"]),
    )


def save_pipeline(pipeline: PiecewisePipeline, path, training: dict | None = None) -> None:
    """Write the model as a single self-describing JSON file.

    The optional training block records context (such as the split settings)
    needed to reproduce an evaluation; it does not affect predictions.
    """
    payload = pipeline_to_dict(pipeline)
    if training is not None:
        payload["training"] = training
    text = json.dumps(payload, separators=(",", ":"))
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_pipeline(path) -> tuple[PiecewisePipeline, dict | None]:
    """Read a model file back; returns the pipeline and its training block, if any."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not a valid model file: {exc}") from exc
    if not isinstance(payload, dict):
        raise ValueError(f"{path}: not a valid model file")
    try:
        pipeline = pipeline_from_dict(payload)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: malformed model file: {exc}") from exc
    return pipeline, payload.get("training")
