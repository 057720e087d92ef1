"""Tests for the glucose partition, classifier, and piecewise pipeline."""

import json

import numpy as np
import pytest

from glucopipe.averaging import fit_feature_averaging
from glucopipe.dataset import Dataset
from glucopipe.forest import ForestParams
from glucopipe.piecewise import (
    classify_measurement,
    compute_centroids,
    load_pipeline,
    partition_by_glucose,
    pipeline_to_dict,
    predict_pipeline,
    predict_with_classes,
    save_pipeline,
    train_pipeline,
    weighted_distance,
)


def _dataset(glucose, features=None, names=None):
    g = np.asarray(glucose, dtype=np.float64)
    if features is None:
        features = np.tile(g[:, None], (1, 2))
    x = np.asarray(features, dtype=np.float64)
    if names is None:
        names = tuple(f"f{j + 1:02d}" for j in range(x.shape[1]))
    return Dataset(x, g, names)


def _training_data(n=60, k=4, seed=0):
    rng = np.random.default_rng(seed)
    glucose = np.clip(8.0 + np.cumsum(rng.standard_normal(n)) * 0.6, 4.0, 12.0)
    features = glucose[:, None] * rng.uniform(0.5, 1.5, k)[None, :] + 0.3 * rng.standard_normal((n, k))
    return _dataset(glucose, features)


PARAMS = ForestParams(n_trees=10, seed=5)


def test_partition_golden_six_rows():
    part = partition_by_glucose(_dataset([4.0, 5.0, 6.0, 7.0, 8.0, 9.0]))
    assert [list(idx) for idx in part.indices] == [[5, 4], [3, 2], [1, 0]]
    assert part.boundaries == (8.0, 6.0)


def test_partition_three_rows():
    part = partition_by_glucose(_dataset([7.0, 5.0, 6.0]))
    assert [list(idx) for idx in part.indices] == [[0], [2], [1]]
    assert part.boundaries == (7.0, 6.0)


def test_partition_ten_rows_sizes():
    part = partition_by_glucose(_dataset(np.arange(1.0, 11.0)))
    assert [len(idx) for idx in part.indices] == [4, 3, 3]
    assert part.boundaries == (7.0, 4.0)


def test_partition_ties_keep_original_order():
    part = partition_by_glucose(_dataset([5.0] * 6))
    assert [list(idx) for idx in part.indices] == [[0, 1], [2, 3], [4, 5]]
    assert part.boundaries == (5.0, 5.0)


def test_partition_needs_three_rows():
    with pytest.raises(ValueError, match="at least 3"):
        partition_by_glucose(_dataset([5.0, 6.0]))


def test_partition_blocks_are_descending_in_glucose():
    rng = np.random.default_rng(1)
    g = rng.uniform(4.0, 12.0, 25)
    part = partition_by_glucose(_dataset(g))
    assert min(g[part.indices[0]]) >= max(g[part.indices[1]])
    assert min(g[part.indices[1]]) >= max(g[part.indices[2]])
    joined = np.concatenate(part.indices)
    assert sorted(joined.tolist()) == list(range(25))


def test_centroid_golden():
    data = _dataset(
        [9.0, 8.0, 6.0, 5.0, 3.0, 2.0],
        features=[[2.0, 0.0], [4.0, 2.0], [1.0, 1.0], [3.0, 3.0], [0.0, 4.0], [2.0, 6.0]],
    )
    part = partition_by_glucose(data)
    centroids = compute_centroids(data.features, part)
    np.testing.assert_allclose(centroids, [[3.0, 1.0], [2.0, 2.0], [1.0, 5.0]])


def test_centroids_require_matrix():
    part = partition_by_glucose(_dataset([1.0, 2.0, 3.0]))
    with pytest.raises(ValueError, match="2-D"):
        compute_centroids(np.ones(3), part)


def test_weighted_distance_goldens():
    assert weighted_distance([1.0, 2.0], [0.0, 2.0], [1.0, 4.0]) == 1.0
    assert weighted_distance([3.0, 1.0], [1.0, 1.0], [1.0, 1.0]) == 2.0
    assert weighted_distance([1.0, 1.0], [0.0, 0.0], [0.0, 0.0]) == 0.0


def test_weighted_distance_validation():
    with pytest.raises(ValueError, match="equal-length"):
        weighted_distance([1.0, 2.0], [0.0], [1.0])
    with pytest.raises(ValueError, match="finite"):
        weighted_distance([np.nan, 2.0], [0.0, 0.0], [1.0, 1.0])
    with pytest.raises(ValueError, match="non-negative"):
        weighted_distance([1.0, 2.0], [0.0, 0.0], [1.0, -1.0])


CENTROIDS = np.array([[0.0, 0.0], [10.0, 0.0], [20.0, 0.0]])


def test_classify_nearest_centroid():
    w = np.ones(2)
    assert classify_measurement([9.0, 0.0], CENTROIDS, w) == 2
    assert classify_measurement([1.0, 0.0], CENTROIDS, w) == 1
    assert classify_measurement([100.0, 0.0], CENTROIDS, w) == 3


def test_classify_tie_goes_to_lowest_class():
    assert classify_measurement([5.0, 0.0], CENTROIDS, np.ones(2)) == 1
    assert classify_measurement([15.0, 0.0], CENTROIDS, np.ones(2)) == 2


def test_classify_invariant_to_weight_scale():
    rng = np.random.default_rng(2)
    for _ in range(20):
        x = rng.uniform(-5.0, 25.0, 2)
        w = rng.uniform(0.1, 2.0, 2)
        assert classify_measurement(x, CENTROIDS, w) == classify_measurement(x, CENTROIDS, w * 37.0)


def test_classify_validates_centroid_shape():
    with pytest.raises(ValueError, match="3 x K"):
        classify_measurement([1.0, 2.0], np.zeros((2, 2)), np.ones(2))


def test_train_pipeline_structure():
    train = _training_data()
    pipe = train_pipeline(train, 5, PARAMS)
    n_avg = train.n - 5 + 1
    assert sum(pipe.subset_sizes) == n_avg
    assert pipe.subset_sizes == (19, 19, 18)
    assert pipe.window_length == 5
    assert pipe.boundaries[0] >= pipe.boundaries[1]
    assert pipe.centroids.shape == (3, train.k)
    assert pipe.importance_weights.shape == (train.k,)
    assert pipe.importance_weights.sum() == pytest.approx(1.0)
    assert pipe.feature_names == train.feature_names
    assert [f.params.seed for f in pipe.forests] == [PARAMS.seed + 1, PARAMS.seed + 2, PARAMS.seed + 3]


def test_train_pipeline_is_deterministic():
    train = _training_data(seed=3)
    test = _training_data(n=20, seed=4)
    a = predict_pipeline(train_pipeline(train, 5, PARAMS), test)
    b = predict_pipeline(train_pipeline(train, 5, PARAMS), test)
    assert np.array_equal(a, b)


def test_stage_errors_name_the_stage():
    with pytest.raises(ValueError, match="stage 'feature averaging'"):
        train_pipeline(_training_data(n=5), 5, PARAMS)
    with pytest.raises(ValueError, match="stage 'glucose partition'"):
        train_pipeline(_training_data(n=6), 5, PARAMS)


def test_minimum_viable_training_set():
    # n - L + 1 == 3: one averaged row per block
    train = _training_data(n=7)
    pipe = train_pipeline(train, 5, PARAMS)
    assert pipe.subset_sizes == (1, 1, 1)
    preds, classes = predict_with_classes(pipe, _training_data(n=10, seed=6))
    assert set(np.unique(classes)).issubset({1, 2, 3})
    assert np.all(np.isfinite(preds))


def test_predictions_in_row_order():
    train = _training_data(seed=7)
    test = _training_data(n=30, seed=8)
    pipe = train_pipeline(train, 5, PARAMS)
    preds = predict_pipeline(pipe, test)
    perm = np.random.default_rng(9).permutation(test.n)
    shuffled = Dataset(test.features[perm], test.glucose[perm], test.feature_names)
    np.testing.assert_array_equal(predict_pipeline(pipe, shuffled), preds[perm])


def test_predictions_bounded_by_block_targets():
    train = _training_data(seed=10)
    test = _training_data(n=40, seed=11)
    pipe = train_pipeline(train, 5, PARAMS)
    _, averaged = fit_feature_averaging(train, 5)
    part = partition_by_glucose(averaged)
    preds, classes = predict_with_classes(pipe, test)
    for t in range(3):
        mask = classes == t + 1
        if not mask.any():
            continue
        block = averaged.glucose[part.indices[t]]
        assert preds[mask].min() >= block.min() - 1e-12
        assert preds[mask].max() <= block.max() + 1e-12


def test_row_on_centroid_classifies_to_it():
    train = _training_data(seed=12)
    pipe = train_pipeline(train, 5, PARAMS)
    q = pipe.averaging.gains.q
    for t in range(3):
        raw = pipe.centroids[t] / q
        probe = _dataset([5.0], features=raw[None, :], names=train.feature_names)
        _, classes = predict_with_classes(pipe, probe)
        assert classes[0] == t + 1


def test_predict_rejects_mismatched_features():
    train = _training_data(seed=13)
    pipe = train_pipeline(train, 5, PARAMS)
    bad_width = _dataset([5.0, 6.0], features=np.ones((2, 5)))
    with pytest.raises(ValueError, match="expects 4 features"):
        predict_pipeline(pipe, bad_width)
    renamed = _dataset([5.0, 6.0], features=np.ones((2, 4)), names=("a", "b", "c", "d"))
    with pytest.raises(ValueError, match="feature names"):
        predict_pipeline(pipe, renamed)


def test_pipeline_without_gains_cannot_predict_or_serialize():
    from dataclasses import replace

    train = _training_data(seed=14)
    pipe = train_pipeline(train, 5, PARAMS)
    pipe.averaging = replace(pipe.averaging, gains=None)
    with pytest.raises(ValueError, match="gains"):
        predict_pipeline(pipe, _training_data(n=10, seed=15))
    with pytest.raises(ValueError, match="gains"):
        pipeline_to_dict(pipe)


def test_save_load_round_trip(tmp_path):
    train = _training_data(seed=16)
    test = _training_data(n=25, seed=17)
    pipe = train_pipeline(train, 5, PARAMS)
    path = tmp_path / "model.json"
    save_pipeline(pipe, path, training={"dataset_rows": train.n})
    loaded, training = load_pipeline(path)
    assert training == {"dataset_rows": train.n}
    preds, classes = predict_with_classes(pipe, test)
    loaded_preds, loaded_classes = predict_with_classes(loaded, test)
    assert np.array_equal(preds, loaded_preds)
    assert np.array_equal(classes, loaded_classes)
    assert loaded.boundaries == pipe.boundaries
    assert loaded.subset_sizes == pipe.subset_sizes


def test_save_is_byte_stable_after_reload(tmp_path):
    train = _training_data(seed=18)
    pipe = train_pipeline(train, 5, PARAMS)
    first = tmp_path / "a.json"
    second = tmp_path / "b.json"
    save_pipeline(pipe, first)
    loaded, _ = load_pipeline(first)
    save_pipeline(loaded, second)
    assert first.read_bytes() == second.read_bytes()


def test_load_rejects_bad_files(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ValueError, match="not a valid model file"):
        load_pipeline(path)
    path.write_text(json.dumps([1, 2, 3]), encoding="utf-8")
    with pytest.raises(ValueError, match="not a valid model file"):
        load_pipeline(path)

    train = _training_data(seed=19)
    payload = pipeline_to_dict(train_pipeline(train, 5, PARAMS))
    for key, value in (("kind", "something-else"), ("schema_version", 99)):
        broken = dict(payload)
        broken[key] = value
        path.write_text(json.dumps(broken), encoding="utf-8")
        with pytest.raises(ValueError, match="unsupported model payload"):
            load_pipeline(path)

    missing = dict(payload)
    del missing["centroids"]
    path.write_text(json.dumps(missing), encoding="utf-8")
    with pytest.raises(ValueError, match="malformed model file"):
        load_pipeline(path)
