"""Error metrics and Clarke grid zoning tests.

Golden values are hand-derived from the metric definitions; grid
properties are checked exhaustively on a dense lattice.
"""

import numpy as np
import pytest

from glucopipe.metrics import (
    MMOL_TO_MGDL,
    ZONES,
    compute_metrics,
    ega_report,
    ega_zone,
    mmol_to_mgdl,
)


def test_metrics_golden_pair():
    # refs (5, 10), preds (6, 9): errors +1, -1
    # MAE = 1, RMSE = sqrt((1+1)/2) = 1, MARD = mean(100/5, 100/10) = 15
    # every step is exact in binary floating point, so compare exactly
    rep = compute_metrics(np.array([5.0, 10.0]), np.array([6.0, 9.0]))
    assert rep.mae == 1.0
    assert rep.rmse == 1.0
    assert rep.mard_percent == 15.0
    assert rep.sd_abs_err == 0.0


def test_metrics_perfect_prediction():
    refs = np.array([4.2, 7.5, 9.1, 11.0])
    rep = compute_metrics(refs, refs.copy())
    assert rep.mae == 0.0
    assert rep.rmse == 0.0
    assert rep.mard_percent == 0.0
    assert rep.sd_abs_err == 0.0
    assert rep.sd_signed_err == 0.0
    assert rep.pearson_r == pytest.approx(1.0, abs=1e-12)


def test_metrics_anticorrelated_pair():
    rep = compute_metrics(np.array([5.0, 10.0]), np.array([10.0, 5.0]))
    assert rep.pearson_r == pytest.approx(-1.0, abs=1e-12)


def test_pearson_undefined_on_constant_side():
    refs = np.array([5.0, 5.0, 5.0])
    preds = np.array([4.0, 5.0, 6.0])
    assert compute_metrics(refs, preds).pearson_r is None
    assert compute_metrics(preds, refs).pearson_r is None
    # other metrics still computed
    rep = compute_metrics(refs, preds)
    assert rep.mae == pytest.approx(2.0 / 3.0)


def test_sd_is_population_of_absolute_errors():
    refs = np.array([5.0, 5.0, 5.0, 5.0])
    preds = np.array([6.0, 4.0, 8.0, 2.0])
    # |e| = (1, 1, 3, 3), mean 2, population var = 1
    rep = compute_metrics(refs, preds)
    assert rep.mae == pytest.approx(2.0)
    assert rep.sd_abs_err == pytest.approx(1.0)
    # signed errors (1, -1, 3, -3): mean 0, population sd sqrt(5)
    assert rep.sd_signed_err == pytest.approx(np.sqrt(5.0))


def test_rmse_at_least_mae_random_pairs():
    rng = np.random.default_rng(42)
    for _ in range(1000):
        n = int(rng.integers(2, 40))
        refs = rng.uniform(1.0, 20.0, n)
        preds = refs + rng.normal(0.0, 2.0, n)
        rep = compute_metrics(refs, preds)
        assert rep.rmse >= rep.mae - 1e-12


def test_metrics_invariant_under_joint_permutation():
    rng = np.random.default_rng(3)
    refs = rng.uniform(2.0, 18.0, 25)
    preds = refs + rng.normal(0.0, 1.0, 25)
    perm = rng.permutation(25)
    a = compute_metrics(refs, preds)
    b = compute_metrics(refs[perm], preds[perm])
    assert a.mae == pytest.approx(b.mae)
    assert a.rmse == pytest.approx(b.rmse)
    assert a.mard_percent == pytest.approx(b.mard_percent)
    assert a.pearson_r == pytest.approx(b.pearson_r)


def test_metrics_input_validation():
    with pytest.raises(ValueError):
        compute_metrics(np.array([5.0]), np.array([5.0]))
    with pytest.raises(ValueError):
        compute_metrics(np.array([5.0, 6.0]), np.array([5.0]))
    with pytest.raises(ValueError):
        compute_metrics(np.array([0.0, 6.0]), np.array([5.0, 5.0]))
    with pytest.raises(ValueError):
        compute_metrics(np.array([np.nan, 6.0]), np.array([5.0, 5.0]))


def test_unit_conversion():
    assert mmol_to_mgdl(0.0) == 0.0
    assert mmol_to_mgdl(10.0) == pytest.approx(180.16)
    assert mmol_to_mgdl(5.0) == pytest.approx(90.08)
    assert MMOL_TO_MGDL == pytest.approx(18.016)


def test_clarke_zone_goldens():
    assert ega_zone(100.0, 100.0) == "A"
    assert ega_zone(200.0, 60.0) == "E"
    assert ega_zone(100.0, 215.0) == "C"
    assert ega_zone(250.0, 150.0) == "D"
    assert ega_zone(100.0, 135.0) == "B"


def test_clarke_zone_rule_boundaries():
    # both hypoglycemic readings agree clinically
    assert ega_zone(55.0, 60.0) == "A"
    # 20 percent band edge is inclusive
    assert ega_zone(100.0, 120.0) == "A"
    assert ega_zone(100.0, 80.0) == "A"
    # low reference with normal prediction
    assert ega_zone(50.0, 120.0) == "D"
    # low reference, dangerously high prediction
    assert ega_zone(60.0, 200.0) == "E"


def test_clarke_zone_range_validation():
    with pytest.raises(ValueError):
        ega_zone(0.0, 100.0)
    with pytest.raises(ValueError):
        ega_zone(100.0, 1000.0)
    with pytest.raises(ValueError):
        ega_zone(-5.0, 100.0)


def test_ega_report_identical_values_all_zone_a():
    refs = np.array([4.0, 6.0, 9.0, 11.5])
    rep = ega_report(refs, refs.copy())
    assert rep.percent["A"] == pytest.approx(100.0)
    assert rep.counts["A"] == 4
    assert sum(rep.counts.values()) == 4


def test_ega_report_five_golden_pairs_tally():
    refs_mgdl = np.array([100.0, 200.0, 100.0, 250.0, 100.0])
    preds_mgdl = np.array([100.0, 60.0, 215.0, 150.0, 135.0])
    rep = ega_report(refs_mgdl / MMOL_TO_MGDL, preds_mgdl / MMOL_TO_MGDL)
    assert rep.counts == {"A": 1, "B": 1, "C": 1, "D": 1, "E": 1}
    for z in ZONES:
        assert rep.percent[z] == pytest.approx(20.0)
    assert sum(rep.percent.values()) == pytest.approx(100.0, abs=1e-9)


def test_zone_totality_on_dense_grid():
    """Every (ref, pred) point on a 0.5 mg/dL lattice lands in exactly one zone."""
    vals = np.arange(1.5, 600.0, 0.5)
    total = {z: 0 for z in ZONES}
    n_pairs = 0
    for chunk in np.array_split(vals, 12):
        refs = np.repeat(chunk, vals.size)
        preds = np.tile(vals, chunk.size)
        rep = ega_report(refs / MMOL_TO_MGDL, preds / MMOL_TO_MGDL)
        for z in ZONES:
            total[z] += rep.counts[z]
        n_pairs += refs.size
        assert sum(rep.percent.values()) == pytest.approx(100.0, abs=1e-9)
    assert n_pairs == vals.size * vals.size
    assert sum(total.values()) == n_pairs
