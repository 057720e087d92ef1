"""Clinical accuracy indicators and Clarke error grid zoning."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MMOL_TO_MGDL = 18.016

ZONES = ("A", "B", "C", "D", "E")

# D-zone corner where the pred >= 1.2 * ref edge meets the pred = 70 line
_D_CORNER = 175.0 / 3.0


@dataclass(frozen=True)
class MetricsReport:
    """Agreement indicators between reference and predicted glucose (mmol/L).

    pearson_r is None when either side has zero variance. sd_abs_err is the
    population standard deviation of |error| (the spread quoted alongside
    mae); sd_signed_err is the population standard deviation of the signed
    errors, included for completeness.
    """

    pearson_r: float | None
    mae: float
    sd_abs_err: float
    rmse: float
    mard_percent: float
    sd_signed_err: float

    def to_dict(self) -> dict:
        return {
            "r": self.pearson_r,
            "mae": self.mae,
            "sd": self.sd_abs_err,
            "rmse": self.rmse,
            "mard": self.mard_percent,
            "sd_signed": self.sd_signed_err,
        }


@dataclass(frozen=True)
class EgaReport:
    """Clarke error grid tallies: absolute counts and percentages per zone."""

    counts: dict
    percent: dict
    n: int

    def to_dict(self) -> dict:
        return {"counts": dict(self.counts), "percent": dict(self.percent)}


def _as_pair(references, predictions) -> tuple[np.ndarray, np.ndarray]:
    refs = np.asarray(references, dtype=np.float64)
    preds = np.asarray(predictions, dtype=np.float64)
    if refs.ndim != 1 or preds.ndim != 1 or refs.shape != preds.shape:
        raise ValueError(f"references and predictions must be equal-length vectors, got {refs.shape} and {preds.shape}")
    if not (np.all(np.isfinite(refs)) and np.all(np.isfinite(preds))):
        raise ValueError("references and predictions must be finite")
    return refs, preds


def compute_metrics(references, predictions) -> MetricsReport:
    """Pearson R, MAE, error spread, RMSE, and MARD for paired values."""
    refs, preds = _as_pair(references, predictions)
    if refs.shape[0] < 2:
        raise ValueError("need at least 2 pairs")
    if np.any(refs <= 0.0):
        raise ValueError("reference glucose must be strictly positive")
    errors = preds - refs
    abs_errors = np.abs(errors)
    mae = float(np.mean(abs_errors))
    rmse = float(np.sqrt(np.mean(errors**2)))
    # percent per point before averaging: keeps round-number cases exact
    mard = float(np.mean(100.0 * abs_errors / refs))
    sd_abs = float(np.sqrt(np.mean((abs_errors - mae) ** 2)))
    sd_signed = float(np.sqrt(np.mean((errors - np.mean(errors)) ** 2)))
    ref_dev = refs - refs.mean()
    pred_dev = preds - preds.mean()
    denom = float(np.sqrt(np.sum(ref_dev**2) * np.sum(pred_dev**2)))
    pearson = float(np.sum(ref_dev * pred_dev) / denom) if denom > 0.0 else None
    return MetricsReport(
        pearson_r=pearson,
        mae=mae,
        sd_abs_err=sd_abs,
        rmse=rmse,
        mard_percent=mard,
        sd_signed_err=sd_signed,
    )


def mmol_to_mgdl(value):
    """Convert glucose from mmol/L to mg/dL."""
    return value * MMOL_TO_MGDL


def _zone_codes(refs: np.ndarray, preds: np.ndarray) -> np.ndarray:
    """Zone index (0..4 for A..E) per pair, applying the rules in priority order A, E, C, D, else B."""
    in_a = ((refs <= 70.0) & (preds <= 70.0)) | ((0.8 * refs <= preds) & (preds <= 1.2 * refs))
    in_e = ((refs >= 180.0) & (preds <= 70.0)) | ((refs <= 70.0) & (preds >= 180.0))
    in_c = ((70.0 <= refs) & (refs <= 290.0) & (preds >= refs + 110.0)) | (
        (130.0 <= refs) & (refs <= 180.0) & (preds <= (7.0 / 5.0) * refs - 182.0)
    )
    in_d = (
        ((refs >= 240.0) & (70.0 <= preds) & (preds <= 180.0))
        | ((refs <= _D_CORNER) & (70.0 <= preds) & (preds <= 180.0))
        | ((_D_CORNER <= refs) & (refs <= 70.0) & (preds >= (6.0 / 5.0) * refs))
    )
    return np.select([in_a, in_e, in_c, in_d], [0, 4, 2, 3], default=1)


def _check_mgdl_range(values: np.ndarray, label: str) -> None:
    if np.any(values <= 0.0) or np.any(values >= 1000.0):
        bad = values[(values <= 0.0) | (values >= 1000.0)][0]
        raise ValueError(f"{label} must lie in (0, 1000) mg/dL, got {bad}")


def ega_zone(ref_mgdl: float, pred_mgdl: float) -> str:
    """Clarke error grid zone letter for a single (reference, prediction) pair in mg/dL."""
    refs = np.asarray([ref_mgdl], dtype=np.float64)
    preds = np.asarray([pred_mgdl], dtype=np.float64)
    if not (np.all(np.isfinite(refs)) and np.all(np.isfinite(preds))):
        raise ValueError("values must be finite")
    _check_mgdl_range(refs, "reference")
    _check_mgdl_range(preds, "prediction")
    return ZONES[int(_zone_codes(refs, preds)[0])]


def ega_report(references_mmol, predictions_mmol) -> EgaReport:
    """Zone tallies for paired mmol/L values (converted to mg/dL internally)."""
    refs, preds = _as_pair(references_mmol, predictions_mmol)
    if refs.shape[0] < 1:
        raise ValueError("need at least one pair")
    refs_mgdl = mmol_to_mgdl(refs)
    preds_mgdl = mmol_to_mgdl(preds)
    _check_mgdl_range(refs_mgdl, "reference")
    _check_mgdl_range(preds_mgdl, "prediction")
    codes = _zone_codes(refs_mgdl, preds_mgdl)
    n = refs.shape[0]
    counts = {zone: int(np.count_nonzero(codes == i)) for i, zone in enumerate(ZONES)}
    percent = {zone: counts[zone] / n * 100.0 for zone in ZONES}
    return EgaReport(counts=counts, percent=percent, n=n)
