"""Synthetic measurement generator for exercising the full pipeline.

Produces a glucose series that wanders smoothly across the configured range
with realistic measurement-to-measurement jitter, plus feature columns that
track glucose linearly under additive noise and a shared slow sinusoidal
drift artifact. The drift gives the window-averaging stage structured noise
it can actually suppress; the remaining columns are pure noise.

The additive noise on informative columns is not plain white noise. Its
backbone is a slowly wandering first-order autoregressive process (think
perfusion and temperature moving the sensor baseline over minutes), and on
top of that each column suffers artifact episodes: stretches of consecutive
samples whose noise is magnified many-fold (motion, contact pressure).
Episodes are far more likely at the hypoglycemic end of the range, where
optical signal quality is worst. The mixture is rescaled so the marginal
noise power still equals noise_sd squared.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset

_MASK64 = (1 << 64) - 1

# samples per drift cycle; slow relative to the default window length
_DRIFT_PERIOD = 75.0

# relative weight of per-sample jitter against the slow walk when ordering
# the glucose draws
_JITTER_RATIO = 2.5

# lag-one autocorrelation of the noise backbone; high enough that the noise
# barely moves within one averaging window
_NOISE_PERSISTENCE = 0.97

# consecutive samples covered by one artifact episode draw
_BURST_SPAN = 10

# noise magnification inside an artifact episode
_BURST_SCALE = 12.0

# episode probability at the bottom and top of the glucose range; sensor
# artifacts concentrate where the optical signal is weakest
_BURST_P_LOW = 0.30
_BURST_P_HIGH = 0.02


@dataclass(frozen=True)
class SynthConfig:
    n: int = 600
    k: int = 10
    informative: int = 4
    noise_sd: float = 0.5
    glucose_low: float = 4.0
    glucose_high: float = 12.0
    drift_amp: float = 0.3
    seed: int = 7

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not 0 <= self.informative <= self.k:
            raise ValueError(f"informative must be in [0, {self.k}], got {self.informative}")
        if self.noise_sd < 0.0:
            raise ValueError(f"noise_sd must be >= 0, got {self.noise_sd}")
        if self.drift_amp < 0.0:
            raise ValueError(f"drift_amp must be >= 0, got {self.drift_amp}")
        if not 0.0 < self.glucose_low < self.glucose_high:
            raise ValueError(
                f"glucose range must satisfy 0 < low < high, got ({self.glucose_low}, {self.glucose_high})"
            )
        if not 0 <= self.seed <= _MASK64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {self.seed}")


def _ranks(values: np.ndarray) -> np.ndarray:
    return np.argsort(np.argsort(values, kind="stable"), kind="stable")


def generate_synthetic_dataset(config: SynthConfig) -> Dataset:
    """Deterministic synthetic dataset for a given config and seed."""
    rng = np.random.default_rng(config.seed)
    n, k = config.n, config.k

    # glucose: uniform draws over the range, ordered along a smooth random
    # walk blended with per-sample jitter so consecutive measurements are
    # related but not locked together
    levels = np.sort(rng.uniform(config.glucose_low, config.glucose_high, n))
    walk = np.cumsum(rng.standard_normal(n))
    if n > 1:
        walk = (walk - walk.mean()) / max(float(walk.std()), 1e-12)
    jitter = rng.standard_normal(n) * _JITTER_RATIO
    glucose = levels[_ranks(walk + jitter)]

    phase = rng.uniform(0.0, 2.0 * np.pi)
    drift = np.sin(2.0 * np.pi * np.arange(n) / _DRIFT_PERIOD + phase)

    # per-row episode probability, highest at the hypoglycemic end; the
    # noise mixture is rescaled so its marginal variance is exactly one
    span = config.glucose_high - config.glucose_low
    frac = (glucose - config.glucose_low) / span
    burst_p = _BURST_P_LOW + (_BURST_P_HIGH - _BURST_P_LOW) * frac
    p_mean = float(burst_p.mean())
    burst_norm = np.sqrt(1.0 - p_mean + p_mean * _BURST_SCALE * _BURST_SCALE)
    n_blocks = (n + _BURST_SPAN - 1) // _BURST_SPAN
    block_of_row = np.arange(n) // _BURST_SPAN
    ar_step = np.sqrt(1.0 - _NOISE_PERSISTENCE * _NOISE_PERSISTENCE)

    # informative columns are affine in glucose, centered on the range
    # midpoint so every column is mean-free; a constant component would let
    # the averaging stage rescale it toward the glucose mean, which the raw
    # test-time features could never match
    features = np.empty((n, k))
    mid = 0.5 * (config.glucose_low + config.glucose_high)
    for j in range(config.informative):
        slope = rng.uniform(0.5, 1.5)
        shocks = rng.standard_normal(n)
        noise = np.empty(n)
        noise[0] = shocks[0]
        for t in range(1, n):
            noise[t] = _NOISE_PERSISTENCE * noise[t - 1] + ar_step * shocks[t]
        episode_draw = rng.random(n_blocks)
        burst = np.where(episode_draw[block_of_row] < burst_p, _BURST_SCALE, 1.0)
        noise = noise * burst / burst_norm
        features[:, j] = slope * (glucose - mid) + config.drift_amp * drift + config.noise_sd * noise
    for j in range(config.informative, k):
        spread = rng.uniform(0.5, 1.5)
        features[:, j] = spread * rng.standard_normal(n)

    names = tuple(f"f{j + 1:02d}" for j in range(k))
    return Dataset(features, glucose, names)
