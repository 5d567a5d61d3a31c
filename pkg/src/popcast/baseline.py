"""Log-linear early-popularity baseline.

The growth from an early cumulative count to a later one is modelled as a
shared multiplicative factor: ``ln N(t2) = ln N(t1) + growth(t1, t2)``.  The
growth is estimated as the training mean of the add-one-smoothed log ratio
of cumulative counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ingest import BinnedSeries, stack

__all__ = ["LogGrowthProfile", "fit_baseline", "baseline_predict", "baseline_predict_counts"]


@dataclass(frozen=True)
class LogGrowthProfile:
    granularity_seconds: int
    t1_bins: int
    horizon_bins: int
    # index i holds the mean log growth from t1 to t1 + i
    growth: np.ndarray
    n_train: int

    def __post_init__(self):
        growth = np.array(self.growth, dtype=float)
        if growth.size != self.horizon_bins - self.t1_bins + 1:
            raise ValueError("growth profile length must be horizon_bins - t1_bins + 1")
        if not np.all(np.isfinite(growth)):
            raise ValueError("growth profile must be finite")
        growth.setflags(write=False)
        object.__setattr__(self, "growth", growth)

    @property
    def cumulative_log_growth(self) -> dict:
        return {self.t1_bins + i: float(v) for i, v in enumerate(self.growth)}

    def at(self, t2_bins: int) -> float:
        if not self.t1_bins <= t2_bins <= self.horizon_bins:
            raise ValueError(
                f"t2={t2_bins} outside profile domain [{self.t1_bins}, {self.horizon_bins}]"
            )
        return float(self.growth[t2_bins - self.t1_bins])


def fit_baseline(training, t1_bins: int, horizon_bins: int) -> LogGrowthProfile:
    """Mean smoothed log growth ``ln((N(t2)+1)/(N(t1)+1))`` for every ``t2`` in ``[t1, horizon]``."""
    series = list(training)
    if not series:
        raise ValueError("baseline needs a nonempty training set")
    _, counts = stack(series)
    if not 1 <= t1_bins < horizon_bins <= counts.shape[1]:
        raise ValueError("need 1 <= t1_bins < horizon_bins <= series length")
    growth = _growth_from_counts(counts, t1_bins, horizon_bins)
    return LogGrowthProfile(series[0].granularity_seconds, t1_bins, horizon_bins, growth, len(series))


def _growth_from_counts(counts: np.ndarray, t1_bins: int, horizon_bins: int) -> np.ndarray:
    cumulative = np.cumsum(counts[:, :horizon_bins], axis=1, dtype=np.int64)
    log_cum = np.log1p(cumulative[:, t1_bins - 1 :].astype(float))
    return (log_cum - log_cum[:, :1]).mean(axis=0)


def baseline_predict_counts(profile: LogGrowthProfile, known_cumulative, t2_bins: int):
    """Vectorized prediction from cumulative counts at ``t1``."""
    n1 = np.asarray(known_cumulative, dtype=float)
    pred = np.expm1(np.log1p(n1) + profile.at(t2_bins))
    return np.maximum(pred, n1)


def baseline_predict(profile: LogGrowthProfile, series: BinnedSeries, t2_bins: int) -> float:
    """Predicted cumulative count at ``t2_bins`` from the count observed through ``t1``."""
    if series.horizon_bins < profile.t1_bins:
        raise ValueError("series shorter than the baseline reference window")
    n1 = int(series.counts[: profile.t1_bins].sum())
    growth = profile.at(t2_bins)
    return max(math.exp(math.log(n1 + 1) + growth) - 1.0, float(n1))
