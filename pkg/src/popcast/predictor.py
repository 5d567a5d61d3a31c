"""Activation-decay popularity prediction.

Training fits a BiHill shape to the average forwarding series of the
training messages, rescales it to unit peak, then calibrates the global
scale ``alpha`` and per-bin floor ``exp(beta)`` by minimizing the training
MAPE.  A message is then predicted from its known window as::

    total = sum(observed counts over bins 1..t_known)
          + sum_{t = t_known+1}^{T} (alpha * q_max * shape(t) + exp(beta))

where ``q_max`` is the largest count seen in the known window.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import minimize

from .fitting import FitReport, fit_bihill, r_index_route
from .ingest import BinnedSeries, EventLog, average, bin_events, normalize, stack
from .model import BiHillParams, Calibration, bihill_eval, normalize_shape

__all__ = [
    "PeakClass",
    "ADModel",
    "PredictionRecord",
    "TrainConfig",
    "TrainResult",
    "q_max_known",
    "predict_message",
    "predict_counts",
    "calibrate",
    "calibration_objective",
    "classify_peak",
    "classify_peaks",
    "chronological_split",
    "train_pipeline",
    "train_from_series",
]

log = logging.getLogger(__name__)

ALPHA_GRID = np.geomspace(0.05, 20.0, 40)
FLOOR_GRID = np.concatenate([[0.0], np.geomspace(1e-3, 1e2, 40)])


class PeakClass(str, Enum):
    REAL = "real_peak"
    FAKE = "fake_peak"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class ADModel:
    shape: BiHillParams
    shape_peak_bin: int
    cal: Calibration
    granularity_seconds: int
    t_known_bins: int
    horizon_bins: int

    def __post_init__(self):
        if not 1 <= self.t_known_bins < self.horizon_bins:
            raise ValueError("need 1 <= t_known_bins < horizon_bins")
        if self.granularity_seconds < 1:
            raise ValueError("granularity must be >= 1 second")

    def future_shape_sum(self) -> float:
        t = np.arange(self.t_known_bins + 1, self.horizon_bins + 1)
        return float(np.sum(bihill_eval(self.shape, t)))

    def with_window(self, t_known_bins: int) -> "ADModel":
        return ADModel(self.shape, self.shape_peak_bin, self.cal, self.granularity_seconds, t_known_bins, self.horizon_bins)


@dataclass(frozen=True)
class PredictionRecord:
    message_id: str
    q_max_observed: int
    known_sum: int
    predicted_future_sum: float
    predicted_total: float
    peak_class: PeakClass = PeakClass.UNKNOWN


def q_max_known(series: BinnedSeries, t_known_bins: int) -> tuple[int, int]:
    """Largest count over bins ``1..t_known_bins`` and its earliest bin."""
    if not 1 <= t_known_bins <= series.horizon_bins:
        raise ValueError("t_known_bins must lie within the series")
    window = series.counts[:t_known_bins]
    idx = int(np.argmax(window))
    return int(window[idx]), idx + 1


def _future_matrix_sum(model: ADModel, q_max: np.ndarray) -> np.ndarray:
    t = np.arange(model.t_known_bins + 1, model.horizon_bins + 1)
    shape = bihill_eval(model.shape, t)
    n_future = model.horizon_bins - model.t_known_bins
    floor = model.cal.floor
    # per-bin terms are alpha*q*shape + floor, all non-negative, so the floor
    # at zero never binds and the sum factorizes
    return model.cal.alpha * q_max * float(np.sum(shape)) + floor * n_future


def predict_counts(model: ADModel, counts: np.ndarray):
    """Vectorized prediction for an ``(N, T)`` matrix with ``T >= t_known_bins``.

    Returns ``(q_max, known_sum, future_sum)`` arrays.
    """
    counts = np.asarray(counts)
    if counts.ndim != 2 or counts.shape[1] < model.t_known_bins:
        raise ValueError("count matrix does not cover the known window")
    window = counts[:, : model.t_known_bins]
    q_max = window.max(axis=1)
    known = window.sum(axis=1)
    return q_max, known, _future_matrix_sum(model, q_max.astype(float))


def predict_message(model: ADModel, series: BinnedSeries, with_truth: bool = False) -> PredictionRecord:
    if series.horizon_bins < model.t_known_bins:
        raise ValueError(
            f"series {series.message_id!r} has {series.horizon_bins} bins, "
            f"model needs {model.t_known_bins}"
        )
    if series.granularity_seconds != model.granularity_seconds:
        raise ValueError("series granularity differs from the model's")
    q_max, _ = q_max_known(series, model.t_known_bins)
    known = int(series.counts[: model.t_known_bins].sum())
    t = np.arange(model.t_known_bins + 1, model.horizon_bins + 1)
    per_bin = np.maximum(model.cal.alpha * q_max * bihill_eval(model.shape, t) + model.cal.floor, 0.0)
    future = float(np.sum(per_bin))
    peak = PeakClass.UNKNOWN
    if with_truth:
        peak = classify_peak(series, model.t_known_bins, model.horizon_bins)
    return PredictionRecord(series.message_id, q_max, known, future, known + future, peak)


def classify_peak(series: BinnedSeries, t_known_bins: int, horizon_bins: int) -> PeakClass:
    """Real peak iff the earliest full-horizon maximum falls in the known window."""
    if series.horizon_bins < horizon_bins:
        raise ValueError("peak classification needs the full horizon")
    t_peak = int(np.argmax(series.counts[:horizon_bins])) + 1
    return PeakClass.REAL if t_peak <= t_known_bins else PeakClass.FAKE


def classify_peaks(counts: np.ndarray, t_known_bins: int, horizon_bins: int) -> np.ndarray:
    """Boolean array, True where the peak is real."""
    return np.argmax(np.asarray(counts)[:, :horizon_bins], axis=1) + 1 <= t_known_bins


def calibration_objective(known, qmax_shape, n_future, real):
    """MAPE as a function of ``(alpha, floor)`` for fixed per-message inputs."""
    known = np.asarray(known, dtype=float)
    qmax_shape = np.asarray(qmax_shape, dtype=float)
    real = np.asarray(real, dtype=float)

    def objective(alpha: float, floor: float) -> float:
        pred = known + alpha * qmax_shape + floor * n_future
        return float(np.mean(np.abs(pred - real) / real))

    return objective


def calibrate(shape: BiHillParams, training, t_known_bins: int, horizon_bins: int) -> Calibration:
    """Choose ``(alpha, beta)`` minimizing training MAPE of predicted totals.

    A fixed grid (alpha log-spaced on [0.05, 20], floor ``exp(beta)`` equal to
    0 or log-spaced on [1e-3, 1e2]) is scanned first; the best cell is then
    refined with Nelder-Mead in log space.  Grid ties go to the smaller alpha,
    then the smaller floor.  Messages with zero real total are skipped.
    """
    series = list(training)
    if not series:
        raise ValueError("calibration needs a nonempty training set")
    _, counts = stack(series)
    return _calibrate_counts(shape, counts, t_known_bins, horizon_bins)


def _calibrate_counts(shape: BiHillParams, counts: np.ndarray, t_known_bins: int, horizon_bins: int) -> Calibration:
    if not 1 <= t_known_bins < horizon_bins <= counts.shape[1]:
        raise ValueError("need 1 <= t_known_bins < horizon_bins <= series length")
    real = counts[:, :horizon_bins].sum(axis=1).astype(float)
    keep = real > 0
    if not keep.any():
        raise ValueError("no training message has a positive real total")
    counts = counts[keep]
    real = real[keep]
    window = counts[:, :t_known_bins]
    known = window.sum(axis=1).astype(float)
    q_max = window.max(axis=1).astype(float)
    t = np.arange(t_known_bins + 1, horizon_bins + 1)
    shape_sum = float(np.sum(bihill_eval(shape, t)))
    n_future = horizon_bins - t_known_bins
    qs = q_max * shape_sum
    objective = calibration_objective(known, qs, n_future, real)

    # grid scan, alpha-major so argmin's first hit is the smallest alpha
    scores = np.empty((ALPHA_GRID.size, FLOOR_GRID.size))
    floors = (FLOOR_GRID * n_future)[:, None]
    for i, alpha in enumerate(ALPHA_GRID):
        pred = known + alpha * qs + floors
        scores[i] = np.mean(np.abs(pred - real) / real, axis=1)
    ia, ifl = np.unravel_index(int(np.argmin(scores)), scores.shape)
    best_alpha, best_floor = float(ALPHA_GRID[ia]), float(FLOOR_GRID[ifl])
    best_score = float(scores[ia, ifl])

    if best_floor > 0:
        def f(x):
            return objective(math.exp(x[0]), math.exp(x[1]))

        x0 = [math.log(best_alpha), math.log(best_floor)]
    else:
        def f(x):
            return objective(math.exp(x[0]), 0.0)

        x0 = [math.log(best_alpha)]
    res = minimize(f, x0, method="Nelder-Mead", options={"fatol": 1e-6, "xatol": 1e-8, "maxiter": 4000})
    if res.fun < best_score:
        best_alpha = math.exp(res.x[0])
        if best_floor > 0:
            best_floor = math.exp(res.x[1])
        best_score = float(res.fun)
    log.debug("calibrated alpha=%g floor=%g mape=%g", best_alpha, best_floor, best_score)
    return Calibration.from_floor(best_alpha, best_floor)


def chronological_split(release_times: dict, fraction: float = 0.75) -> tuple[list, list]:
    """Earliest ``fraction`` of messages (by release, then id) train; the rest test."""
    if not 0 < fraction < 1:
        raise ValueError("split fraction must be in (0, 1)")
    ordered = sorted(release_times, key=lambda m: (release_times[m], m))
    n_train = int(math.floor(fraction * len(ordered)))
    if n_train < 1 or n_train >= len(ordered):
        raise ValueError("split leaves an empty training or test set")
    return ordered[:n_train], ordered[n_train:]


@dataclass(frozen=True)
class TrainConfig:
    granularity_seconds: int
    t_known_seconds: int
    horizon_seconds: int = 7 * 24 * 3600
    split_fraction: float = 0.75
    fit_route: str = "nonlinear_ls"
    weight: str = "none"

    def __post_init__(self):
        g = self.granularity_seconds
        if g < 1:
            raise ValueError("granularity must be >= 1 second")
        for name in ("t_known_seconds", "horizon_seconds"):
            value = getattr(self, name)
            if value < g or value % g:
                raise ValueError(f"{name}={value} must be a positive multiple of the granularity {g}")
        if self.horizon_seconds <= self.t_known_seconds:
            raise ValueError("horizon must exceed the known window")
        if not 0 < self.split_fraction < 1:
            raise ValueError("split fraction must be in (0, 1)")
        if self.fit_route not in ("nonlinear_ls", "r_index_regression"):
            raise ValueError(f"unknown fit route {self.fit_route!r}")

    @property
    def t_known_bins(self) -> int:
        return self.t_known_seconds // self.granularity_seconds

    @property
    def horizon_bins(self) -> int:
        return self.horizon_seconds // self.granularity_seconds


@dataclass(frozen=True)
class TrainResult:
    model: ADModel
    fit: FitReport
    train_ids: tuple
    test_ids: tuple


def _fit_shape(values: np.ndarray, config: TrainConfig) -> FitReport:
    if config.fit_route == "r_index_regression":
        return r_index_route(values)
    return fit_bihill(values, weight=config.weight)


def train_from_series(training, config: TrainConfig) -> tuple[ADModel, FitReport]:
    """STEP 1-2 on already binned training series."""
    series = list(training)
    avg = average(series)
    if avg.horizon_bins < config.horizon_bins:
        raise ValueError("training series shorter than the horizon")
    values = avg.values[: config.horizon_bins]
    report = _fit_shape(values, config)
    shape, peak_bin = normalize_shape(report.params, config.horizon_bins)
    cal = calibrate(shape, series, config.t_known_bins, config.horizon_bins)
    model = ADModel(shape, peak_bin, cal, config.granularity_seconds, config.t_known_bins, config.horizon_bins)
    return model, report


def train_pipeline(events, config: TrainConfig, release_times: dict | None = None) -> TrainResult:
    """Normalize, bin, split chronologically, fit the shape and calibrate.

    ``events`` is an :class:`~popcast.ingest.EventLog` (or iterable of
    events).  With ``release_times`` the raw timestamps are normalized first;
    without them the log must already be zero-based and every message is
    treated as released at 0 in id order.
    """
    if release_times is not None:
        norm = normalize(events, release_times)
        log_ = norm.log
        releases = {m: release_times[m] for m in log_.names}
    else:
        log_ = events if isinstance(events, EventLog) else EventLog.from_events(events)
        releases = {m: 0 for m in log_.names}
    binned = bin_events(log_, config.granularity_seconds, config.horizon_bins)
    train_ids, test_ids = chronological_split(releases, config.split_fraction)
    model, report = train_from_series([binned.series[m] for m in train_ids], config)
    return TrainResult(model, report, tuple(train_ids), tuple(test_ids))
