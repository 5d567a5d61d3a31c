"""Train/evaluate cells over granularity and known-window sweeps."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baseline import LogGrowthProfile, _growth_from_counts, baseline_predict_counts
from .ingest import BinnedSeries, EventLog, bin_events
from .metrics import EvalPair, ape_array, summarize
from .predictor import TrainConfig, chronological_split, classify_peaks, predict_counts, train_from_series

__all__ = [
    "PRESET_GRANULARITIES",
    "ExperimentConfig",
    "CellResult",
    "SweepResult",
    "evaluate_predictions",
    "run_cell",
    "run_sweep",
    "long_rows",
]

log = logging.getLogger(__name__)

PRESET_GRANULARITIES = {"wechat": (60, 300, 600), "weibo": (30, 60, 120)}
METHODS = ("ad", "baseline")


@dataclass(frozen=True)
class ExperimentConfig:
    granularities: tuple = (300,)
    t_known_seconds: tuple = (600, 1200, 1800, 3600, 7200)
    horizon_seconds: int = 7 * 24 * 3600
    split_fraction: float = 0.75
    method: str = "both"
    tic_variant: str = "standard"
    fit_route: str = "nonlinear_ls"
    weight: str = "none"
    jobs: int = 1

    def __post_init__(self):
        if self.method not in ("ad", "baseline", "both"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.tic_variant not in ("standard", "as_written"):
            raise ValueError(f"unknown TIC variant {self.tic_variant!r}")
        if not 0 < self.split_fraction < 1:
            raise ValueError("split fraction must be in (0, 1)")
        if any(tk >= self.horizon_seconds for tk in self.t_known_seconds):
            raise ValueError("every t_known must be shorter than the horizon")
        if not self.granularities or not self.t_known_seconds:
            raise ValueError("sweep needs at least one granularity and one t_known")

    @property
    def methods(self) -> tuple:
        return METHODS if self.method == "both" else (self.method,)


@dataclass
class CellResult:
    granularity_seconds: int
    t_known_seconds: int
    method: str
    summary: object = None
    message_ids: tuple = ()
    known_sum: np.ndarray = None
    predicted: np.ndarray = None
    real: np.ndarray = None
    real_peak: np.ndarray = None
    model: object = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def peak_split(self) -> dict:
        """MAPE over real-peak and fake-peak messages (NaN for an empty side)."""
        out = {}
        valid = self.real > 0
        ape, _ = ape_array(self.predicted, self.real)
        rp = self.real_peak[valid]
        for name, mask in (("real_peak", rp), ("fake_peak", ~rp)):
            out[f"mape_{name}"] = math.fsum(ape[mask].tolist()) / int(mask.sum()) if mask.any() else math.nan
            out[f"n_{name}"] = int(mask.sum())
        return out


def evaluate_predictions(message_ids, predicted, real):
    pairs = [EvalPair(m, float(p), float(r)) for m, p, r in zip(message_ids, predicted, real)]
    return summarize(pairs)


def run_cell(train_counts, test_counts, test_ids, granularity: int, t_known_seconds: int, config: ExperimentConfig, method: str) -> CellResult:
    cell = CellResult(granularity, t_known_seconds, method)
    try:
        tc = TrainConfig(
            granularity,
            t_known_seconds,
            config.horizon_seconds,
            config.split_fraction,
            config.fit_route,
            config.weight,
        )
        tk, T = tc.t_known_bins, tc.horizon_bins
        real = test_counts[:, :T].sum(axis=1)
        known = test_counts[:, :tk].sum(axis=1)
        if method == "ad":
            train_series = [BinnedSeries(f"{i:09d}", granularity, row) for i, row in enumerate(train_counts)]
            model, _ = train_from_series(train_series, tc)
            _, known_sum, future = predict_counts(model, test_counts)
            predicted = known_sum + future
            cell.model = model
        else:
            if len(train_counts) == 0:
                raise ValueError("baseline needs a nonempty training set")
            profile = LogGrowthProfile(granularity, tk, T, _growth_from_counts(train_counts, tk, T), len(train_counts))
            predicted = baseline_predict_counts(profile, known, T)
            cell.model = profile
        cell.message_ids = tuple(test_ids)
        cell.known_sum = known
        cell.predicted = np.asarray(predicted, dtype=float)
        cell.real = real
        cell.real_peak = classify_peaks(test_counts, tk, T)
        cell.summary = evaluate_predictions(test_ids, cell.predicted, real)
    except Exception as exc:  # recorded per cell; the sweep keeps going
        log.warning("cell g=%s tk=%s %s failed: %s", granularity, t_known_seconds, method, exc)
        cell.error = f"{type(exc).__name__}: {exc}"
    return cell


@dataclass
class SweepResult:
    config: ExperimentConfig
    cells: list = field(default_factory=list)

    @property
    def failures(self) -> list:
        return [
            {"granularity_seconds": c.granularity_seconds, "t_known_seconds": c.t_known_seconds, "method": c.method, "error": c.error}
            for c in self.cells
            if not c.ok
        ]

    def cell(self, granularity: int, t_known_seconds: int, method: str) -> CellResult:
        for c in self.cells:
            if (c.granularity_seconds, c.t_known_seconds, c.method) == (granularity, t_known_seconds, method):
                return c
        raise KeyError((granularity, t_known_seconds, method))


def _granularity_job(args):
    matrix, train_idx, test_idx, test_ids, g, config = args
    train = matrix[train_idx]
    test = matrix[test_idx]
    out = []
    for tk in sorted(config.t_known_seconds):
        for method in config.methods:
            out.append(run_cell(train, test, test_ids, g, tk, config, method))
    return out


def _matrix_for(log_: EventLog, g: int, config: ExperimentConfig):
    if config.horizon_seconds % g:
        raise ValueError(f"horizon {config.horizon_seconds}s is not a multiple of granularity {g}s")
    binned = bin_events(log_, g, config.horizon_seconds // g)
    return binned.matrix()


def run_sweep(log_: EventLog, release_times: dict | None, config: ExperimentConfig, *, base_counts=None, base_granularity=None) -> SweepResult:
    """Evaluate every (granularity, t_known, method) cell on a chronological split.

    ``log_`` must be zero-based.  Alternatively pass the sorted message ids
    as ``log_`` together with ``base_counts``, an ``(N, T0)`` matrix at
    ``base_granularity`` in the same row order; coarser granularities are
    then obtained by summing consecutive bins.
    """
    names = list(log_.names) if isinstance(log_, EventLog) else list(log_)
    if base_counts is None and not isinstance(log_, EventLog):
        raise TypeError("an EventLog is required unless base_counts is given")
    releases = release_times if release_times is not None else {m: 0 for m in names}
    train_ids, test_ids = chronological_split({m: releases[m] for m in names}, config.split_fraction)
    pos = {m: i for i, m in enumerate(names)}
    train_idx = np.array([pos[m] for m in train_ids])
    test_idx = np.array([pos[m] for m in test_ids])

    jobs = []
    result = SweepResult(config)
    for g in sorted(config.granularities):
        try:
            if base_counts is not None:
                if g % base_granularity:
                    raise ValueError(f"granularity {g}s is not a multiple of the base {base_granularity}s")
                k = g // base_granularity
                T = config.horizon_seconds // g
                if config.horizon_seconds % g or base_counts.shape[1] < T * k:
                    raise ValueError(f"base counts do not cover the horizon at {g}s")
                matrix = base_counts[:, : T * k].reshape(len(names), T, k).sum(axis=2)
            else:
                _, matrix = _matrix_for(log_, g, config)
        except Exception as exc:
            for tk in sorted(config.t_known_seconds):
                for method in config.methods:
                    result.cells.append(CellResult(g, tk, method, error=f"{type(exc).__name__}: {exc}"))
            continue
        jobs.append((matrix, train_idx, test_idx, tuple(test_ids), g, config))

    if config.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            for cells in pool.map(_granularity_job, jobs):
                result.cells.extend(cells)
    else:
        for job in jobs:
            result.cells.extend(_granularity_job(job))
    result.cells.sort(key=lambda c: (c.granularity_seconds, c.t_known_seconds, c.method))
    return result


def long_rows(result: SweepResult) -> list[tuple]:
    """Plot-ready rows ``(granularity_seconds, t_known_seconds, method, metric, value)``."""
    rows = []
    for c in result.cells:
        if not c.ok:
            continue
        s = c.summary
        metrics = {
            "mape": s.mape,
            "tic": s.tic(result.config.tic_variant),
            "tic_standard": s.tic_standard,
            "tic_as_written": s.tic_as_written,
            "n_evaluated": s.n_evaluated,
            "n_excluded_zero_real": s.n_excluded_zero_real,
        }
        for level, value in s.ape_percentiles.items():
            metrics[f"ape_p{level}"] = value
        split = c.peak_split()
        metrics.update(split)
        metrics["real_peak_fraction"] = split["n_real_peak"] / max(1, split["n_real_peak"] + split["n_fake_peak"])
        for name in sorted(metrics):
            rows.append((c.granularity_seconds, c.t_known_seconds, c.method, name, metrics[name]))
    return rows
