"""Synthetic cascades with a known activation-decay mean structure.

Each message draws a peak scale ``q_max`` from a log-normal distribution;
its count in base bin ``t`` is Poisson with mean
``q_max * shape(t) + noise_floor``, where ``shape`` is a unit-peak BiHill.
Every count unit becomes one event with a timestamp uniform (whole seconds)
inside its bin.

Randomness comes from one generator per message seeded with
``(rng_seed, message_index)``, so any message can be regenerated alone and
results do not depend on generation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ingest import BinnedSeries, EventLog
from .model import BiHillParams, bihill_eval, normalize_shape

__all__ = ["SynthConfig", "SynthResult", "PRESETS", "preset", "generate", "generate_counts"]

WEEK_SECONDS = 7 * 24 * 3600


@dataclass(frozen=True)
class SynthConfig:
    shape: BiHillParams
    n_messages: int
    horizon_bins: int
    granularity_seconds: int = 60
    log_mean: float = 1.5
    log_sigma: float = 1.2
    noise_floor: float = 0.0
    release_spacing_seconds: int = 60
    rng_seed: int = 0
    id_prefix: str = "m"

    def __post_init__(self):
        if self.n_messages < 1:
            raise ValueError("n_messages must be >= 1")
        if self.horizon_bins < 1 or self.granularity_seconds < 1:
            raise ValueError("horizon_bins and granularity_seconds must be >= 1")
        if self.log_sigma < 0:
            raise ValueError("log_sigma must be >= 0")
        if self.noise_floor < 0:
            raise ValueError("noise_floor must be >= 0")
        if self.release_spacing_seconds < 0:
            raise ValueError("release spacing must be >= 0")

    @property
    def width(self) -> int:
        return len(str(self.n_messages - 1))

    def message_id(self, index: int) -> str:
        return f"{self.id_prefix}{index:0{self.width}d}"

    def unit_shape(self) -> np.ndarray:
        """Unit-peak shape on base bins ``1..horizon_bins``."""
        shape, _ = normalize_shape(self.shape, self.horizon_bins)
        return bihill_eval(shape, np.arange(1, self.horizon_bins + 1))


# Shapes are in base-bin units.  WeChat-like: minute bins, peak close to
# bin 30.  Weibo-like: 10-second bins, peak close to bin 20 (200 s).
PRESETS = {
    "wechat": dict(
        shape=BiHillParams(p_m=1.0, k_a=18.0, h_a=2.5, k_d=50.0, h_d=1.6),
        granularity_seconds=60,
        horizon_bins=WEEK_SECONDS // 60,
        log_mean=1.5,
        log_sigma=1.2,
        noise_floor=0.01,
    ),
    "weibo": dict(
        shape=BiHillParams(p_m=1.0, k_a=12.0, h_a=2.5, k_d=33.0, h_d=1.6),
        granularity_seconds=10,
        horizon_bins=WEEK_SECONDS // 10,
        log_mean=1.5,
        log_sigma=1.2,
        noise_floor=0.002,
    ),
}


def preset(name: str, **overrides) -> SynthConfig:
    try:
        base = dict(PRESETS[name])
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    base.setdefault("n_messages", 1000)
    base.update(overrides)
    return SynthConfig(**base)


@dataclass(frozen=True)
class SynthResult:
    config: SynthConfig
    message_ids: tuple
    release_times: dict
    q_max: np.ndarray
    counts: np.ndarray
    unit_shape: np.ndarray
    log: EventLog | None = field(default=None, repr=False)

    def expected_totals(self) -> np.ndarray:
        return self.q_max * float(np.sum(self.unit_shape)) + self.config.noise_floor * self.config.horizon_bins

    def mean_counts(self, index: int) -> np.ndarray:
        return self.q_max[index] * self.unit_shape + self.config.noise_floor

    def series(self) -> dict:
        g = self.config.granularity_seconds
        return {mid: BinnedSeries(mid, g, self.counts[i]) for i, mid in enumerate(self.message_ids)}


def _draw(config: SynthConfig, index: int, shape: np.ndarray, with_offsets: bool):
    rng = np.random.default_rng([config.rng_seed, index])
    q_max = float(rng.lognormal(config.log_mean, config.log_sigma))
    counts = rng.poisson(q_max * shape + config.noise_floor)
    offsets = None
    if with_offsets:
        offsets = rng.integers(0, config.granularity_seconds, size=int(counts.sum()))
    return q_max, counts, offsets


def _generate(config: SynthConfig, with_events: bool) -> SynthResult:
    shape = config.unit_shape()
    n, T = config.n_messages, config.horizon_bins
    counts = np.empty((n, T), dtype=np.int64)
    q_max = np.empty(n)
    codes = []
    stamps = []
    bin_starts = np.arange(T, dtype=np.int64) * config.granularity_seconds
    for i in range(n):
        q, c, offsets = _draw(config, i, shape, with_events)
        q_max[i] = q
        counts[i] = c
        if with_events and offsets.size:
            stamps.append(np.repeat(bin_starts, c) + offsets)
            codes.append(np.full(offsets.size, i, dtype=np.int64))
    counts.setflags(write=False)
    ids = tuple(config.message_id(i) for i in range(n))
    releases = {mid: i * config.release_spacing_seconds for i, mid in enumerate(ids)}
    log = None
    if with_events:
        ts = np.concatenate(stamps) if stamps else np.zeros(0, dtype=np.int64)
        cd = np.concatenate(codes) if codes else np.zeros(0, dtype=np.int64)
        # per message the timestamps come out bin by bin; sort within bins
        order = np.lexsort((ts, cd))
        log = EventLog(ids, cd[order], ts[order])
    return SynthResult(config, ids, releases, q_max, counts, shape, log)


def generate(config: SynthConfig) -> SynthResult:
    """Draw a synthetic corpus including its zero-based event log."""
    return _generate(config, with_events=True)


def generate_counts(config: SynthConfig) -> SynthResult:
    """Same draws as :func:`generate` but without materializing events.

    The count matrix is identical to the one :func:`generate` produces.
    """
    return _generate(config, with_events=False)
