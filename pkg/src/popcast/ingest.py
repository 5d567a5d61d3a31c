"""Event-log ingestion: release-time normalization, unit-time binning, averaging."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

import numpy as np

__all__ = [
    "ForwardEvent",
    "EventLog",
    "BinnedSeries",
    "AverageSeries",
    "NormalizeResult",
    "BinResult",
    "normalize",
    "bin_events",
    "average",
    "rebin",
    "stack",
]


@dataclass(frozen=True)
class ForwardEvent:
    message_id: str
    timestamp: int

    def __post_init__(self):
        if not self.message_id:
            raise ValueError("message_id must be non-empty")


def _floor_seconds(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError("timestamps must be finite")
    return np.floor(arr).astype(np.int64)


class EventLog:
    """Columnar event log.

    ``names`` is the sorted message universe (it may include messages without
    events), ``codes`` indexes into ``names`` and ``timestamps`` holds integer
    seconds.  Arrays are made read-only.
    """

    __slots__ = ("names", "codes", "timestamps", "_index")

    def __init__(self, names, codes, timestamps):
        names = tuple(names)
        if any(not n for n in names):
            raise ValueError("message ids must be non-empty")
        if list(names) != sorted(set(names)):
            raise ValueError("names must be sorted and unique")
        codes = np.asarray(codes, dtype=np.int64)
        timestamps = _floor_seconds(timestamps)
        if codes.shape != timestamps.shape or codes.ndim != 1:
            raise ValueError("codes and timestamps must be 1-d arrays of equal length")
        if codes.size and (codes.min() < 0 or codes.max() >= len(names)):
            raise ValueError("event code out of range")
        codes.setflags(write=False)
        timestamps.setflags(write=False)
        self.names = names
        self.codes = codes
        self.timestamps = timestamps
        self._index = None

    @classmethod
    def from_records(cls, ids: Iterable[str], timestamps, universe: Iterable[str] = ()) -> "EventLog":
        ids = list(ids)
        names = sorted(set(ids).union(universe))
        lookup = {name: i for i, name in enumerate(names)}
        codes = np.fromiter((lookup[i] for i in ids), dtype=np.int64, count=len(ids))
        return cls(names, codes, timestamps)

    @classmethod
    def from_events(cls, events: Iterable[ForwardEvent], universe: Iterable[str] = ()) -> "EventLog":
        events = list(events)
        return cls.from_records(
            [e.message_id for e in events], [e.timestamp for e in events], universe
        )

    def __len__(self) -> int:
        return int(self.codes.size)

    def __iter__(self) -> Iterator[ForwardEvent]:
        for code, ts in zip(self.codes.tolist(), self.timestamps.tolist()):
            yield ForwardEvent(self.names[code], ts)

    def index_of(self, message_id: str) -> int:
        if self._index is None:
            self._index = {name: i for i, name in enumerate(self.names)}
        return self._index[message_id]

    def subset(self, message_ids: Iterable[str]) -> "EventLog":
        """Restrict to ``message_ids`` (kept even if they have no events)."""
        keep = sorted(set(message_ids))
        present = set(self.names)
        missing = [m for m in keep if m not in present]
        if missing:
            raise KeyError(f"unknown message ids: {missing[:5]}")
        old = np.array([self.index_of(m) for m in keep], dtype=np.int64)
        remap = np.full(len(self.names), -1, dtype=np.int64)
        remap[old] = np.arange(len(keep))
        new_codes = remap[self.codes]
        mask = new_codes >= 0
        return EventLog(keep, new_codes[mask], self.timestamps[mask])

    def canonical_order(self) -> np.ndarray:
        """Permutation sorting events by (message, timestamp), stable."""
        return np.lexsort((self.timestamps, self.codes))


@dataclass(frozen=True)
class NormalizeResult:
    log: EventLog
    dropped_pre_release: int
    rejected: dict = field(default_factory=dict)


def normalize(events, release_times: Mapping[str, float]) -> NormalizeResult:
    """Shift each message's clock so its release is ``t = 0``.

    Messages without a release time are rejected (listed in ``rejected`` with
    a diagnostic); events earlier than their release are dropped and counted.
    Event order within a message is preserved.
    """
    log = events if isinstance(events, EventLog) else EventLog.from_events(events)
    rejected = {}
    release = np.empty(len(log.names), dtype=np.int64)
    known = np.zeros(len(log.names), dtype=bool)
    for i, name in enumerate(log.names):
        if name in release_times:
            value = float(release_times[name])
            if not math.isfinite(value):
                rejected[name] = f"non-finite release time {value!r}"
                continue
            release[i] = math.floor(value)
            known[i] = True
        else:
            rejected[name] = "no release time"
    keep_msg = known[log.codes] if len(log) else np.zeros(0, dtype=bool)
    shifted = log.timestamps - np.where(known, release, 0)[log.codes]
    pre = keep_msg & (shifted < 0)
    keep = keep_msg & ~pre
    names = [n for n, ok in zip(log.names, known) if ok]
    remap = np.cumsum(known) - 1
    out = EventLog(names, remap[log.codes[keep]], shifted[keep])
    return NormalizeResult(out, int(pre.sum()), rejected)


@dataclass(frozen=True)
class BinnedSeries:
    """Per-message forwarding counts; ``counts[i - 1]`` covers ``[(i-1)g, i*g)``."""

    message_id: str
    granularity_seconds: int
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 1 or counts.size < 1:
            raise ValueError("counts must be a nonempty 1-d sequence")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        if self.granularity_seconds < 1:
            raise ValueError("granularity must be >= 1 second")
        if not counts.flags.writeable and counts.dtype == np.int64:
            arr = counts
        else:
            arr = counts.astype(np.int64, copy=True)
            arr.setflags(write=False)
        object.__setattr__(self, "counts", arr)

    @property
    def horizon_bins(self) -> int:
        return int(self.counts.size)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class AverageSeries:
    granularity_seconds: int
    values: np.ndarray
    n_messages: int

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.size < 1:
            raise ValueError("values must be a nonempty 1-d sequence")
        if np.any(values < 0):
            raise ValueError("average values must be non-negative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def horizon_bins(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class BinResult:
    series: dict
    excluded_post_horizon: int

    def matrix(self) -> tuple[list, np.ndarray]:
        return stack(self.series.values())


def bin_events(log: EventLog, granularity_seconds: int, horizon_bins: int) -> BinResult:
    """Count normalized events per message into ``horizon_bins`` half-open bins.

    Every message in ``log.names`` gets a series, including all-zero ones.
    Events at or beyond ``horizon_bins * granularity_seconds`` are excluded
    and tallied.
    """
    g = int(granularity_seconds)
    T = int(horizon_bins)
    if g < 1 or T < 1:
        raise ValueError("granularity and horizon_bins must be >= 1")
    if len(log) and log.timestamps.min() < 0:
        raise ValueError("events must be normalized (timestamps >= 0) before binning")
    idx = log.timestamps // g
    inside = idx < T
    n = len(log.names)
    flat = np.bincount(log.codes[inside] * T + idx[inside], minlength=n * T)
    matrix = flat.reshape(n, T)
    matrix.setflags(write=False)
    series = {
        name: BinnedSeries(name, g, matrix[i]) for i, name in enumerate(log.names)
    }
    return BinResult(series, int((~inside).sum()))


def stack(series: Iterable[BinnedSeries]) -> tuple[list, np.ndarray]:
    """Stack series sorted by message id into an ``(N, T)`` count matrix."""
    ordered = sorted(series, key=lambda s: s.message_id)
    if not ordered:
        raise ValueError("no series to stack")
    T = ordered[0].horizon_bins
    g = ordered[0].granularity_seconds
    for s in ordered:
        if s.horizon_bins != T or s.granularity_seconds != g:
            raise ValueError("series disagree on granularity or horizon")
    return [s.message_id for s in ordered], np.vstack([s.counts for s in ordered])


def average(series: Iterable[BinnedSeries]) -> AverageSeries:
    """Element-wise mean over all series, reduced in ascending message-id order."""
    series = list(series)
    if not series:
        raise ValueError("cannot average an empty collection")
    g = series[0].granularity_seconds
    if any(s.granularity_seconds != g for s in series):
        raise ValueError("cannot average series with mixed granularities")
    _, matrix = stack(series)
    # integer sums are exact, so the only rounding is the final division
    totals = matrix.sum(axis=0, dtype=np.int64)
    return AverageSeries(g, totals / len(series), len(series))


def rebin(series: BinnedSeries, factor: int) -> BinnedSeries:
    """Sum ``factor`` consecutive bins; the trailing partial group is dropped."""
    if factor < 1:
        raise ValueError("factor must be >= 1")
    n = series.horizon_bins // factor
    if n < 1:
        raise ValueError("series shorter than one coarse bin")
    counts = series.counts[: n * factor].reshape(n, factor).sum(axis=1)
    return BinnedSeries(series.message_id, series.granularity_seconds * factor, counts)
