"""Forecast error metrics: APE, MAPE, Theil inequality coefficient, APE percentiles.

All percentage errors are fractions (0.2 means 20%).  Messages whose real
total is zero have no defined APE; they are excluded from APE-based metrics
and tallied, but still enter the TIC.
"""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "EvalPair",
    "EvalSummary",
    "ape",
    "ape_values",
    "ape_array",
    "mape",
    "tic",
    "ape_percentiles",
    "summarize",
]

DEFAULT_LEVELS = (50, 70, 90)


@dataclass(frozen=True)
class EvalPair:
    message_id: str
    predicted: float
    real: float

    def __post_init__(self):
        if self.real < 0:
            raise ValueError("real total must be >= 0")


def ape(pair: EvalPair) -> float:
    if pair.real == 0:
        raise ValueError(f"APE undefined for {pair.message_id!r}: real total is zero")
    return abs(pair.predicted - pair.real) / pair.real


def _arrays(pairs) -> tuple[np.ndarray, np.ndarray]:
    pairs = list(pairs)
    predicted = np.array([p.predicted for p in pairs], dtype=float)
    real = np.array([p.real for p in pairs], dtype=float)
    return predicted, real


def ape_array(predicted, real) -> tuple[np.ndarray, int]:
    """Vectorized APE over arrays; zero-real entries are dropped and counted."""
    predicted = np.asarray(predicted, dtype=float)
    real = np.asarray(real, dtype=float)
    valid = real > 0
    return np.abs(predicted[valid] - real[valid]) / real[valid], int((~valid).sum())


def ape_values(pairs: Iterable[EvalPair]) -> tuple[np.ndarray, int]:
    """APE for every pair with ``real > 0``, plus the count of excluded pairs."""
    return ape_array(*_arrays(pairs))


def mape(pairs: Iterable[EvalPair]) -> float:
    values, _ = ape_values(pairs)
    if values.size == 0:
        raise ValueError("MAPE needs at least one pair with a positive real total")
    return math.fsum(values.tolist()) / values.size


def _rms(x: np.ndarray) -> float:
    return math.sqrt(math.fsum((x * x).tolist()) / x.size)


def tic(pairs: Iterable[EvalPair], variant: str = "standard") -> float:
    """Theil inequality coefficient.

    ``standard`` puts the RMS of the error in the numerator (0 for a perfect
    forecast).  ``as_written`` puts the RMS of the predictions there, which
    scores a perfect forecast at 0.5.
    """
    predicted, real = _arrays(pairs)
    if predicted.size == 0:
        raise ValueError("TIC needs at least one pair")
    rms_p = _rms(predicted)
    rms_r = _rms(real)
    denom = rms_p + rms_r
    if denom == 0:
        raise ValueError("TIC undefined when predictions and reals are all zero")
    if variant == "standard":
        return _rms(predicted - real) / denom
    if variant == "as_written":
        return rms_p / denom
    raise ValueError(f"unknown TIC variant {variant!r}")


def _nearest_rank(sorted_values: Sequence[float], level: float) -> float:
    n = len(sorted_values)
    # exact rational rank; 0.7 * 10 in floats is 7.000000000000001
    rank = max(1, math.ceil(Fraction(level) * n / 100))
    return float(sorted_values[rank - 1])


def ape_percentiles(pairs: Iterable[EvalPair], levels=DEFAULT_LEVELS) -> dict:
    """Nearest-rank percentiles of the APE distribution."""
    values, _ = ape_values(pairs)
    if values.size == 0:
        raise ValueError("percentiles need at least one pair with a positive real total")
    ordered = np.sort(values)
    out = {}
    for level in levels:
        if not 0 < level <= 100:
            raise ValueError(f"percentile level must be in (0, 100], got {level}")
        out[level] = _nearest_rank(ordered, level)
    return out


@dataclass(frozen=True)
class EvalSummary:
    mape: float
    tic_standard: float
    tic_as_written: float
    ape_percentiles: dict
    n_evaluated: int
    n_excluded_zero_real: int

    def tic(self, variant: str = "standard") -> float:
        return self.tic_standard if variant == "standard" else self.tic_as_written

    def to_dict(self) -> dict:
        return {
            "mape": self.mape,
            "tic_standard": self.tic_standard,
            "tic_as_written": self.tic_as_written,
            "ape_percentiles": {str(k): v for k, v in self.ape_percentiles.items()},
            "n_evaluated": self.n_evaluated,
            "n_excluded_zero_real": self.n_excluded_zero_real,
        }


def summarize(pairs: Iterable[EvalPair], levels=DEFAULT_LEVELS) -> EvalSummary:
    pairs = list(pairs)
    values, excluded = ape_values(pairs)
    return EvalSummary(
        mape=mape(pairs),
        tic_standard=tic(pairs, "standard"),
        tic_as_written=tic(pairs, "as_written"),
        ape_percentiles=ape_percentiles(pairs, levels),
        n_evaluated=int(values.size),
        n_excluded_zero_real=excluded,
    )
