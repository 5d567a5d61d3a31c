"""Hill, BiHill and activation-decay curve evaluation.

Time is always the 1-based bin index at the working granularity, so every
evaluation point is strictly positive.

The BiHill curve is stored in its unimodal orientation::

    bihill(t) = p_m / ((1 + (k_a / t) ** h_a) * (1 + (t / k_d) ** h_d))

with all five parameters positive.  The first factor rises toward 1 (the
activation factor), the second falls from 1 toward 0 (the decay factor).
Converters to the multiplicative ``1 / (1 + K * t ** H)`` surface form and
to the all-``(K / t) ** H`` surface form are provided below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

__all__ = [
    "HillParams",
    "BiHillParams",
    "Calibration",
    "RIndex",
    "hill_eval",
    "bihill_eval",
    "bihill_factors",
    "ad_eval",
    "r_index",
    "normalize_shape",
    "to_power_form",
    "from_power_form",
    "to_ratio_form",
    "from_ratio_form",
]


def _check_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise ValueError("curve evaluated at t <= 0; time is a 1-based bin index")
    return t


@dataclass(frozen=True)
class HillParams:
    p: float
    k: float
    h: float

    def __post_init__(self):
        if not (self.p > 0 and self.k > 0):
            raise ValueError(f"Hill p and k must be positive, got p={self.p}, k={self.k}")
        if self.h == 0 or not math.isfinite(self.h):
            raise ValueError("Hill exponent must be finite and nonzero")


@dataclass(frozen=True)
class BiHillParams:
    """Unimodal BiHill parameters.

    ``p_m`` is the maximum scale, ``k_a``/``h_a`` the half-maximal activating
    value and its exponent, ``k_d``/``h_d`` the half-maximal inhibitory value
    and its exponent.
    """

    p_m: float
    k_a: float
    h_a: float
    k_d: float
    h_d: float

    def __post_init__(self):
        for name in ("p_m", "k_a", "h_a", "k_d", "h_d"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"BiHill {name} must be finite and > 0, got {value!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.p_m, self.k_a, self.h_a, self.k_d, self.h_d])

    @classmethod
    def from_array(cls, values) -> "BiHillParams":
        return cls(*(float(v) for v in values))

    def scaled(self, factor: float) -> "BiHillParams":
        return replace(self, p_m=self.p_m * factor)


@dataclass(frozen=True)
class Calibration:
    """Global scale ``alpha`` and additive per-bin floor ``exp(beta)``.

    ``beta = -inf`` is allowed and means the floor vanishes.
    """

    alpha: float
    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be finite and > 0, got {self.alpha!r}")
        if math.isnan(self.beta) or self.beta == math.inf:
            raise ValueError(f"beta must be a real number or -inf, got {self.beta!r}")

    @property
    def floor(self) -> float:
        return math.exp(self.beta)

    @classmethod
    def from_floor(cls, alpha: float, floor: float) -> "Calibration":
        if floor < 0:
            raise ValueError("additive floor must be >= 0")
        return cls(alpha=alpha, beta=math.log(floor) if floor > 0 else -math.inf)


def hill_eval(params: HillParams, t):
    """``p / (1 + (k / t) ** h)``; accepts scalars or arrays."""
    t = _check_time(t)
    log_ratio = params.h * (math.log(params.k) - np.log(t))
    # 1 / (1 + exp(x)) computed without overflow
    out = params.p * np.exp(-np.logaddexp(0.0, log_ratio))
    return float(out) if out.ndim == 0 else out


def bihill_factors(params: BiHillParams, t):
    """Return the (activation, decay) factors separately, each in (0, 1)."""
    t = _check_time(t)
    log_t = np.log(t)
    activation = np.exp(-np.logaddexp(0.0, params.h_a * (math.log(params.k_a) - log_t)))
    decay = np.exp(-np.logaddexp(0.0, params.h_d * (log_t - math.log(params.k_d))))
    return activation, decay


def _log_bihill(values: np.ndarray, log_t: np.ndarray) -> np.ndarray:
    p_m, k_a, h_a, k_d, h_d = values
    return (
        math.log(p_m)
        - np.logaddexp(0.0, h_a * (math.log(k_a) - log_t))
        - np.logaddexp(0.0, h_d * (log_t - math.log(k_d)))
    )


def bihill_eval(params: BiHillParams, t):
    t = _check_time(t)
    out = np.exp(_log_bihill(params.as_array(), np.log(t)))
    return float(out) if out.ndim == 0 else out


def normalize_shape(params: BiHillParams, horizon_bins: int) -> tuple[BiHillParams, int]:
    """Rescale ``p_m`` so the curve peaks at exactly 1 on bins ``1..horizon_bins``.

    Returns the rescaled parameters and the (earliest) peak bin.
    """
    if horizon_bins < 1:
        raise ValueError("horizon_bins must be >= 1")
    values = bihill_eval(params, np.arange(1, horizon_bins + 1))
    peak_idx = int(np.argmax(values))
    shape = params.scaled(1.0 / float(values[peak_idx]))
    return shape, peak_idx + 1


def ad_eval(shape: BiHillParams, cal: Calibration, q_max: float, t):
    """Per-bin activation-decay prediction ``alpha * q_max * shape(t) + exp(beta)``.

    ``shape`` is expected to be unit-peak normalized (see :func:`normalize_shape`).
    """
    if q_max < 0:
        raise ValueError("q_max must be >= 0")
    out = cal.alpha * q_max * np.asarray(bihill_eval(shape, t)) + cal.floor
    return float(out) if out.ndim == 0 else out


class RIndex(NamedTuple):
    bins: np.ndarray
    r: np.ndarray
    usable: np.ndarray
    q_max: float
    peak_bin: int


def r_index(q) -> RIndex:
    """Peak-proximity index ``(q_max - q(t)) / q(t)`` for each bin.

    Bins with ``q(t) == 0`` get ``r = inf``; they and the zero-``r`` peak bins
    are marked unusable for log-log regression.
    """
    q = np.asarray(q, dtype=float)
    if q.ndim != 1 or q.size == 0:
        raise ValueError("r_index needs a nonempty 1-d series")
    if np.any(q < 0):
        raise ValueError("series values must be non-negative")
    q_max = float(q.max())
    if q_max <= 0:
        raise ValueError("r_index is undefined for an all-zero series")
    with np.errstate(divide="ignore"):
        r = np.where(q > 0, (q_max - q) / np.where(q > 0, q, 1.0), np.inf)
    usable = (q > 0) & (r > 0)
    return RIndex(
        bins=np.arange(1, q.size + 1),
        r=r,
        usable=usable,
        q_max=q_max,
        peak_bin=int(np.argmax(q)) + 1,
    )


# Surface-form converters.  The "power" form writes each factor as
# 1 / (1 + K * t**H) (activation has H < 0, decay H > 0).  The "ratio" form
# writes each factor as 1 / (1 + (K / t)**H) (activation H > 0, decay H < 0).


def to_power_form(params: BiHillParams) -> dict:
    return {
        "p_m": params.p_m,
        "K_a": params.k_a ** params.h_a,
        "H_a": -params.h_a,
        "K_d": params.k_d ** (-params.h_d),
        "H_d": params.h_d,
    }


def from_power_form(p_m: float, K_a: float, H_a: float, K_d: float, H_d: float) -> BiHillParams:
    if not (H_a < 0 < H_d):
        raise ValueError("power form needs H_a < 0 (activation) and H_d > 0 (decay)")
    if not (K_a > 0 and K_d > 0):
        raise ValueError("power-form coefficients must be positive")
    return BiHillParams(
        p_m=p_m,
        k_a=K_a ** (1.0 / -H_a),
        h_a=-H_a,
        k_d=K_d ** (-1.0 / H_d),
        h_d=H_d,
    )


def to_ratio_form(params: BiHillParams) -> dict:
    return {
        "p_m": params.p_m,
        "K_a": params.k_a,
        "H_a": params.h_a,
        "K_i": params.k_d,
        "H_i": -params.h_d,
    }


def from_ratio_form(p_m: float, K_a: float, H_a: float, K_i: float, H_i: float) -> BiHillParams:
    if not (H_a > 0 > H_i):
        raise ValueError("ratio form is unimodal only for H_a > 0 and H_i < 0")
    return BiHillParams(p_m=p_m, k_a=K_a, h_a=H_a, k_d=K_i, h_d=-H_i)
