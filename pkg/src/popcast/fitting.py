"""Estimating BiHill shape parameters from an averaged forwarding series.

Two routes are provided:

* :func:`fit_r_powerlaw` splits the peak-proximity index at the peak and
  regresses ``ln r`` on ``ln t`` on each side;
* :func:`fit_bihill` minimizes the squared error of the BiHill curve with a
  Levenberg-Marquardt iteration over log-parameters, seeded from the first
  route plus a fixed set of starts.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .ingest import AverageSeries
from .model import BiHillParams, _log_bihill, r_index

__all__ = [
    "PowerLawFit",
    "RPowerLawResult",
    "FitReport",
    "fit_r_powerlaw",
    "fit_bihill",
    "fit_bihill_curve",
    "seed_from_powerlaw",
]

log = logging.getLogger(__name__)

RTOL_RSS = 1e-10
RTOL_PARAMS = 1e-8
MAX_ITER = 10_000


@dataclass(frozen=True)
class PowerLawFit:
    """``r(t) = k * t ** h`` fitted by OLS in log-log space."""

    k: float
    h: float
    r2: float
    n_points: int

    def __call__(self, t):
        return self.k * np.asarray(t, dtype=float) ** self.h


@dataclass(frozen=True)
class RPowerLawResult:
    rising: PowerLawFit | None
    decaying: PowerLawFit | None
    peak_bin: int
    n_excluded: int

    def __iter__(self):
        return iter((self.rising, self.decaying, self.peak_bin))


def _loglog_ols(t: np.ndarray, r: np.ndarray) -> PowerLawFit | None:
    if t.size < 2:
        return None
    x = np.log(t)
    y = np.log(r)
    xm = x.mean()
    ym = y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0:
        return None
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    syy = float(np.sum((y - ym) ** 2))
    r2 = 1.0 if syy == 0 else 1.0 - float(np.sum(resid**2)) / syy
    return PowerLawFit(k=math.exp(intercept), h=slope, r2=min(1.0, max(0.0, r2)), n_points=int(t.size))


def fit_r_powerlaw(avg) -> RPowerLawResult:
    """Fit the two branches of the peak-proximity index.

    Bins before the (earliest) peak give the rising branch (``h < 0``), bins
    after it the decaying branch (``h > 0``).  Bins with ``q = 0`` or
    ``r = 0`` are excluded.  A side with fewer than two usable bins is
    returned as ``None``.
    """
    values = avg.values if isinstance(avg, AverageSeries) else np.asarray(avg, dtype=float)
    idx = r_index(values)
    before = idx.usable & (idx.bins < idx.peak_bin)
    after = idx.usable & (idx.bins > idx.peak_bin)
    rising = _loglog_ols(idx.bins[before].astype(float), idx.r[before])
    decaying = _loglog_ols(idx.bins[after].astype(float), idx.r[after])
    n_excluded = int(idx.bins.size - before.sum() - after.sum())
    return RPowerLawResult(rising, decaying, idx.peak_bin, n_excluded)


@dataclass(frozen=True)
class FitReport:
    params: BiHillParams
    rss: float
    iterations: int
    converged: bool
    route: str = "nonlinear_ls"
    rss_history: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {
            "params": {k: getattr(self.params, k) for k in ("p_m", "k_a", "h_a", "k_d", "h_d")},
            "rss": self.rss,
            "iterations": self.iterations,
            "converged": self.converged,
            "route": self.route,
        }


def seed_from_powerlaw(values: np.ndarray) -> BiHillParams:
    """Initial BiHill guess from the two r(t) branches.

    A branch ``r = K t**H`` is read as a single Hill factor, so its half-point
    is ``K ** (-1 / H)``.  Exponents are fixed at 1 and ``p_m`` at four times
    the series peak (the factor both unit-exponent terms lose at a symmetric
    peak).  Missing branches fall back to multiples of the peak bin.
    """
    res = fit_r_powerlaw(values)
    peak = float(res.peak_bin)
    k_a = peak / 2.0
    k_d = peak * 2.0
    if res.rising is not None and res.rising.h < 0:
        k_a = res.rising.k ** (-1.0 / res.rising.h)
    if res.decaying is not None and res.decaying.h > 0:
        k_d = res.decaying.k ** (-1.0 / res.decaying.h)
    if not (math.isfinite(k_a) and k_a > 0):
        k_a = peak / 2.0
    if not (math.isfinite(k_d) and k_d > 0):
        k_d = peak * 2.0
    return BiHillParams(4.0 * float(np.max(values)), k_a, 1.0, k_d, 1.0)


def _fixed_starts(values: np.ndarray) -> list[BiHillParams]:
    peak_bin = float(np.argmax(values) + 1)
    top = float(np.max(values))
    n = float(values.size)
    starts = []
    for ka_mul, kd_mul, h in ((0.5, 2.0, 1.0), (0.25, 8.0, 1.0), (1.0, 1.0, 2.0), (0.5, 20.0, 0.5), (0.1, 4.0, 3.0)):
        k_a = max(peak_bin * ka_mul, 0.1)
        k_d = min(max(peak_bin * kd_mul, 1.0), 10.0 * n)
        starts.append(BiHillParams(4.0 * top, k_a, h, k_d, h))
    return starts


def _model_and_jacobian(phi: np.ndarray, log_t: np.ndarray):
    """BiHill values and d(value)/d(log-parameter) for ``phi = log(theta)``."""
    p_m, k_a, h_a, k_d, h_d = np.exp(phi)
    la = log_t
    lu = h_a * (phi[1] - la)  # log of (k_a / t) ** h_a
    lv = h_d * (la - phi[3])  # log of (t / k_d) ** h_d
    f = np.exp(phi[0] - np.logaddexp(0.0, lu) - np.logaddexp(0.0, lv))
    su = np.exp(lu - np.logaddexp(0.0, lu))  # u / (1 + u)
    sv = np.exp(lv - np.logaddexp(0.0, lv))
    jac = np.empty((log_t.size, 5))
    jac[:, 0] = f
    jac[:, 1] = -f * h_a * su
    jac[:, 2] = -f * lu * su
    jac[:, 3] = f * h_d * sv
    jac[:, 4] = -f * lv * sv
    return f, jac


def _lm(phi0: np.ndarray, log_t: np.ndarray, y: np.ndarray, w: np.ndarray, max_iter: int):
    """Marquardt-scaled LM on weighted residuals; returns (phi, rss, iters, converged, history)."""
    sw = np.sqrt(w)
    phi = phi0.astype(float).copy()
    f, jac = _model_and_jacobian(phi, log_t)
    resid = sw * (y - f)
    rss = float(resid @ resid)
    history = [rss]
    lam = None
    converged = rss == 0.0
    iters = 0
    while not converged and iters < max_iter:
        iters += 1
        J = sw[:, None] * jac
        A = J.T @ J
        g = J.T @ resid
        diag = np.maximum(np.diag(A), 1e-300)
        if lam is None:
            lam = 1e-3
        improved = False
        while True:
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), g)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                if np.max(np.abs(step)) < RTOL_PARAMS:
                    # step too small to change any parameter meaningfully
                    converged = True
                    break
                trial = phi + np.clip(step, -5.0, 5.0)
                f_new, jac_new = _model_and_jacobian(trial, log_t)
                resid_new = sw * (y - f_new)
                rss_new = float(resid_new @ resid_new)
                if np.isfinite(rss_new) and rss_new <= rss:
                    rel = (rss - rss_new) / rss if rss > 0 else 0.0
                    phi, f, jac, resid, rss = trial, f_new, jac_new, resid_new, rss_new
                    history.append(rss)
                    lam = max(lam / 3.0, 1e-12)
                    improved = True
                    if rss == 0.0 or rel < RTOL_RSS:
                        converged = True
                    break
            lam *= 4.0
            if lam > 1e16:
                break
        if not improved and not converged:
            # no damping level reduces the RSS: a minimum to working precision
            converged = True
    return phi, rss, iters, converged, history


def fit_bihill_curve(
    t,
    y,
    init: BiHillParams | None = None,
    *,
    weight: str = "none",
    max_iter: int = MAX_ITER,
) -> FitReport:
    """Least-squares BiHill fit of ``y`` sampled at positive times ``t``."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape or t.ndim != 1 or t.size == 0:
        raise ValueError("t and y must be nonempty 1-d arrays of equal length")
    if np.any(t <= 0):
        raise ValueError("sample times must be positive")
    if not np.max(y) > 0:
        raise ValueError("cannot fit a series without a positive maximum")
    if np.ptp(y) == 0:
        raise ValueError("cannot fit a flat series")
    if weight == "none":
        w = np.ones_like(y)
    elif weight == "inverse-variance":
        # Poisson-style variance proportional to the mean level
        w = 1.0 / np.maximum(y, 1e-3 * np.max(y))
    else:
        raise ValueError(f"unknown weight scheme {weight!r}")
    log_t = np.log(t)

    if init is not None:
        starts = [init]
    else:
        order = np.argsort(t, kind="stable")
        grid = np.maximum(y[order], 0.0)
        starts = [seed_from_powerlaw(grid)] + _fixed_starts(grid)

    best = None
    for start in starts:
        phi, rss, iters, converged, history = _lm(np.log(start.as_array()), log_t, y, w, max_iter)
        log.debug("start %s -> rss=%g iters=%d converged=%s", start, rss, iters, converged)
        if best is None or rss < best[1]:
            best = (phi, rss, iters, converged, history)
    phi, rss, iters, converged, history = best
    return FitReport(
        params=BiHillParams.from_array(np.exp(phi)),
        rss=rss,
        iterations=iters,
        converged=converged,
        route="nonlinear_ls",
        rss_history=tuple(history),
    )


def fit_bihill(avg, init: BiHillParams | None = None, *, weight: str = "none", max_iter: int = MAX_ITER) -> FitReport:
    """Fit the BiHill curve to an average series on bins ``1..T``."""
    values = avg.values if isinstance(avg, AverageSeries) else np.asarray(avg, dtype=float)
    if values.size == 0:
        raise ValueError("empty series")
    t = np.arange(1, values.size + 1, dtype=float)
    return fit_bihill_curve(t, values, init, weight=weight, max_iter=max_iter)


def r_index_route(avg) -> FitReport:
    """BiHill parameters read straight off the r(t) branch fits (no iteration).

    ``p_m`` is chosen by least squares given the four shape parameters.
    """
    values = avg.values if isinstance(avg, AverageSeries) else np.asarray(avg, dtype=float)
    res = fit_r_powerlaw(values)
    if res.rising is None or res.decaying is None:
        raise ValueError("r(t) route needs usable bins on both sides of the peak")
    if not (res.rising.h < 0 < res.decaying.h):
        raise ValueError("r(t) branches do not form a V shape")
    k_a = res.rising.k ** (-1.0 / res.rising.h)
    k_d = res.decaying.k ** (-1.0 / res.decaying.h)
    unit = BiHillParams(1.0, k_a, -res.rising.h, k_d, res.decaying.h)
    t = np.arange(1, values.size + 1, dtype=float)
    basis = np.exp(_log_bihill(unit.as_array(), np.log(t)))
    p_m = float(basis @ values / (basis @ basis))
    params = unit.scaled(p_m)
    rss = float(np.sum((values - p_m * basis) ** 2))
    return FitReport(params=params, rss=rss, iterations=0, converged=True, route="r_index_regression")
