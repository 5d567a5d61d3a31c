import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from popcast.baseline import LogGrowthProfile, baseline_predict, baseline_predict_counts, fit_baseline
from popcast.ingest import BinnedSeries


def _series(rows, g=60):
    return [BinnedSeries(f"m{i:04d}", g, row) for i, row in enumerate(rows)]


class TestFit:
    def test_constant_after_t1(self):
        prof = fit_baseline(_series([[3, 2, 0, 0], [1, 0, 0, 0]]), 2, 4)
        assert prof.growth.tolist() == [0.0, 0.0, 0.0]

    def test_doubling(self):
        prof = fit_baseline(_series([[100_000, 0, 100_000]]), 1, 3)
        assert prof.at(3) == pytest.approx(math.log(2), rel=1e-5)
        assert prof.at(1) == 0.0

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(9)
        rows = rng.integers(0, 20, size=(40, 12))
        prof = fit_baseline(_series(rows), 3, 12)
        for t2 in range(3, 13):
            terms = [math.log((sum(r[:t2]) + 1) / (sum(r[:3]) + 1)) for r in rows.tolist()]
            assert prof.at(t2) == pytest.approx(sum(terms) / 40, rel=1e-12, abs=1e-15)
        assert prof.cumulative_log_growth[3] == 0.0
        assert prof.n_train == 40

    def test_empty_training(self):
        with pytest.raises(ValueError):
            fit_baseline([], 1, 2)

    def test_window_order(self):
        with pytest.raises(ValueError):
            fit_baseline(_series([[1, 2, 3]]), 3, 3)


class TestPredict:
    def test_zero_profile_identity(self):
        prof = LogGrowthProfile(60, 2, 4, [0.0, 0.0, 0.0], 1)
        assert baseline_predict(prof, BinnedSeries("a", 60, [4, 3, 9, 9]), 4) == 7.0

    def test_smoothing_arithmetic(self):
        prof = LogGrowthProfile(60, 1, 2, [0.0, math.log(3)], 1)
        assert baseline_predict(prof, BinnedSeries("a", 60, [0, 0]), 2) == pytest.approx(2.0, rel=1e-15)

    def test_domain(self):
        prof = LogGrowthProfile(60, 2, 4, [0.0, 0.1, 0.2], 1)
        with pytest.raises(ValueError):
            prof.at(5)
        with pytest.raises(ValueError):
            baseline_predict(prof, BinnedSeries("a", 60, [1, 1, 1, 1]), 1)

    def test_floor(self):
        prof = LogGrowthProfile(60, 1, 2, [0.0, -1.0], 1)
        assert baseline_predict(prof, BinnedSeries("a", 60, [5, 0]), 2) == 5.0

    def test_vectorized_matches_scalar(self):
        prof = LogGrowthProfile(60, 2, 5, [0.0, 0.2, 0.5, 0.7], 3)
        rows = [[0, 0, 1, 1, 1], [4, 2, 1, 0, 0], [9, 9, 9, 9, 9]]
        known = [sum(r[:2]) for r in rows]
        vec = baseline_predict_counts(prof, known, 5)
        for v, row in zip(vec, rows):
            assert v == pytest.approx(baseline_predict(prof, BinnedSeries("x", 60, row), 5), rel=1e-14)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(-2.0, 5.0), st.integers(0, 10**6), st.integers(0, 10**6))
    def test_monotone_in_known(self, growth, a, b):
        prof = LogGrowthProfile(60, 1, 2, [0.0, growth], 1)
        lo, hi = sorted((a, b))
        p_lo, p_hi = baseline_predict_counts(prof, [lo, hi], 2)
        assert p_lo <= p_hi


class TestCorpora:
    def test_exact_log_linear_corpus(self):
        # every cumulative curve is c_s * g(t) for a shared integer g
        g = np.array([1, 3, 6, 10, 14, 17, 19, 20])
        rng = np.random.default_rng(21)
        scales = rng.integers(100, 5000, size=200)
        cum = scales[:, None] * g[None, :]
        counts = np.diff(cum, axis=1, prepend=0)
        train, test = counts[:150], counts[150:]
        prof = fit_baseline(_series(train), 2, 8)
        for row in test:
            pred = baseline_predict(prof, BinnedSeries("t", 60, row), 8)
            assert pred == pytest.approx(row.sum(), rel=0.01)

    def test_lognormal_residuals_centered(self):
        rng = np.random.default_rng(33)
        n = 2000
        n1 = rng.integers(200, 2000, size=n)
        eps = rng.normal(0.0, 0.2, size=n)
        n2 = np.maximum(np.rint(n1 * np.exp(1.0 + eps)).astype(np.int64), n1)
        counts = np.stack([n1, n2 - n1], axis=1)
        train, test = counts[:1000], counts[1000:]
        prof = fit_baseline(_series(train), 1, 2)
        pred = baseline_predict_counts(prof, test[:, 0], 2)
        resid = np.log1p(test.sum(axis=1)) - np.log1p(pred)
        se = resid.std(ddof=1) / math.sqrt(resid.size)
        assert abs(resid.mean()) < 3 * se
