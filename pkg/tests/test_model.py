import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from popcast.model import (
    BiHillParams,
    Calibration,
    HillParams,
    ad_eval,
    bihill_eval,
    bihill_factors,
    from_power_form,
    from_ratio_form,
    hill_eval,
    normalize_shape,
    r_index,
    to_power_form,
    to_ratio_form,
)

positive = st.floats(min_value=0.05, max_value=500.0, allow_nan=False)
exponent = st.floats(min_value=0.2, max_value=5.0, allow_nan=False)
bihills = st.builds(BiHillParams, positive, positive, exponent, positive, exponent)


class TestHill:
    def test_half_maximal_at_k(self):
        assert hill_eval(HillParams(1, 5, 2), 5) == 0.5

    def test_saturates(self):
        assert hill_eval(HillParams(1, 5, 2), 1e9) == pytest.approx(1.0, abs=1e-12)

    def test_direct_arithmetic(self):
        assert hill_eval(HillParams(3, 2, 1), 4) == pytest.approx(2.0, rel=1e-15)

    def test_increasing_for_positive_h(self):
        v = hill_eval(HillParams(2, 7, 1.3), np.arange(1, 200))
        assert np.all(np.diff(v) > 0)

    @pytest.mark.parametrize("t", [0, -1.0])
    def test_domain(self, t):
        with pytest.raises(ValueError):
            hill_eval(HillParams(1, 1, 1), t)

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            HillParams(1, 1, 0)
        with pytest.raises(ValueError):
            HillParams(-1, 1, 1)


class TestBiHill:
    def test_quarter_at_common_half_point(self):
        p = BiHillParams(8.0, 3.0, 1.7, 3.0, 0.4)
        assert bihill_eval(p, 3.0) == pytest.approx(2.0, rel=1e-15)

    def test_limits(self):
        p = BiHillParams(1.0, 2.0, 1.5, 20.0, 1.2)
        assert bihill_eval(p, 1e-9) < 1e-12
        assert bihill_eval(p, 1e12) < 1e-12

    def test_worked_value(self):
        # both factors are 1 + 1/3 at t = 3, the analytic mode sqrt(1 * 9)
        p = BiHillParams(4.0, 1.0, 1.0, 9.0, 1.0)
        assert bihill_eval(p, 3.0) == pytest.approx(4 / ((1 + 1 / 3) * (1 + 1 / 3)), rel=1e-15)
        grid = np.linspace(0.5, 30, 60_000)
        assert grid[np.argmax(bihill_eval(p, grid))] == pytest.approx(3.0, abs=1e-3)

    def test_factorization(self):
        p = BiHillParams(5.0, 4.0, 2.0, 40.0, 1.5)
        t = np.arange(1, 500, dtype=float)
        act = hill_eval(HillParams(1.0, 4.0, 2.0), t)
        dec = hill_eval(HillParams(1.0, 40.0, -1.5), t)
        np.testing.assert_allclose(bihill_eval(p, t), 5.0 * act * dec, rtol=1e-13)
        a, d = bihill_factors(p, t)
        np.testing.assert_allclose(a, act, rtol=1e-14)
        np.testing.assert_allclose(d, dec, rtol=1e-14)

    @settings(max_examples=60, deadline=None)
    @given(bihills)
    def test_single_local_maximum(self, p):
        t = np.geomspace(1e-3, 1e7, 20_000)
        v = np.log(bihill_eval(p, t))
        d = np.diff(v)
        d = d[np.abs(d) > 1e-12]
        sign_changes = np.count_nonzero(np.diff(np.sign(d)) != 0)
        assert sign_changes <= 1

    def test_no_overflow_extreme(self):
        p = BiHillParams(1.0, 1e3, 50.0, 1e4, 50.0)
        v = bihill_eval(p, np.array([1.0, 3e3, 1e8]))
        assert np.all(np.isfinite(v))

    def test_positive_params_required(self):
        with pytest.raises(ValueError):
            BiHillParams(1, 1, -1, 1, 1)


class TestSurfaceForms:
    @settings(max_examples=50, deadline=None)
    @given(bihills)
    def test_power_form_round_trip(self, p):
        back = from_power_form(**to_power_form(p))
        np.testing.assert_allclose(back.as_array(), p.as_array(), rtol=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(bihills)
    def test_ratio_form_round_trip(self, p):
        back = from_ratio_form(**to_ratio_form(p))
        np.testing.assert_allclose(back.as_array(), p.as_array(), rtol=1e-15)

    def test_power_form_evaluates_identically(self):
        p = BiHillParams(3.0, 6.0, 2.2, 80.0, 1.3)
        f = to_power_form(p)
        t = np.arange(1, 1000, dtype=float)
        direct = f["p_m"] / ((1 + f["K_a"] * t ** f["H_a"]) * (1 + f["K_d"] * t ** f["H_d"]))
        np.testing.assert_allclose(bihill_eval(p, t), direct, rtol=1e-12)

    def test_ratio_form_evaluates_identically(self):
        p = BiHillParams(3.0, 6.0, 2.2, 80.0, 1.3)
        f = to_ratio_form(p)
        t = np.arange(1, 1000, dtype=float)
        direct = f["p_m"] / ((1 + (f["K_a"] / t) ** f["H_a"]) * (1 + (f["K_i"] / t) ** f["H_i"]))
        np.testing.assert_allclose(bihill_eval(p, t), direct, rtol=1e-12)

    def test_power_form_signs_enforced(self):
        with pytest.raises(ValueError):
            from_power_form(1.0, 2.0, 1.0, 2.0, 1.0)


class TestAD:
    def test_zero_scale_is_floor(self):
        cal = Calibration(1.0, 0.3)
        shape = BiHillParams(1.0, 2.0, 2.0, 10.0, 1.0)
        assert ad_eval(shape, cal, 0.0, 7.0) == pytest.approx(math.exp(0.3), rel=1e-15)

    def test_peak_bin_gives_q_max(self):
        shape, peak = normalize_shape(BiHillParams(17.0, 3.0, 2.0, 30.0, 1.5), 500)
        cal = Calibration(1.0, -math.inf)
        assert ad_eval(shape, cal, 42.0, peak) == pytest.approx(42.0, rel=1e-14)
        assert np.max(bihill_eval(shape, np.arange(1, 501))) == pytest.approx(1.0, rel=1e-15)

    def test_direct_arithmetic(self):
        # choose a shape evaluating to exactly 0.25 at t = k_a = k_d
        shape = BiHillParams(1.0, 5.0, 1.0, 5.0, 1.0)
        assert ad_eval(shape, Calibration(2.0, 0.0), 10.0, 5.0) == pytest.approx(6.0, rel=1e-15)

    def test_monotone_in_scale_and_alpha(self):
        shape = BiHillParams(1.0, 2.0, 2.0, 10.0, 1.0)
        t = np.arange(1, 50)
        lo = ad_eval(shape, Calibration(1.0, 0.0), 3.0, t)
        assert np.all(ad_eval(shape, Calibration(1.0, 0.0), 3.5, t) > lo)
        assert np.all(ad_eval(shape, Calibration(1.2, 0.0), 3.0, t) > lo)

    def test_calibration_floor(self):
        assert Calibration.from_floor(1.0, 0.0).beta == -math.inf
        assert Calibration.from_floor(1.0, 2.0).floor == pytest.approx(2.0)
        with pytest.raises(ValueError):
            Calibration(0.0, 0.0)


class TestRIndex:
    def test_half_and_peak(self):
        idx = r_index([5.0, 10.0])
        assert idx.r[0] == 1.0
        assert idx.r[1] == 0.0

    def test_element_wise(self):
        q = [2.0, 10.0, 4.0]
        idx = r_index(q)
        expected = [(10 - v) / v for v in q]  # element-wise oracle
        np.testing.assert_array_equal(idx.r, expected)
        assert idx.r.tolist() == [4.0, 0.0, 1.5]
        assert idx.usable.tolist() == [True, False, True]
        assert idx.peak_bin == 2

    def test_zero_bins_flagged(self):
        idx = r_index([0.0, 3.0, 1.0])
        assert math.isinf(idx.r[0])
        assert idx.usable.tolist() == [False, False, True]

    def test_all_zero_rejected(self):
        with pytest.raises(ValueError):
            r_index([0.0, 0.0])

    @settings(max_examples=40, deadline=None)
    @given(
        st.floats(0.01, 100.0),
        st.floats(0.1, 3.0),
        st.floats(1.0, 1e4),
    )
    def test_power_law_identity(self, K, H, q_max):
        # bin 1 carries q_max, later bins follow q_max / (1 + K t^H)
        t = np.arange(1, 2001, dtype=float)
        q = q_max / (1.0 + K * t**H)
        q[0] = q_max
        idx = r_index(q)
        assert idx.q_max == q_max
        expected = K * t[1:] ** H
        # subtraction q_max - q loses digits where K t^H is tiny
        ok = expected > 1e-4
        np.testing.assert_allclose(idx.r[1:][ok], expected[ok], rtol=1e-10)
