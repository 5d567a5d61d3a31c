import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from popcast.metrics import EvalPair, ape, ape_percentiles, ape_values, mape, summarize, tic


def _pairs(pred, real):
    return [EvalPair(f"m{i}", p, r) for i, (p, r) in enumerate(zip(pred, real))]


pair_lists = st.lists(
    st.tuples(st.floats(0, 1e6, allow_nan=False), st.integers(1, 10**6)),
    min_size=1,
    max_size=60,
)


class TestAPE:
    @pytest.mark.parametrize("pred,real,expected", [(12, 10, 0.2), (10, 10, 0.0), (0, 10, 1.0)])
    def test_examples(self, pred, real, expected):
        assert ape(EvalPair("a", pred, real)) == pytest.approx(expected, abs=1e-15)

    def test_zero_real_undefined(self):
        with pytest.raises(ValueError):
            ape(EvalPair("a", 3, 0))

    def test_zero_real_excluded_and_tallied(self):
        values, excluded = ape_values(_pairs([1, 2, 3], [0, 2, 0]))
        assert values.tolist() == [0.0]
        assert excluded == 2

    def test_negative_real_rejected(self):
        with pytest.raises(ValueError):
            EvalPair("a", 1, -1)


class TestMAPE:
    def test_two_values(self):
        assert mape(_pairs([11, 13], [10, 10])) == pytest.approx(0.2, rel=1e-15)

    def test_perfect(self):
        assert mape(_pairs([4, 9], [4, 9])) == 0.0

    def test_no_valid_pairs(self):
        with pytest.raises(ValueError):
            mape(_pairs([1], [0]))

    def test_random_oracle(self):
        rng = np.random.default_rng(12)
        pred = rng.uniform(0, 500, 100).tolist()
        real = rng.integers(1, 500, 100).tolist()
        oracle = sum(abs(p - r) / r for p, r in zip(pred, real)) / 100
        assert mape(_pairs(pred, real)) == pytest.approx(oracle, rel=1e-12)

    @settings(max_examples=80, deadline=None)
    @given(pair_lists)
    def test_bounded_by_ape_extremes(self, raw):
        pairs = _pairs(*zip(*raw))
        values, _ = ape_values(pairs)
        m = mape(pairs)
        assert values.min() * (1 - 1e-12) <= m <= values.max() * (1 + 1e-12)


class TestTIC:
    def test_perfect(self):
        pairs = _pairs([3.0, 5.0], [3, 5])
        assert tic(pairs, "standard") == 0.0
        assert tic(pairs, "as_written") == 0.5

    def test_zero_predictions(self):
        pairs = _pairs([0.0, 0.0], [3, 5])
        assert tic(pairs, "standard") == 1.0
        assert tic(pairs, "as_written") == 0.0

    def test_all_zero_undefined(self):
        with pytest.raises(ValueError):
            tic(_pairs([0.0], [0]))

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            tic(_pairs([1.0], [1]), "other")

    def test_zero_real_included(self):
        pairs = _pairs([2.0, 0.0], [0, 2])
        # error RMS equals prediction RMS equals real RMS = sqrt(2)
        assert tic(pairs) == pytest.approx(math.sqrt(4) / (2 * math.sqrt(2)), rel=1e-15)

    def test_direct_oracle(self):
        rng = np.random.default_rng(4)
        pred = rng.uniform(0, 100, 50)
        real = rng.integers(0, 100, 50)
        rp = math.sqrt(sum(x * x for x in pred) / 50)
        rr = math.sqrt(sum(float(x) ** 2 for x in real) / 50)
        re = math.sqrt(sum((p - r) ** 2 for p, r in zip(pred, real)) / 50)
        pairs = _pairs(pred.tolist(), real.tolist())
        assert tic(pairs, "standard") == pytest.approx(re / (rp + rr), rel=1e-12)
        assert tic(pairs, "as_written") == pytest.approx(rp / (rp + rr), rel=1e-12)

    @settings(max_examples=80, deadline=None)
    @given(pair_lists)
    def test_bounds(self, raw):
        pairs = _pairs(*zip(*raw))
        assert 0.0 <= tic(pairs, "standard") <= 1.0 + 1e-15
        assert 0.0 <= tic(pairs, "as_written") <= 1.0


class TestPercentiles:
    def test_median_of_three(self):
        pairs = _pairs([1.1, 1.2, 1.3], [1, 1, 1])
        assert ape_percentiles(pairs, (50,))[50] == pytest.approx(0.2, rel=1e-12)

    def test_single_pair(self):
        out = ape_percentiles(_pairs([15], [10]))
        assert set(out.values()) == {0.5}

    def test_float_rank_edge(self):
        # 70 percent of 10 values is rank 7 exactly
        pairs = _pairs([float(i) for i in range(11, 21)], [10] * 10)
        assert ape_percentiles(pairs, (70,))[70] == pytest.approx(0.7, rel=1e-12)

    def test_bad_level(self):
        with pytest.raises(ValueError):
            ape_percentiles(_pairs([1], [1]), (0,))

    @settings(max_examples=80, deadline=None)
    @given(pair_lists)
    def test_sort_and_index_oracle(self, raw):
        pairs = _pairs(*zip(*raw))
        apes = sorted(abs(p - r) / r for p, r in raw)
        n = len(apes)
        out = ape_percentiles(pairs)
        for level in (50, 70, 90):
            rank = max(1, -(-level * n // 100))
            assert out[level] == apes[rank - 1]
        assert out[50] <= out[70] <= out[90]


class TestInvariances:
    @settings(max_examples=60, deadline=None)
    @given(pair_lists, st.randoms(use_true_random=False))
    def test_permutation(self, raw, rnd):
        pairs = _pairs(*zip(*raw))
        shuffled = list(pairs)
        rnd.shuffle(shuffled)
        a, b = summarize(pairs), summarize(shuffled)
        # fsum makes MAPE and the RMS terms order-free
        assert a.to_dict() == b.to_dict()

    @settings(max_examples=60, deadline=None)
    @given(pair_lists, st.floats(0.01, 100.0))
    def test_scaling(self, raw, c):
        pairs = _pairs(*zip(*raw))
        scaled = [EvalPair(p.message_id, p.predicted * c, p.real * c) for p in pairs]
        a, b = summarize(pairs), summarize(scaled)
        assert b.mape == pytest.approx(a.mape, rel=1e-9, abs=1e-12)
        assert b.tic_standard == pytest.approx(a.tic_standard, rel=1e-9, abs=1e-12)
        assert b.tic_as_written == pytest.approx(a.tic_as_written, rel=1e-9)


class TestSummary:
    def test_fields(self):
        s = summarize(_pairs([12, 5, 1], [10, 5, 0]))
        assert s.n_evaluated == 2
        assert s.n_excluded_zero_real == 1
        assert s.mape == pytest.approx(0.1, rel=1e-12)
        d = s.to_dict()
        assert set(d["ape_percentiles"]) == {"50", "70", "90"}
