import json
import math

import numpy as np
import pytest

from popcast import io
from popcast.baseline import LogGrowthProfile
from popcast.ingest import AverageSeries, BinnedSeries, EventLog
from popcast.model import BiHillParams, Calibration
from popcast.predictor import ADModel


class TestEvents:
    def test_jsonl_inline_release(self, tmp_path):
        path = tmp_path / "ev.jsonl"
        path.write_text('{"id": "a", "t": 105.5, "release": 100}\n\n{"id": "b", "t": 7, "release": 0}\n')
        log, rel = io.read_events(path)
        assert rel == {"a": 100.0, "b": 0.0}
        assert [(e.message_id, e.timestamp) for e in log] == [("a", 105), ("b", 7)]

    def test_csv_with_releases_file(self, tmp_path):
        (tmp_path / "ev.csv").write_text("id,t\na,10\na,20\n")
        (tmp_path / "rel.csv").write_text("id,release\na,5\nz,0\n")
        log, rel = io.read_events(tmp_path / "ev.csv", tmp_path / "rel.csv")
        assert rel == {"a": 5.0, "z": 0.0}
        # messages named only in the releases file are kept with zero events
        assert log.names == ("a", "z")

    def test_zero_based(self, tmp_path):
        (tmp_path / "ev.csv").write_text("id,t\na,3\n")
        log, rel = io.read_events(tmp_path / "ev.csv", zero_based=True)
        assert rel is None and len(log) == 1

    def test_missing_release_is_an_error(self, tmp_path):
        (tmp_path / "ev.csv").write_text("id,t\na,3\n")
        with pytest.raises(io.InputError):
            io.read_events(tmp_path / "ev.csv")

    @pytest.mark.parametrize(
        "text",
        ['{"id": "a"}\n', '{"id": "a", "t": -1, "release": 0}\n', "not json\n", '{"id": "", "t": 1}\n',
         '{"id": "a", "t": 1, "release": 0}\n{"id": "a", "t": 2, "release": 5}\n'],
    )
    def test_malformed(self, tmp_path, text):
        path = tmp_path / "bad.jsonl"
        path.write_text(text)
        with pytest.raises(io.InputError):
            io.read_events(path)

    def test_write_round_trip(self, tmp_path):
        log = EventLog.from_records(["b", "a", "a"], [5, 9, 1])
        io.write_events_jsonl(log, {"a": 100, "b": 0}, tmp_path / "out.jsonl")
        back, rel = io.read_events(tmp_path / "out.jsonl")
        assert rel == {"a": 100.0, "b": 0.0}
        assert [(e.message_id, e.timestamp) for e in back] == [("a", 101), ("a", 109), ("b", 5)]


class TestBinnedFiles:
    def test_round_trip(self, tmp_path):
        series = {"a": BinnedSeries("a", 60, [0, 3, 0]), "z": BinnedSeries("z", 60, [0, 0, 0])}
        meta = {"granularity": 60, "horizon_bins": 3, "message_ids": ["a", "z"]}
        io.write_binned(series, meta, tmp_path)
        assert (tmp_path / "binned.csv").read_text() == "id,bin,count\na,2,3\n"
        back, _ = io.read_binned(tmp_path / "binned.csv")
        assert {k: v.counts.tolist() for k, v in back.items()} == {"a": [0, 3, 0], "z": [0, 0, 0]}

    def test_average_round_trip(self, tmp_path):
        avg = AverageSeries(30, [0.1, 2.0 / 3.0, 5.0], 3)
        io.write_average(avg, tmp_path / "average.csv")
        back = io.read_average(tmp_path / "average.csv")
        assert back.values.tobytes() == avg.values.tobytes()
        assert (back.granularity_seconds, back.n_messages) == (30, 3)

    def test_average_needs_granularity(self, tmp_path):
        (tmp_path / "avg.csv").write_text("bin,q\n1,0.5\n")
        with pytest.raises(io.InputError):
            io.read_average(tmp_path / "avg.csv")
        assert io.read_average(tmp_path / "avg.csv", 60).granularity_seconds == 60


class TestModels:
    def test_ad_round_trip_with_null_beta(self, tmp_path):
        m = ADModel(BiHillParams(1.01, 3.3, 2.1, 40.0, 1.4), 7, Calibration(0.9, -math.inf), 300, 4, 2016)
        io.save_model(m, tmp_path / "m.json")
        d = json.loads((tmp_path / "m.json").read_text())
        assert d["beta"] is None
        assert io.load_model(tmp_path / "m.json") == m

    def test_ad_round_trip_finite_beta(self, tmp_path):
        m = ADModel(BiHillParams(1.0, 3.0, 2.0, 40.0, 1.5), 7, Calibration(1.2, -0.7), 60, 10, 100)
        io.save_model(m, tmp_path / "m.json")
        assert io.load_model(tmp_path / "m.json") == m

    def test_baseline_round_trip(self, tmp_path):
        prof = LogGrowthProfile(60, 2, 4, [0.0, 0.25, 1.0 / 3.0], 9)
        io.save_model(prof, tmp_path / "b.json")
        back = io.load_model(tmp_path / "b.json")
        assert back.growth.tobytes() == prof.growth.tobytes()
        assert (back.t1_bins, back.horizon_bins, back.n_train) == (2, 4, 9)

    def test_missing_field(self):
        with pytest.raises(io.InputError):
            io.model_from_dict({"method": "ad"})

    def test_no_nan_in_json(self, tmp_path):
        with pytest.raises(ValueError):
            io.dump_json({"x": float("nan")}, tmp_path / "x.json")

    def test_dump_is_sorted(self, tmp_path):
        io.dump_json({"b": 1, "a": np.float64(0.5).item()}, tmp_path / "x.json")
        assert (tmp_path / "x.json").read_text() == '{\n  "a": 0.5,\n  "b": 1\n}\n'
