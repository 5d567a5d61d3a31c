"""Reading and writing the plain-text formats used by the CLI.

Event logs are JSON lines ``{"id": str, "t": number[, "release": number]}``
or CSV with header ``id,t[,release]``.  Binned output is a sparse CSV
``id,bin,count`` plus a JSON sidecar.  Models are flat JSON objects.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .baseline import LogGrowthProfile
from .ingest import AverageSeries, BinnedSeries, EventLog
from .model import BiHillParams, Calibration
from .predictor import ADModel

__all__ = [
    "InputError",
    "read_events",
    "read_releases",
    "write_events_jsonl",
    "write_binned",
    "read_binned",
    "write_average",
    "read_average",
    "dump_json",
    "model_to_dict",
    "model_from_dict",
    "profile_to_dict",
    "profile_from_dict",
    "save_model",
    "load_model",
]


class InputError(ValueError):
    """Malformed input file."""


def dump_json(obj, path: Path | str) -> None:
    text = json.dumps(obj, sort_keys=True, indent=2, allow_nan=False)
    Path(path).write_text(text + "\n")


def read_releases(path: Path | str) -> dict:
    releases = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"id", "release"} <= set(reader.fieldnames):
            raise InputError(f"{path}: releases file needs header 'id,release'")
        for lineno, row in enumerate(reader, start=2):
            try:
                releases[row["id"]] = float(row["release"])
            except (TypeError, ValueError):
                raise InputError(f"{path}:{lineno}: bad release value {row.get('release')!r}") from None
    return releases


def _rows_jsonl(path):
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}:{lineno}: {exc.msg}") from None
            yield lineno, obj


def _rows_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"id", "t"} <= set(reader.fieldnames):
            raise InputError(f"{path}: CSV event log needs header 'id,t[,release]'")
        for lineno, row in enumerate(reader, start=2):
            if row.get("release") in ("", None):
                row.pop("release", None)
            yield lineno, row


def read_events(path: Path | str, releases_path: Path | str | None = None, zero_based: bool = False):
    """Load an event log.

    Returns ``(log, release_times)``; ``release_times`` is ``None`` when the
    log is declared zero-based.  Release times come from per-row ``release``
    fields or from ``releases_path``.
    """
    path = Path(path)
    rows = _rows_csv(path) if path.suffix.lower() == ".csv" else _rows_jsonl(path)
    ids, stamps = [], []
    inline_release = {}
    for lineno, row in rows:
        try:
            mid = str(row["id"])
            t = float(row["t"])
        except (KeyError, TypeError, ValueError):
            raise InputError(f"{path}:{lineno}: each event needs 'id' and numeric 't'") from None
        if not mid:
            raise InputError(f"{path}:{lineno}: empty message id")
        if not math.isfinite(t) or t < 0:
            raise InputError(f"{path}:{lineno}: timestamp must be a non-negative number")
        if "release" in row:
            try:
                rel = float(row["release"])
            except (TypeError, ValueError):
                raise InputError(f"{path}:{lineno}: bad release value") from None
            prev = inline_release.setdefault(mid, rel)
            if prev != rel:
                raise InputError(f"{path}:{lineno}: conflicting release times for {mid!r}")
        ids.append(mid)
        stamps.append(t)
    releases = dict(inline_release)
    if releases_path is not None:
        releases.update(read_releases(releases_path))
    universe = releases.keys() if releases_path is not None else ()
    log = EventLog.from_records(ids, np.array(stamps, dtype=float), universe)
    if zero_based:
        return log, None
    if not releases:
        raise InputError(
            f"{path}: no release times; add a 'release' column, a releases file, or --zero-based"
        )
    return log, releases


def write_events_jsonl(log: EventLog, release_times: dict | None, path: Path | str) -> None:
    """Write events in canonical (id, timestamp) order; absolute times when releases are given."""
    order = log.canonical_order()
    codes = log.codes[order].tolist()
    stamps = log.timestamps[order].tolist()
    names = log.names
    with open(path, "w") as fh:
        if release_times is None:
            for c, t in zip(codes, stamps):
                fh.write(f'{{"id": {json.dumps(names[c])}, "t": {t}}}\n')
        else:
            rel = [release_times[n] for n in names]
            for c, t in zip(codes, stamps):
                r = rel[c]
                fh.write(f'{{"id": {json.dumps(names[c])}, "release": {r}, "t": {r + t}}}\n')


def write_binned(series: dict, meta: dict, out_dir: Path | str, stem: str = "binned") -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / f"{stem}.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "bin", "count"])
        for mid in sorted(series):
            counts = series[mid].counts
            for b in np.flatnonzero(counts).tolist():
                w.writerow([mid, b + 1, int(counts[b])])
    dump_json(meta, out_dir / f"{stem}.json")


def read_binned(csv_path: Path | str, meta_path: Path | str | None = None) -> tuple[dict, dict]:
    csv_path = Path(csv_path)
    meta_path = Path(meta_path) if meta_path else csv_path.with_suffix(".json")
    meta = json.loads(meta_path.read_text())
    g = int(meta["granularity"])
    T = int(meta["horizon_bins"])
    dense = {mid: np.zeros(T, dtype=np.int64) for mid in meta.get("message_ids", [])}
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):
            try:
                b = int(row["bin"])
                c = int(row["count"])
            except (KeyError, TypeError, ValueError):
                raise InputError(f"{csv_path}:{lineno}: bad row") from None
            if not 1 <= b <= T or c < 0:
                raise InputError(f"{csv_path}:{lineno}: bin out of range or negative count")
            dense.setdefault(row["id"], np.zeros(T, dtype=np.int64))[b - 1] += c
    return {mid: BinnedSeries(mid, g, arr) for mid, arr in dense.items()}, meta


def write_average(avg: AverageSeries, path: Path | str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin", "q"])
        for i, v in enumerate(avg.values.tolist(), start=1):
            w.writerow([i, repr(v)])
    dump_json(
        {"granularity": avg.granularity_seconds, "n_messages": avg.n_messages, "horizon_bins": avg.horizon_bins},
        Path(path).with_suffix(".json"),
    )


def read_average(path: Path | str, granularity: int | None = None) -> AverageSeries:
    path = Path(path)
    meta_path = path.with_suffix(".json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    values = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):
            try:
                if int(row["bin"]) != lineno - 1:
                    raise InputError(f"{path}:{lineno}: bins must be consecutive from 1")
                values.append(float(row["q"]))
            except (KeyError, TypeError, ValueError):
                raise InputError(f"{path}:{lineno}: bad row") from None
    g = granularity or meta.get("granularity")
    if g is None:
        raise InputError(f"{path}: granularity unknown; pass --granularity or keep the sidecar")
    return AverageSeries(int(g), values, int(meta.get("n_messages", 0)))


def _beta_out(beta: float):
    return None if beta == -math.inf else beta


def _beta_in(value):
    return -math.inf if value is None else float(value)


def model_to_dict(model: ADModel) -> dict:
    s = model.shape
    return {
        "method": "ad",
        "p_m": s.p_m,
        "k_a": s.k_a,
        "h_a": s.h_a,
        "k_d": s.k_d,
        "h_d": s.h_d,
        "alpha": model.cal.alpha,
        "beta": _beta_out(model.cal.beta),
        "granularity_seconds": model.granularity_seconds,
        "shape_peak_bin": model.shape_peak_bin,
        "t_known_bins": model.t_known_bins,
        "horizon_bins": model.horizon_bins,
    }


def model_from_dict(d: dict) -> ADModel:
    try:
        shape = BiHillParams(d["p_m"], d["k_a"], d["h_a"], d["k_d"], d["h_d"])
        cal = Calibration(float(d["alpha"]), _beta_in(d["beta"]))
        return ADModel(
            shape,
            int(d["shape_peak_bin"]),
            cal,
            int(d["granularity_seconds"]),
            int(d["t_known_bins"]),
            int(d["horizon_bins"]),
        )
    except KeyError as exc:
        raise InputError(f"model JSON missing field {exc}") from None


def profile_to_dict(profile: LogGrowthProfile) -> dict:
    return {
        "method": "baseline",
        "granularity_seconds": profile.granularity_seconds,
        "t1_bins": profile.t1_bins,
        "horizon_bins": profile.horizon_bins,
        "n_train": profile.n_train,
        "cumulative_log_growth": profile.growth.tolist(),
    }


def profile_from_dict(d: dict) -> LogGrowthProfile:
    return LogGrowthProfile(
        int(d["granularity_seconds"]),
        int(d["t1_bins"]),
        int(d["horizon_bins"]),
        d["cumulative_log_growth"],
        int(d["n_train"]),
    )


def save_model(model, path: Path | str) -> None:
    if isinstance(model, ADModel):
        dump_json(model_to_dict(model), path)
    elif isinstance(model, LogGrowthProfile):
        dump_json(profile_to_dict(model), path)
    else:
        raise TypeError(f"cannot save {type(model).__name__}")


def load_model(path: Path | str):
    d = json.loads(Path(path).read_text())
    if d.get("method", "ad") == "baseline":
        return profile_from_dict(d)
    return model_from_dict(d)
