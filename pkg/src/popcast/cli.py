"""Command-line entry point: ``popcast <subcommand> [options]``.

Every time quantity on the command line is in seconds.  Options may also be
supplied through ``--config`` (a flat YAML or JSON mapping whose keys are the
long option names, with dashes or underscores); explicit flags win.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import yaml

from . import io
from .baseline import baseline_predict, fit_baseline
from .experiment import PRESET_GRANULARITIES, ExperimentConfig, evaluate_predictions, long_rows, run_sweep
from .fitting import fit_bihill, r_index_route
from .ingest import average, bin_events, normalize
from .model import normalize_shape
from .predictor import ADModel, TrainConfig, chronological_split, classify_peak, predict_message, train_from_series
from .synth import PRESETS, generate, generate_counts, preset

log = logging.getLogger("popcast")

DEFAULTS = {
    "horizon": 7 * 24 * 3600,
    "split": 0.75,
    "method": None,
    "seed": 0,
    "out_dir": ".",
    "tic_variant": "standard",
    "route": "nonlinear_ls",
    "weight": "none",
    "jobs": 1,
}


class CommandError(RuntimeError):
    pass


def _int_list(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    if isinstance(text, (int, float)):
        return [int(text)]
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    data = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(data, dict):
        raise CommandError(f"{path}: config must be a flat key-value mapping")
    out = {}
    for key, value in data.items():
        if isinstance(value, dict):
            raise CommandError(f"{path}: nested key {key!r}; config must be flat")
        out[str(key).replace("-", "_")] = value
    return out


def _resolve(args: argparse.Namespace) -> argparse.Namespace:
    """Merge built-in defaults < config file < explicit flags."""
    config = _load_config(getattr(args, "config", None))
    merged = dict(DEFAULTS)
    merged.update(config)
    for key, value in vars(args).items():
        if value is not None:
            merged[key] = value
        else:
            merged.setdefault(key, None)
    for key in ("granularity", "t_known"):
        if merged.get(key) is not None:
            merged[key] = _int_list(merged[key])
    return argparse.Namespace(**merged)


def _single(values, name: str) -> int:
    if not values:
        raise CommandError(f"--{name.replace('_', '-')} is required")
    if len(values) != 1:
        raise CommandError(f"--{name.replace('_', '-')} takes a single value for this command")
    return values[0]


def _out_dir(args) -> Path:
    path = Path(args.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_log(args):
    """Zero-based event log plus release times (``None`` when zero-based)."""
    if not args.events:
        raise CommandError("--events is required")
    raw, releases = io.read_events(args.events, args.releases, args.zero_based)
    if releases is None:
        return raw, None, 0
    norm = normalize(raw, releases)
    for mid, why in sorted(norm.rejected.items()):
        log.warning("message %s rejected: %s", mid, why)
    if norm.dropped_pre_release:
        log.warning("dropped %d events earlier than their release", norm.dropped_pre_release)
    kept = {m: releases[m] for m in norm.log.names}
    return norm.log, kept, norm.dropped_pre_release


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x) -> str:
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(float(x))
    return str(x)


# subcommands -----------------------------------------------------------------


def cmd_synth(args) -> int:
    out = _out_dir(args)
    overrides = {"n_messages": args.n_messages or 1000, "rng_seed": args.seed}
    if args.noise_floor is not None:
        overrides["noise_floor"] = args.noise_floor
    cfg = preset(args.preset, **overrides)
    result = generate(cfg)
    io.write_events_jsonl(result.log, result.release_times, out / "events.jsonl")
    expected = result.expected_totals()
    _write_csv(
        out / "ground_truth.csv",
        ["id", "release", "q_max", "expected_total", "realized_total"],
        [
            [mid, result.release_times[mid], repr(float(result.q_max[i])), repr(float(expected[i])), int(result.counts[i].sum())]
            for i, mid in enumerate(result.message_ids)
        ],
    )
    _write_csv(
        out / "ground_truth_shape.csv",
        ["bin", "unit_shape", "noise_floor"],
        [[i + 1, repr(float(v)), repr(cfg.noise_floor)] for i, v in enumerate(result.unit_shape)],
    )
    meta = {
        "preset": args.preset,
        "n_messages": cfg.n_messages,
        "granularity_seconds": cfg.granularity_seconds,
        "horizon_bins": cfg.horizon_bins,
        "log_mean": cfg.log_mean,
        "log_sigma": cfg.log_sigma,
        "noise_floor": cfg.noise_floor,
        "rng_seed": cfg.rng_seed,
        "shape": {k: getattr(cfg.shape, k) for k in ("p_m", "k_a", "h_a", "k_d", "h_d")},
        "n_events": len(result.log),
    }
    io.dump_json(meta, out / "synth.json")
    print(f"wrote {len(result.log)} events for {cfg.n_messages} messages to {out}")
    return 0


def cmd_ingest(args) -> int:
    g = _single(args.granularity, "granularity")
    if args.horizon % g:
        raise CommandError("horizon must be a multiple of the granularity")
    T = args.horizon // g
    log_, releases, dropped = _load_log(args)
    binned = bin_events(log_, g, T)
    out = _out_dir(args)
    meta = {
        "granularity": g,
        "horizon_bins": T,
        "n_messages": len(log_.names),
        "dropped_pre_release": dropped,
        "excluded_post_horizon": binned.excluded_post_horizon,
        "message_ids": list(log_.names),
    }
    io.write_binned(binned.series, meta, out)
    io.write_average(average(binned.series.values()), out / "average.csv")
    print(f"binned {len(log_)} events for {len(log_.names)} messages at {g}s x {T} bins")
    return 0


def cmd_fit(args) -> int:
    if not args.average:
        raise CommandError("--average is required")
    g = args.granularity[0] if args.granularity else None
    avg = io.read_average(args.average, g)
    if args.route == "r_index_regression":
        report = r_index_route(avg.values)
    else:
        report = fit_bihill(avg, weight=args.weight)
    horizon_bins = avg.horizon_bins
    _, peak_bin = normalize_shape(report.params, horizon_bins)
    out = _out_dir(args)
    p = report.params
    io.dump_json(
        {
            "p_m": p.p_m,
            "k_a": p.k_a,
            "h_a": p.h_a,
            "k_d": p.k_d,
            "h_d": p.h_d,
            "alpha": 1.0,
            "beta": None,
            "granularity_seconds": avg.granularity_seconds,
            "shape_peak_bin": peak_bin,
            "calibrated": False,
        },
        out / "params.json",
    )
    io.dump_json(report.to_dict(), out / "fit_report.json")
    print(f"fit route={report.route} rss={report.rss:.6g} converged={report.converged}")
    return 0 if report.converged else 3


def cmd_train(args) -> int:
    g = _single(args.granularity, "granularity")
    tk = _single(args.t_known, "t_known")
    tc = TrainConfig(g, tk, args.horizon, args.split, args.route, args.weight)
    log_, releases, _ = _load_log(args)
    binned = bin_events(log_, g, tc.horizon_bins)
    rel = releases if releases is not None else {m: 0 for m in log_.names}
    train_ids, test_ids = chronological_split(rel, args.split)
    train = [binned.series[m] for m in train_ids]
    out = _out_dir(args)
    method_choice = args.method or "ad"
    methods = ("ad", "baseline") if method_choice == "both" else (method_choice,)
    for method in methods:
        if method == "ad":
            model, report = train_from_series(train, tc)
            io.save_model(model, out / "model.json")
            io.dump_json(report.to_dict(), out / "fit_report.json")
        else:
            profile = fit_baseline(train, tc.t_known_bins, tc.horizon_bins)
            io.save_model(profile, out / "baseline.json")
    io.dump_json({"train": list(train_ids), "test": list(test_ids)}, out / "split.json")
    print(f"trained {', '.join(methods)} on {len(train_ids)} messages; {len(test_ids)} held out")
    return 0


def cmd_predict(args) -> int:
    if not args.model:
        raise CommandError("--model is required")
    model = io.load_model(args.model)
    method = "ad" if isinstance(model, ADModel) else "baseline"
    if args.method not in (None, "both") and args.method != method and "method" in args.explicit:
        raise CommandError(f"--method {args.method} does not match the {method} model file")
    g = model.granularity_seconds
    T = model.horizon_bins
    t_known = model.t_known_bins if method == "ad" else model.t1_bins
    log_, _, _ = _load_log(args)
    series = bin_events(log_, g, T).series
    ids = sorted(series)
    if args.ids:
        wanted = json.loads(Path(args.ids).read_text())
        wanted = wanted.get("test", wanted) if isinstance(wanted, dict) else wanted
        ids = sorted(set(wanted) & set(ids))
    header = ["id", "known_sum", "predicted_total"]
    if args.with_truth:
        header += ["real_total", "ape", "peak_class"]
    rows = []
    for mid in ids:
        s = series[mid]
        known = int(s.counts[:t_known].sum())
        if method == "ad":
            rec = predict_message(model, s, with_truth=args.with_truth)
            predicted, peak = rec.predicted_total, rec.peak_class.value
        else:
            predicted = baseline_predict(model, s, T)
            peak = classify_peak(s, t_known, T).value if args.with_truth else None
        row = [mid, known, repr(float(predicted))]
        if args.with_truth:
            real = s.total
            ape = "" if real == 0 else repr(abs(predicted - real) / real)
            row += [real, ape, peak]
        rows.append(row)
    out = _out_dir(args)
    _write_csv(out / "predictions.csv", header, rows)
    io.dump_json(
        {"method": method, "granularity_seconds": g, "t_known_seconds": t_known * g, "horizon_seconds": T * g},
        out / "predictions.json",
    )
    print(f"predicted {len(rows)} messages with the {method} model")
    return 0


def cmd_evaluate(args) -> int:
    if not args.predictions:
        raise CommandError("--predictions is required")
    path = Path(args.predictions)
    ids, pred, real = [], [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "real_total" not in reader.fieldnames:
            raise CommandError(f"{path}: evaluation needs a real_total column (predict --with-truth)")
        for row in reader:
            ids.append(row["id"])
            pred.append(float(row["predicted_total"]))
            real.append(float(row["real_total"]))
    summary = evaluate_predictions(ids, pred, real)
    payload = summary.to_dict()
    payload["tic"] = summary.tic(args.tic_variant)
    payload["tic_variant"] = args.tic_variant
    meta_path = path.with_suffix(".json")
    if meta_path.exists():
        payload["cell"] = json.loads(meta_path.read_text())
    out = _out_dir(args)
    io.dump_json(payload, out / "summary.json")
    rows = []
    for m, p, r in zip(ids, pred, real):
        rows.append([m, repr(p), _fmt(r), "" if r == 0 else repr(abs(p - r) / r)])
    _write_csv(out / "per_message.csv", ["id", "predicted", "real", "ape"], rows)
    print(f"MAPE={summary.mape:.4f} TIC({args.tic_variant})={payload['tic']:.4f} n={summary.n_evaluated}")
    return 0


def cmd_report(args) -> int:
    if not args.summaries:
        raise CommandError("report needs one or more summary.json files")
    rows = []
    for p in args.summaries:
        d = json.loads(Path(p).read_text())
        cell = d.get("cell", {})
        g = cell.get("granularity_seconds", "")
        tk = cell.get("t_known_seconds", "")
        method = cell.get("method", "")
        metrics = {
            "mape": d["mape"],
            "tic_standard": d["tic_standard"],
            "tic_as_written": d["tic_as_written"],
            "n_evaluated": d["n_evaluated"],
            "n_excluded_zero_real": d["n_excluded_zero_real"],
        }
        for level, value in d["ape_percentiles"].items():
            metrics[f"ape_p{level}"] = value
        for name in sorted(metrics):
            rows.append((g, tk, method, name, metrics[name]))
    rows.sort(key=lambda r: tuple(str(x) for x in r[:4]))
    out = _out_dir(args)
    _write_csv(out / "report.csv", ["granularity_seconds", "t_known_seconds", "method", "metric", "value"], [[*r[:4], _fmt(r[4])] for r in rows])
    print(f"wrote {len(rows)} rows to {out / 'report.csv'}")
    return 0


def cmd_sweep(args) -> int:
    grans = args.granularity
    if args.granularity_preset:
        grans = list(PRESET_GRANULARITIES[args.granularity_preset])
    if not grans or not args.t_known:
        raise CommandError("sweep needs --granularity (or --granularity-preset) and --t-known")
    config = ExperimentConfig(
        granularities=tuple(grans),
        t_known_seconds=tuple(args.t_known),
        horizon_seconds=args.horizon,
        split_fraction=args.split,
        method=args.method or "both",
        tic_variant=args.tic_variant,
        fit_route=args.route,
        weight=args.weight,
        jobs=args.jobs,
    )
    if args.synth_preset:
        cfg = preset(args.synth_preset, n_messages=args.n_messages or 1000, rng_seed=args.seed)
        synth = generate_counts(cfg)
        result = run_sweep(
            list(synth.message_ids),
            synth.release_times,
            config,
            base_counts=synth.counts,
            base_granularity=cfg.granularity_seconds,
        )
    else:
        log_, releases, _ = _load_log(args)
        result = run_sweep(log_, releases, config)
    out = _out_dir(args)
    _write_csv(
        out / "report.csv",
        ["granularity_seconds", "t_known_seconds", "method", "metric", "value"],
        [[*r[:4], _fmt(r[4])] for r in long_rows(result)],
    )
    peak_rows, scatter_rows = [], []
    for c in result.cells:
        if not c.ok:
            continue
        split = c.peak_split()
        peak_rows.append(
            [c.granularity_seconds, c.t_known_seconds, c.method, _fmt(split["mape_real_peak"]), _fmt(split["mape_fake_peak"]), split["n_real_peak"], split["n_fake_peak"]]
        )
        for i, mid in enumerate(c.message_ids):
            r = int(c.real[i])
            p = float(c.predicted[i])
            scatter_rows.append(
                [c.granularity_seconds, c.t_known_seconds, c.method, mid, int(c.known_sum[i]), r, repr(p),
                 "" if r == 0 else repr(abs(p - r) / r), "real_peak" if c.real_peak[i] else "fake_peak"]
            )
    _write_csv(out / "peak_split.csv", ["granularity_seconds", "t_known_seconds", "method", "mape_real_peak", "mape_fake_peak", "n_real_peak", "n_fake_peak"], peak_rows)
    _write_csv(out / "scatter.csv", ["granularity_seconds", "t_known_seconds", "method", "id", "known_sum", "real_total", "predicted_total", "ape", "peak_class"], scatter_rows)
    failures_path = out / "failures.json"
    if result.failures:
        io.dump_json({"failures": result.failures}, failures_path)
        print(f"{len(result.failures)} of {len(result.cells)} cells failed; see {failures_path}", file=sys.stderr)
        return 2
    if failures_path.exists():
        failures_path.unlink()
    print(f"sweep finished: {len(result.cells)} cells, results in {out}")
    return 0


# parser ----------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, *, events=False, timing=False) -> None:
    p.add_argument("--config", help="flat YAML/JSON file of option defaults")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("-v", "--verbose", action="store_true", default=None)
    if events:
        p.add_argument("--events", help="JSONL or CSV event log")
        p.add_argument("--releases", help="CSV id,release when the log has no release field")
        p.add_argument("--zero-based", dest="zero_based", action="store_true", default=None,
                       help="timestamps are already relative to release")
    if timing:
        p.add_argument("--granularity", type=_int_list, help="bin width(s) in seconds, comma-separated")
        p.add_argument("--t-known", dest="t_known", type=_int_list, help="known window(s) in seconds")
        p.add_argument("--horizon", type=int, help="prediction horizon in seconds (default 7 days)")
        p.add_argument("--split", type=float, help="training fraction by release time (default 0.75)")
        p.add_argument("--method", choices=("ad", "baseline", "both"))
        p.add_argument("--tic-variant", dest="tic_variant", choices=("standard", "as_written"))
        p.add_argument("--route", choices=("nonlinear_ls", "r_index_regression"))
        p.add_argument("--weight", choices=("none", "inverse-variance"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="popcast", description="Activation-decay popularity prediction")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic event log with ground truth")
    _common(p)
    p.add_argument("--preset", choices=sorted(PRESETS), default="wechat")
    p.add_argument("--n-messages", dest="n_messages", type=int)
    p.add_argument("--noise-floor", dest="noise_floor", type=float)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="normalize and bin an event log")
    _common(p, events=True, timing=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("fit", help="fit the BiHill shape to an average-series CSV")
    _common(p, timing=True)
    p.add_argument("--average", help="average.csv written by ingest")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("train", help="train the AD model and/or the baseline")
    _common(p, events=True, timing=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict totals from a trained model")
    _common(p, events=True, timing=True)
    p.add_argument("--model", help="model.json or baseline.json")
    p.add_argument("--ids", help="JSON list of ids, or split.json (uses its 'test' list)")
    p.add_argument("--with-truth", dest="with_truth", action="store_true", default=None,
                   help="events cover the full horizon; add real_total, ape, peak_class")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="APE/MAPE/TIC summary of a predictions CSV")
    _common(p, timing=True)
    p.add_argument("--predictions", help="predictions.csv with real_total")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="long-format CSV from evaluate summaries")
    _common(p)
    p.add_argument("summaries", nargs="*", help="summary.json files")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("sweep", help="train and evaluate over granularity x t_known cells")
    _common(p, events=True, timing=True)
    p.add_argument("--granularity-preset", dest="granularity_preset", choices=sorted(PRESET_GRANULARITIES))
    p.add_argument("--synth-preset", dest="synth_preset", choices=sorted(PRESETS),
                   help="sweep an in-memory synthetic corpus instead of --events")
    p.add_argument("--n-messages", dest="n_messages", type=int)
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    raw = parser.parse_args(argv)
    explicit = {k for k, v in vars(raw).items() if v is not None}
    try:
        args = _resolve(raw)
        args.explicit = explicit
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except (CommandError, io.InputError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"popcast {raw.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
