"""Batch command-line front end.

Subcommands wire the pipeline end to end: ``extract`` turns station
archives into the 59-column feature matrix, ``pca``/``corr`` analyze
it, ``cluster`` partitions stations with the contrast forest,
``interpolate`` paints cluster labels on a coordinate grid, and
``report`` emits plot-ready summary CSVs.

Conventions shared by every command:

* a plain-text ``key = value`` config file (``--config``) may supply any
  flag; explicit command-line flags win;
* randomized stages require an explicit ``--seed`` — there is no hidden
  entropy, so a rerun with the same inputs and seed reproduces every
  output byte for byte;
* outputs are written atomically (temp file + rename): a failing run
  never leaves a partial artifact;
* next to each artifact a ``<name>.params.json`` sidecar records the
  tool version and the exact parameter snapshot;
* exit codes: 0 success, 2 usage error, 3 data error, 4 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import traceback
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .cluster_spatial import (
    rank_features_for_clustering,
    spatial_interpolate,
    unsupervised_cluster,
    write_clusters_csv,
    write_grid_geojson,
    write_importance_csv,
)
from .errors import HydrofeatError, MalformedLineError
from .extractor import FeatureMatrix, extract_batch, impute_missing
from .ingest import (
    aggregate_daily_to_monthly,
    parse_ghcnm_dat,
    parse_long_csv,
    parse_station_metadata,
    quality_screen,
    select_complete_window,
)
from .series import TimeSeries
from .statlearn import (
    autoscale,
    correlation_report,
    pca,
    write_corr_csv,
    write_pca_json,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4


class UsageError(Exception):
    """Bad flag/config combination detected after parsing."""


# flag value coercions used when a config file supplies the value as text
def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"cannot read {text!r} as a boolean")


_COERCE = {
    "seed": int,
    "threads": int,
    "k": int,
    "trees": int,
    "period": int,
    "window_years": int,
    "bins": int,
    "grid": float,
    "keep_qc_flagged": _parse_bool,
    "no_quality_screen": _parse_bool,
}

_DEFAULTS = {
    "extract": {
        "format": None,
        "element": "TAVG",
        "period": 12,
        "window_years": 40,
        "threads": 1,
        "keep_qc_flagged": False,
        "no_quality_screen": False,
    },
    "pca": {},
    "corr": {},
    "cluster": {"k": 5, "trees": 5000, "threads": 1},
    "interpolate": {"grid": 0.5, "trees": 5000, "threads": 1},
    "report": {
        "format": None,
        "element": "TAVG",
        "period": 12,
        "window_years": 40,
        "bins": 30,
        "keep_qc_flagged": False,
        "no_quality_screen": False,
    },
}

_REQUIRED = {
    "extract": ["input", "format", "seed", "out"],
    "pca": ["input", "out"],
    "corr": ["input", "out"],
    "cluster": ["input", "seed", "out"],
    "interpolate": ["clusters", "seed", "out"],
    "report": ["features", "out_dir"],
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hydrofeat",
        description="Feature extraction and unsupervised typing of monthly station records.",
    )
    parser.add_argument("--version", action="version", version=f"hydrofeat {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="key = value file supplying defaults for any flag")

    p = sub.add_parser("extract", help="station archive -> features.csv")
    common(p)
    p.add_argument("--input", help="station data file")
    p.add_argument("--format", choices=["ghcnm4", "csv"], help="input format")
    p.add_argument("--element", help="archive element to read (default TAVG)")
    p.add_argument("--inventory", help="station coordinate inventory (optional)")
    p.add_argument("--period", type=int, help="season length in observations (default 12)")
    p.add_argument("--window-years", type=int, dest="window_years",
                   help="complete-window length in years (default 40)")
    p.add_argument("--seed", type=int, help="master seed for randomized features")
    p.add_argument("--threads", type=int, help="worker threads (default 1)")
    p.add_argument("--keep-qc-flagged", action="store_const", const=True,
                   dest="keep_qc_flagged", help="keep quality-flagged archive values")
    p.add_argument("--no-quality-screen", action="store_const", const=True,
                   dest="no_quality_screen", help="skip automated quality screens")
    p.add_argument("--out", help="output features CSV path")

    p = sub.add_parser("pca", help="features.csv -> pca.json")
    common(p)
    p.add_argument("--input", help="features CSV from `extract`")
    p.add_argument("--out", help="output JSON path")

    p = sub.add_parser("corr", help="features.csv -> corr.csv")
    common(p)
    p.add_argument("--input", help="features CSV from `extract`")
    p.add_argument("--out", help="output CSV path")

    p = sub.add_parser("cluster", help="features.csv -> clusters.csv + importance.csv")
    common(p)
    p.add_argument("--input", help="features CSV from `extract`")
    p.add_argument("--k", type=int, help="number of clusters (default 5)")
    p.add_argument("--trees", type=int, help="forest size (default 5000)")
    p.add_argument("--seed", type=int, help="seed for the contrast forest")
    p.add_argument("--threads", type=int, help="worker threads (default 1)")
    p.add_argument("--inventory", help="station coordinate inventory (optional)")
    p.add_argument("--out", help="output clusters CSV path")
    p.add_argument("--importance-out", dest="importance_out",
                   help="feature ranking CSV (default: importance.csv next to --out)")

    p = sub.add_parser("interpolate", help="clusters.csv -> grid.geojson")
    common(p)
    p.add_argument("--clusters", help="clusters CSV from `cluster` (needs coordinates)")
    p.add_argument("--grid", type=float, help="grid step in degrees (default 0.5)")
    p.add_argument("--trees", type=int, help="forest size (default 5000)")
    p.add_argument("--seed", type=int, help="seed for the spatial forest")
    p.add_argument("--threads", type=int, help="worker threads (default 1)")
    p.add_argument("--out", help="output GeoJSON path")

    p = sub.add_parser("report", help="plot-ready summary CSVs")
    common(p)
    p.add_argument("--features", help="features CSV from `extract`")
    p.add_argument("--clusters", help="clusters CSV from `cluster` (optional)")
    p.add_argument("--input", help="raw station data for monthly stats (optional)")
    p.add_argument("--format", choices=["ghcnm4", "csv"], help="raw input format")
    p.add_argument("--element", help="archive element to read (default TAVG)")
    p.add_argument("--period", type=int, help="season length (default 12)")
    p.add_argument("--window-years", type=int, dest="window_years",
                   help="complete-window length in years (default 40)")
    p.add_argument("--keep-qc-flagged", action="store_const", const=True,
                   dest="keep_qc_flagged", help="keep quality-flagged archive values")
    p.add_argument("--no-quality-screen", action="store_const", const=True,
                   dest="no_quality_screen", help="skip automated quality screens")
    p.add_argument("--bins", type=int, help="histogram bin count (default 30)")
    p.add_argument("--out-dir", dest="out_dir", help="directory for report CSVs")

    return parser


def _read_config(path: str) -> dict:
    values = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                stripped = line.strip()
                if not stripped or stripped.startswith("#"):
                    continue
                if "=" not in stripped:
                    raise UsageError(
                        f"{path}:{lineno}: expected key = value, got {stripped!r}"
                    )
                key, _, value = stripped.partition("=")
                values[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    return values


def _merge_options(args: argparse.Namespace) -> dict:
    """Layer flag values over config-file values over hard defaults."""
    options = dict(vars(args))
    command = options.pop("command")
    config_path = options.pop("config", None)
    config = _read_config(config_path) if config_path else {}

    for key, raw in config.items():
        if key not in options:
            continue  # keys for other subcommands are allowed in one file
        if options[key] is None:
            coerce = _COERCE.get(key, str)
            try:
                options[key] = coerce(raw)
            except (ValueError, UsageError) as exc:
                raise UsageError(f"config value {key} = {raw!r}: {exc}") from None
    for key, value in _DEFAULTS[command].items():
        if options.get(key) is None:
            options[key] = value
    missing = [k for k in _REQUIRED[command] if options.get(k) is None]
    if missing:
        flags = ", ".join("--" + k.replace("_", "-") for k in missing)
        raise UsageError(f"hydrofeat {command}: missing required flags: {flags}")
    options["command"] = command
    return options


@contextmanager
def _atomic_path(final):
    """Yield a temp path; rename over `final` only if the block succeeds."""
    final = Path(final)
    tmp = final.with_name(final.name + f".tmp{os.getpid()}")
    try:
        yield tmp
        os.replace(tmp, final)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


def _write_sidecar(out_path, command: str, options: dict) -> None:
    parameters = {
        k: v for k, v in sorted(options.items()) if k != "command" and v is not None
    }
    payload = {
        "tool": "hydrofeat",
        "version": __version__,
        "command": command,
        "parameters": parameters,
    }
    sidecar = Path(str(out_path) + ".params.json")
    with _atomic_path(sidecar) as tmp:
        with open(tmp, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _load_series(options: dict) -> tuple[list[TimeSeries], dict]:
    """Parse, aggregate, window-select and screen the input archive."""
    fmt = options["format"]
    if fmt == "ghcnm4":
        records = parse_ghcnm_dat(
            options["input"],
            element=options["element"],
            keep_qc_flagged=options["keep_qc_flagged"],
        )
    elif fmt == "csv":
        records = parse_long_csv(options["input"])
    else:
        raise UsageError(f"unknown input format {fmt!r}")

    counts = {
        "parsed": len(records),
        "aggregation_disqualified": 0,
        "no_complete_window": 0,
        "screened_out": 0,
        "kept": 0,
    }
    screen_reasons: dict[str, list[str]] = {}
    series: list[TimeSeries] = []
    for record in records:
        if record.resolution == "daily":
            record = aggregate_daily_to_monthly(record)
            if record is None:
                counts["aggregation_disqualified"] += 1
                continue
        ts = select_complete_window(record, options["window_years"])
        if ts is None:
            counts["no_complete_window"] += 1
            continue
        if options["period"] != 12:
            ts = TimeSeries(
                ts.values, period=options["period"], id=ts.id, start=ts.start
            )
        if not options["no_quality_screen"]:
            reasons = quality_screen(ts)
            if reasons:
                counts["screened_out"] += 1
                screen_reasons[ts.id] = reasons
                continue
        series.append(ts)
    counts["kept"] = len(series)
    return series, {"counts": counts, "screen_reasons": screen_reasons}


def cmd_extract(options: dict) -> int:
    series, summary = _load_series(options)
    counts = summary["counts"]
    if not series:
        print(
            "error: no series survived completeness rules "
            f"({counts})",
            file=sys.stderr,
        )
        return EXIT_DATA
    matrix = extract_batch(series, seed=options["seed"], parallelism=options["threads"])
    with _atomic_path(options["out"]) as tmp:
        matrix.write_csv(tmp)
    _write_sidecar(options["out"], "extract", options)
    failures = matrix.meta.get("failures", {})
    print(
        f"extracted {len(series)} of {counts['parsed']} stations "
        f"({counts['no_complete_window']} without a complete window, "
        f"{counts['aggregation_disqualified']} too gappy, "
        f"{counts['screened_out']} screened out); "
        f"{len(failures)} series have missing features"
    )
    return EXIT_OK


def cmd_pca(options: dict) -> int:
    matrix = FeatureMatrix.read_csv(options["input"])
    scaled = autoscale(impute_missing(matrix))
    result = pca(scaled)
    with _atomic_path(options["out"]) as tmp:
        write_pca_json(result, tmp, version=__version__)
    _write_sidecar(options["out"], "pca", options)
    shown = ", ".join(f"{v:.1%}" for v in result.variance_explained[:3])
    print(f"pca on {scaled.values.shape[0]} stations x {len(scaled.names)} features; "
          f"first components explain {shown}")
    return EXIT_OK


def cmd_corr(options: dict) -> int:
    matrix = FeatureMatrix.read_csv(options["input"])
    # standardizing changes no correlation, and autoscale drops the
    # constant columns a correlation is undefined for
    scaled = autoscale(impute_missing(matrix))
    report = correlation_report(scaled)
    with _atomic_path(options["out"]) as tmp:
        write_corr_csv(report, tmp)
    _write_sidecar(options["out"], "corr", options)
    dropped = scaled.meta.get("autoscale", {}).get("dropped", [])
    note = f" ({len(dropped)} constant features dropped)" if dropped else ""
    print(f"correlation report over {len(report.names)} features{note}")
    return EXIT_OK


def cmd_cluster(options: dict) -> int:
    matrix = impute_missing(FeatureMatrix.read_csv(options["input"]))
    assignment = unsupervised_cluster(
        matrix,
        k=options["k"],
        n_trees=options["trees"],
        seed=options["seed"],
        parallelism=options["threads"],
    )
    coords = {}
    if options.get("inventory"):
        meta = parse_station_metadata(options["inventory"])
        coords = {sid: (lat, lon) for sid, (lat, lon, _) in meta.items()}
    with _atomic_path(options["out"]) as tmp:
        write_clusters_csv(assignment, coords, tmp)
    _write_sidecar(options["out"], "cluster", options)

    importance_out = options.get("importance_out") or str(
        Path(options["out"]).parent / "importance.csv"
    )
    ranked = rank_features_for_clustering(matrix, assignment)
    with _atomic_path(importance_out) as tmp:
        write_importance_csv(ranked, tmp)
    _write_sidecar(importance_out, "cluster", options)

    sizes = {c: int(np.sum(assignment.labels == c)) for c in range(1, assignment.k + 1)}
    print(f"clustered {len(assignment.ids)} stations into {assignment.k} groups {sizes}")
    return EXIT_OK


def _read_clusters_csv(path) -> list[tuple[str, float | None, float | None, int]]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["id", "lat", "lon", "label"]:
            raise MalformedLineError(
                f"{path}: expected header id,lat,lon,label, got {header}", 1
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise MalformedLineError(
                    f"{path}:{lineno}: expected 4 fields, got {len(row)}", lineno
                )
            sid, lat_s, lon_s, label_s = row
            try:
                lat = float(lat_s) if lat_s else None
                lon = float(lon_s) if lon_s else None
                label = int(label_s)
            except ValueError:
                raise MalformedLineError(
                    f"{path}:{lineno}: unreadable row {row}", lineno
                ) from None
            rows.append((sid, lat, lon, label))
    return rows


def cmd_interpolate(options: dict) -> int:
    rows = _read_clusters_csv(options["clusters"])
    stations = [
        (lat, lon, label) for _, lat, lon, label in rows
        if lat is not None and lon is not None
    ]
    skipped = len(rows) - len(stations)
    grid = spatial_interpolate(
        stations,
        grid_step=options["grid"],
        n_trees=options["trees"],
        seed=options["seed"],
        parallelism=options["threads"],
    )
    with _atomic_path(options["out"]) as tmp:
        write_grid_geojson(grid, tmp)
    _write_sidecar(options["out"], "interpolate", options)
    note = f" ({skipped} stations without coordinates skipped)" if skipped else ""
    print(
        f"interpolated {len(stations)} stations onto a "
        f"{grid.labels.shape[0]}x{grid.labels.shape[1]} grid{note}"
    )
    return EXIT_OK


def _quartile_row(values: np.ndarray) -> list[str]:
    qs = np.percentile(values, [0, 25, 50, 75, 100])
    return [repr(float(q)) for q in qs] + [str(values.size)]


def cmd_report(options: dict) -> int:
    matrix = FeatureMatrix.read_csv(options["features"])
    out_dir = Path(options["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    # per-feature histogram bins
    with _atomic_path(out_dir / "histograms.csv") as tmp:
        with open(tmp, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["feature", "bin_left", "bin_right", "count"])
            for j, name in enumerate(matrix.names):
                col = matrix.values[:, j]
                finite = col[np.isfinite(col)]
                if finite.size == 0:
                    continue
                counts, edges = np.histogram(finite, bins=options["bins"])
                for i, count in enumerate(counts):
                    writer.writerow(
                        [name, repr(float(edges[i])), repr(float(edges[i + 1])), int(count)]
                    )
    written.append("histograms.csv")

    labels = None
    if options.get("clusters"):
        label_of = {
            sid: label for sid, _, _, label in _read_clusters_csv(options["clusters"])
        }
        missing_ids = [sid for sid in matrix.ids if sid not in label_of]
        if missing_ids:
            raise HydrofeatError(
                f"clusters file lacks labels for {len(missing_ids)} stations "
                f"(first: {missing_ids[0]!r})"
            )
        labels = np.array([label_of[sid] for sid in matrix.ids])

    if labels is not None:
        with _atomic_path(out_dir / "cluster_feature_stats.csv") as tmp:
            with open(tmp, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(
                    ["cluster", "feature", "min", "q1", "median", "q3", "max", "n"]
                )
                for c in sorted(set(labels.tolist())):
                    block = matrix.values[labels == c]
                    for j, name in enumerate(matrix.names):
                        finite = block[:, j][np.isfinite(block[:, j])]
                        if finite.size == 0:
                            continue
                        writer.writerow([c, name] + _quartile_row(finite))
        written.append("cluster_feature_stats.csv")

    if labels is not None and options.get("input"):
        if not options.get("format"):
            raise UsageError("report --input needs --format")
        series, _ = _load_series(options)
        label_of = dict(zip(matrix.ids, labels.tolist()))
        pooled: dict[tuple[int, int], list[np.ndarray]] = {}
        for ts in series:
            label = label_of.get(ts.id)
            if label is None:
                continue
            months = (ts.start[1] - 1 + np.arange(len(ts))) % 12 + 1
            for month in range(1, 13):
                pooled.setdefault((label, month), []).append(
                    ts.values[months == month]
                )
        with _atomic_path(out_dir / "cluster_monthly_stats.csv") as tmp:
            with open(tmp, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(
                    ["cluster", "month", "min", "q1", "median", "q3", "max", "n"]
                )
                for (label, month) in sorted(pooled):
                    values = np.concatenate(pooled[(label, month)])
                    writer.writerow([label, month] + _quartile_row(values))
        written.append("cluster_monthly_stats.csv")

    _write_sidecar(out_dir / "report", "report", options)
    print(f"wrote {', '.join(written)} to {out_dir}")
    return EXIT_OK


_COMMANDS = {
    "extract": cmd_extract,
    "pca": cmd_pca,
    "corr": cmd_corr,
    "cluster": cmd_cluster,
    "interpolate": cmd_interpolate,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        options = _merge_options(args)
        return _COMMANDS[options["command"]](options)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (HydrofeatError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
