"""Feature extraction orchestration.

`extract_all` turns one series into the fixed 59-feature vector; failures of
individual features become masked entries, never exceptions.  `extract_batch`
maps extraction over a collection with deterministic per-series seeding, so
results do not depend on the parallelism degree.  `impute_missing` fills
masked entries with column medians for downstream learners.
"""

from __future__ import annotations

import csv
import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import (
    AllMissingColumnError,
    DuplicateStationError,
    HydrofeatError,
    SchemaMismatchError,
)
from .features.correlation import (
    acf_suite,
    embed2_incircle,
    localsimple_tau,
    motiftwo_entro3,
    pacf_suite,
    spreadrandomlocal,
    trev_num,
    walker_propcross,
)
from .features.distribution import (
    crossing_points,
    flat_spots,
    fluctanal_prop_r1,
    histogram_mode_10,
    outlierinclude_mdrmd,
    sampen_first,
    spectral_entropy,
    std1st_der,
)
from .features.model import (
    _HW_STARTS,
    heterogeneity_suite,
    holt_winters_params,
    hurst_arfima,
    kpss_stat,
    nonlinearity_terasvirta,
)
from .features.stl import stl_feature_suite
from .features.window import shift_suite, tiled_stats
from .series import TimeSeries

__all__ = [
    "FEATURE_NAMES",
    "FeatureVector",
    "FeatureMatrix",
    "extract_all",
    "extract_batch",
    "impute_missing",
]

#: The canonical feature names, in their fixed column order.
FEATURE_NAMES: tuple[str, ...] = (
    "x_acf1",
    "ac_9",
    "x_acf10",
    "diff1_acf1",
    "diff1_acf10",
    "diff2_acf1",
    "diff2_acf10",
    "seas_acf1",
    "firstzero_ac",
    "firstmin_ac",
    "embed2_incircle_1",
    "embed2_incircle_2",
    "trev_num",
    "motiftwo_entro3",
    "walker_propcross",
    "x_pacf5",
    "diff1x_pacf5",
    "diff2x_pacf5",
    "seas_pacf",
    "localsimple_mean1",
    "localsimple_lfitac",
    "sampen_first",
    "std1st_der",
    "spreadrandomlocal_meantaul_50",
    "spreadrandomlocal_meantaul_ac2",
    "histogram_mode_10",
    "outlierinclude_mdrmd",
    "fluctanal_prop_r1",
    "crossing_points",
    "entropy",
    "flat_spots",
    "arch_acf",
    "garch_acf",
    "arch_r2",
    "garch_r2",
    "alpha",
    "beta",
    "gamma",
    "lumpiness",
    "stability",
    "max_level_shift",
    "time_level_shift",
    "max_var_shift",
    "time_var_shift",
    "max_kl_shift",
    "time_kl_shift",
    "ARCH.LM",
    "nonlinearity",
    "unitroot_kpss",
    "hurst",
    "trend",
    "spike",
    "linearity",
    "curvature",
    "e_acf1",
    "e_acf10",
    "seasonal_strength",
    "peak",
    "trough",
)

_INDEX = {name: i for i, name in enumerate(FEATURE_NAMES)}

#: Fixed parameters recorded with every vector.
_PARAMS = {
    "stl": {"seasonal_window": 13, "trend_window": 21, "inner": 2, "outer": 0},
    "holt_winters_starts": [list(s) for s in _HW_STARTS],
    "garch_starts": [[0.05, 0.05, 0.90], [0.20, 0.10, 0.60]],
    "window_width": "period",
    "hetero_lags": 12,
}


@dataclass(frozen=True)
class FeatureVector:
    """One series' 59 features: values (NaN where missing), a validity mask
    (True exactly where the value is finite), and a parameter snapshot."""

    values: np.ndarray
    missing_mask: np.ndarray
    provenance: dict

    def __post_init__(self):
        if self.values.shape != (len(FEATURE_NAMES),):
            raise SchemaMismatchError(f"expected {len(FEATURE_NAMES)} values, got {self.values.shape}")
        if not np.array_equal(self.missing_mask, np.isfinite(self.values)):
            raise SchemaMismatchError("mask must flag exactly the finite entries")

    def as_dict(self) -> dict[str, float]:
        return {name: float(v) for name, v in zip(FEATURE_NAMES, self.values)}


@dataclass(frozen=True)
class FeatureMatrix:
    """Rows of feature vectors: ids, an (n, p) value array with NaN for
    missing entries, and batch-level metadata.

    Extraction always produces the canonical 59 columns (the default
    `names`); downstream transforms such as auto-scaling may retain a
    subset, so the column list travels with the matrix."""

    ids: tuple[str, ...]
    values: np.ndarray
    meta: dict = field(default_factory=dict)
    names: tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        object.__setattr__(self, "names", names)
        if self.values.ndim != 2 or self.values.shape[1] != len(names):
            raise SchemaMismatchError(
                f"expected shape (n, {len(names)}), got {self.values.shape}"
            )
        if len(set(names)) != len(names):
            raise SchemaMismatchError("column names must be unique")
        if len(self.ids) != self.values.shape[0]:
            raise SchemaMismatchError(
                f"{len(self.ids)} ids for {self.values.shape[0]} rows"
            )
        if len(set(self.ids)) != len(self.ids):
            raise DuplicateStationError("row ids must be unique")
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))

    @property
    def missing_mask(self) -> np.ndarray:
        return np.isfinite(self.values)

    @property
    def n_missing(self) -> int:
        return int((~np.isfinite(self.values)).sum())

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def write_csv(self, path) -> None:
        """First column `id`, then the feature names; missing entries are
        empty fields; floats use repr for exact round-trips."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("id",) + self.names)
            for sid, row in zip(self.ids, self.values):
                writer.writerow(
                    [sid] + [repr(float(v)) if math.isfinite(v) else "" for v in row]
                )

    @classmethod
    def read_csv(cls, path) -> "FeatureMatrix":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["id"] + list(FEATURE_NAMES):
                raise SchemaMismatchError(f"unexpected feature-matrix header in {path}")
            ids, rows = [], []
            for line in reader:
                ids.append(line[0])
                rows.append([float(v) if v else math.nan for v in line[1:]])
        values = (
            np.asarray(rows, dtype=float)
            if rows
            else np.empty((0, len(FEATURE_NAMES)))
        )
        return cls(ids=tuple(ids), values=values)


def schema_hash() -> str:
    """Stable digest of the column-name list; fixed across releases."""
    return hashlib.sha256(",".join(FEATURE_NAMES).encode()).hexdigest()


def extract_all(ts: TimeSeries, seed: int) -> FeatureVector:
    """Compute all 59 features of one series.

    Any feature whose computation raises a package error is reported as
    missing (NaN + mask False + reason in provenance); the call itself never
    fails for a valid TimeSeries.  Output is deterministic for fixed
    (series, seed); the seed drives only the random-segment features.
    """
    values = np.full(len(FEATURE_NAMES), np.nan)
    failures: dict[str, str] = {}
    seed = int(seed)
    seg_seeds = np.random.SeedSequence(seed).generate_state(2)

    def run(names: tuple[str, ...], compute) -> None:
        try:
            out = compute()
        except HydrofeatError as exc:
            reason = f"{type(exc).__name__}: {exc}"
            for name in names:
                failures[name] = reason
            return
        if not isinstance(out, dict):
            out = {names[0]: out}
        for name in names:
            v = float(out[name])
            values[_INDEX[name]] = v
            if not math.isfinite(v):
                failures.setdefault(name, "reported missing by its suite")

    run(FEATURE_NAMES[0:10], lambda: acf_suite(ts))
    run(("embed2_incircle_1",), lambda: embed2_incircle(ts, 1.0))
    run(("embed2_incircle_2",), lambda: embed2_incircle(ts, 2.0))
    run(("trev_num",), lambda: trev_num(ts))
    run(("motiftwo_entro3",), lambda: motiftwo_entro3(ts))
    run(("walker_propcross",), lambda: walker_propcross(ts))
    run(("x_pacf5", "diff1x_pacf5", "diff2x_pacf5", "seas_pacf"), lambda: pacf_suite(ts))
    run(("localsimple_mean1",), lambda: localsimple_tau(ts, "mean1"))
    run(("localsimple_lfitac",), lambda: localsimple_tau(ts, "lfit3"))
    run(("sampen_first",), lambda: sampen_first(ts))
    run(("std1st_der",), lambda: std1st_der(ts))
    run(
        ("spreadrandomlocal_meantaul_50",),
        lambda: spreadrandomlocal(ts, "fixed50", int(seg_seeds[0])),
    )
    run(
        ("spreadrandomlocal_meantaul_ac2",),
        lambda: spreadrandomlocal(ts, "ac2", int(seg_seeds[1])),
    )
    run(("histogram_mode_10",), lambda: histogram_mode_10(ts))
    run(("outlierinclude_mdrmd",), lambda: outlierinclude_mdrmd(ts))
    run(("fluctanal_prop_r1",), lambda: fluctanal_prop_r1(ts))
    run(("crossing_points",), lambda: crossing_points(ts))
    run(("entropy",), lambda: spectral_entropy(ts))
    run(("flat_spots",), lambda: flat_spots(ts))
    run(
        ("arch_acf", "garch_acf", "arch_r2", "garch_r2", "ARCH.LM"),
        lambda: heterogeneity_suite(ts),
    )
    run(("alpha", "beta", "gamma"), lambda: _hw_dict(ts))
    run(("lumpiness", "stability"), lambda: tiled_stats(ts))
    run(
        (
            "max_level_shift",
            "time_level_shift",
            "max_var_shift",
            "time_var_shift",
            "max_kl_shift",
            "time_kl_shift",
        ),
        lambda: shift_suite(ts),
    )
    run(("nonlinearity",), lambda: nonlinearity_terasvirta(ts))
    run(("unitroot_kpss",), lambda: kpss_stat(ts))
    run(("hurst",), lambda: hurst_arfima(ts).hurst)
    run(
        (
            "trend",
            "spike",
            "linearity",
            "curvature",
            "e_acf1",
            "e_acf10",
            "seasonal_strength",
            "peak",
            "trough",
        ),
        lambda: stl_feature_suite(ts),
    )

    provenance = {
        "seed": seed,
        "version": __version__,
        "params": _PARAMS,
        "failures": failures,
    }
    return FeatureVector(
        values=values, missing_mask=np.isfinite(values), provenance=provenance
    )


def _hw_dict(ts: TimeSeries) -> dict[str, float]:
    fit = holt_winters_params(ts)
    return {"alpha": fit.alpha, "beta": fit.beta, "gamma": fit.gamma}


def series_seed(master_seed: int, series_id: str) -> int:
    """Per-series seed derived from the master seed and the series id alone,
    so scheduling and batch composition cannot affect results."""
    digest = hashlib.sha256(f"{int(master_seed)}:{series_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def extract_batch(
    collection: list[TimeSeries], seed: int, parallelism: int = 1
) -> FeatureMatrix:
    """Extract features for every series; row order = input order.

    Per-series seeds come from `series_seed`, so the result is identical for
    any parallelism degree.  Per-feature failures are collected in
    meta["failures"] keyed by series id; a failing feature never aborts the
    batch.
    """
    ids = [ts.id for ts in collection]
    if len(set(ids)) != len(ids):
        raise DuplicateStationError("batch extraction requires unique series ids")
    if not collection:
        return FeatureMatrix(
            ids=(), values=np.empty((0, len(FEATURE_NAMES))), meta={"seed": int(seed)}
        )

    def work(ts: TimeSeries) -> FeatureVector:
        return extract_all(ts, seed=series_seed(seed, ts.id))

    with ThreadPoolExecutor(max_workers=max(1, int(parallelism))) as pool:
        vectors = list(pool.map(work, collection))

    failures = {
        ts.id: vec.provenance["failures"]
        for ts, vec in zip(collection, vectors)
        if vec.provenance["failures"]
    }
    meta = {
        "seed": int(seed),
        "version": __version__,
        "params": _PARAMS,
        "failures": failures,
    }
    return FeatureMatrix(
        ids=tuple(ids), values=np.vstack([v.values for v in vectors]), meta=meta
    )


def impute_missing(m: FeatureMatrix) -> FeatureMatrix:
    """Replace every missing entry with its column median.

    Raises AllMissingColumn when a column has no observed value at all; the
    number of imputed cells is recorded in meta["imputed"].
    """
    values = m.values.copy()
    total = 0
    for j, name in enumerate(m.names):
        col = values[:, j]
        missing = ~np.isfinite(col)
        if not missing.any():
            continue
        if missing.all():
            raise AllMissingColumnError(f"feature {name!r} has no observed values")
        col[missing] = np.median(col[~missing])
        total += int(missing.sum())
    meta = dict(m.meta)
    meta["imputed"] = total
    return FeatureMatrix(ids=m.ids, values=values, meta=meta, names=m.names)
