"""Station-data ingestion and completeness rules.

Four input paths feed the pipeline:

* fixed-width GHCN-M v4 ``.dat`` archives (monthly values for one
  element per line, twelve month slots with three flag characters each);
* the matching fixed-width station inventory (id, latitude, longitude);
* a portable long-format CSV (``id,date,value``) at monthly or daily
  resolution;
* daily records, which are aggregated to monthly means under
  completeness thresholds.

Downstream the extractor wants gap-free windows, so this module also
selects the most recent fully complete N-year span of a monthly record
and applies automated quality screens.  All parsers are streaming (per
station state only) and map malformed input to structured errors that
carry the offending line number; they never raise bare exceptions on
arbitrary bytes.
"""

from __future__ import annotations

import calendar
import csv
import datetime as dt
import io
import os
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator

import numpy as np

from .errors import (
    BadDateError,
    BadHeaderError,
    CoordinateOutOfRangeError,
    DuplicateObservationError,
    DuplicateStationError,
    EmptyRecordError,
    IngestError,
    MalformedLineError,
    UnknownElementError,
)
from .series import TimeSeries

__all__ = [
    "StationRecord",
    "parse_ghcnm_dat",
    "format_ghcnm_dat",
    "parse_station_metadata",
    "parse_long_csv",
    "attach_coordinates",
    "aggregate_daily_to_monthly",
    "select_complete_window",
    "quality_screen",
    "GHCNM_MISSING",
]

# GHCN-M v4 .dat layout (0-indexed slices of a 115-character line):
# id [0:11], year [11:15], element [15:19], then twelve groups of
# a 5-character integer value and 3 flag characters.
_GHCNM_LINE_LEN = 115
GHCNM_MISSING = -9999

# element -> (scale to physical units, units tag)
_ELEMENT_UNITS = {
    "TAVG": (0.01, "degC"),
    "TMAX": (0.01, "degC"),
    "TMIN": (0.01, "degC"),
    "PRCP": (0.1, "mm"),
}

_MONTHLY_DATE = re.compile(r"^(\d{4})-(\d{2})$")
_DAILY_DATE = re.compile(r"^(\d{4})-(\d{2})-(\d{2})$")


@dataclass(frozen=True)
class StationRecord:
    """One station's observations for a single element.

    ``observations`` holds monthly ``(year, month, value-or-None)``
    tuples in chronological order; for daily-resolution records the
    per-day values live in ``daily`` instead and ``observations`` is
    empty until aggregation.  ``raw_values`` and ``flags`` keep the
    archive's exact integer fields and flag characters so a parsed
    record can be re-serialized byte-identically.
    """

    id: str
    observations: tuple[tuple[int, int, float | None], ...] = ()
    element: str = "TAVG"
    units: str = "degC"
    latitude: float | None = None
    longitude: float | None = None
    name: str | None = None
    elevation: float | None = None
    resolution: str = "monthly"
    daily: tuple[tuple[dt.date, float | None], ...] = ()
    raw_values: dict = field(default_factory=dict, repr=False)
    flags: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.id:
            raise IngestError("station record needs a non-empty id")
        if self.resolution not in ("monthly", "daily"):
            raise IngestError(f"unknown resolution {self.resolution!r}")
        seen = set()
        for year, month, _ in self.observations:
            if not 1 <= month <= 12:
                raise IngestError(
                    f"station {self.id!r}: month {month} out of range"
                )
            if (year, month) in seen:
                raise DuplicateObservationError(
                    f"station {self.id!r}: duplicate observation {year}-{month:02d}"
                )
            seen.add((year, month))
        seen_days = set()
        for day, _ in self.daily:
            if day in seen_days:
                raise DuplicateObservationError(
                    f"station {self.id!r}: duplicate observation {day.isoformat()}"
                )
            seen_days.add(day)
        if self.latitude is not None and not -90.0 <= self.latitude <= 90.0:
            raise CoordinateOutOfRangeError(
                f"station {self.id!r}: latitude {self.latitude} out of [-90, 90]"
            )
        if self.longitude is not None and not -180.0 <= self.longitude <= 180.0:
            raise CoordinateOutOfRangeError(
                f"station {self.id!r}: longitude {self.longitude} out of [-180, 180]"
            )
        object.__setattr__(self, "observations", tuple(self.observations))
        object.__setattr__(self, "daily", tuple(self.daily))

    @property
    def n_observations(self) -> int:
        return len(self.daily) if self.resolution == "daily" else len(self.observations)


def _iter_lines(source) -> Iterator[str]:
    """Yield text lines from a path, file object, bytes, or line iterable."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            yield from fh
        return
    if isinstance(source, bytes):
        yield from io.StringIO(source.decode("utf-8"))
        return
    if hasattr(source, "read"):
        for line in source:
            yield line.decode("utf-8") if isinstance(line, bytes) else line
        return
    if isinstance(source, Iterable):
        for line in source:
            yield line.decode("utf-8") if isinstance(line, bytes) else line
        return
    raise IngestError(f"cannot read lines from {type(source).__name__}")


# ---------------------------------------------------------------------------
# GHCN-M v4 fixed-width archive


def parse_ghcnm_dat(
    source, element: str = "TAVG", *, keep_qc_flagged: bool = False
) -> list[StationRecord]:
    """Parse a GHCN-M v4 ``.dat`` stream into per-station monthly records.

    Lines for elements other than `element` are skipped.  The sentinel
    -9999 marks a missing month; remaining integer values are scaled to
    physical units (hundredths of a degree C for temperature elements,
    tenths of a millimetre for precipitation).  A month whose quality
    flag (the second flag character) is non-blank is treated as missing
    unless `keep_qc_flagged` is set; the raw integer and flags are kept
    either way so the record can be re-serialized byte-identically.
    """
    if element not in _ELEMENT_UNITS:
        known = ", ".join(sorted(_ELEMENT_UNITS))
        raise UnknownElementError(f"element {element!r} not supported (known: {known})")
    scale, units = _ELEMENT_UNITS[element]

    # per station: year -> list of 12 (raw_int, flags) pairs, insertion-ordered
    stations: dict[str, dict[int, list[tuple[int, str]]]] = {}
    for lineno, raw_line in enumerate(_iter_lines(source), start=1):
        line = raw_line.rstrip("\r\n")
        if not line.strip():
            continue
        if len(line) < _GHCNM_LINE_LEN:
            raise MalformedLineError(
                f"line {lineno}: expected {_GHCNM_LINE_LEN} characters, got {len(line)}",
                lineno,
            )
        sid = line[0:11]
        if not sid.strip():
            raise MalformedLineError(f"line {lineno}: blank station id", lineno)
        try:
            year = int(line[11:15])
        except ValueError:
            raise MalformedLineError(
                f"line {lineno}: unreadable year field {line[11:15]!r}", lineno
            ) from None
        if line[15:19] != element:
            continue
        months: list[tuple[int, str]] = []
        for k in range(12):
            start = 19 + 8 * k
            value_field = line[start : start + 5]
            flag_field = line[start + 5 : start + 8]
            try:
                value_int = int(value_field)
            except ValueError:
                raise MalformedLineError(
                    f"line {lineno}: unreadable value field {value_field!r} "
                    f"(month {k + 1})",
                    lineno,
                ) from None
            months.append((value_int, flag_field))
        years = stations.setdefault(sid, {})
        if year in years:
            raise MalformedLineError(
                f"line {lineno}: duplicate year {year} for station {sid!r}", lineno
            )
        years[year] = months

    records = []
    for sid, years in stations.items():
        observations = []
        raw_values: dict[tuple[int, int], int] = {}
        flags: dict[tuple[int, int], str] = {}
        for year in years:  # insertion order == file order
            for k, (value_int, flag_field) in enumerate(years[year]):
                month = k + 1
                raw_values[(year, month)] = value_int
                flags[(year, month)] = flag_field
                qc_flagged = flag_field[1:2].strip() != ""
                if value_int == GHCNM_MISSING or (qc_flagged and not keep_qc_flagged):
                    value = None
                else:
                    value = value_int * scale
                observations.append((year, month, value))
        records.append(
            StationRecord(
                id=sid,
                observations=tuple(observations),
                element=element,
                units=units,
                raw_values=raw_values,
                flags=flags,
            )
        )
    return records


def format_ghcnm_dat(records: Iterable[StationRecord]) -> str:
    """Serialize monthly records back to GHCN-M v4 fixed width.

    Inverse of :func:`parse_ghcnm_dat` on valid input: raw integer
    fields and flag characters are reproduced exactly when present,
    otherwise values are re-quantized from physical units with blank
    flags.
    """
    out = []
    for rec in records:
        if rec.resolution != "monthly":
            raise IngestError(f"station {rec.id!r}: cannot serialize a daily record")
        if len(rec.id) > 11:
            raise IngestError(f"station id {rec.id!r} longer than 11 characters")
        scale, _ = _ELEMENT_UNITS.get(rec.element, (0.01, ""))
        by_year: dict[int, dict[int, float | None]] = {}
        for year, month, value in rec.observations:
            by_year.setdefault(year, {})[month] = value
        for year, month_values in by_year.items():
            parts = [f"{rec.id:<11s}{year:4d}{rec.element:<4s}"]
            for month in range(1, 13):
                key = (year, month)
                if key in rec.raw_values:
                    value_int = rec.raw_values[key]
                    flag_field = rec.flags.get(key, "   ")
                else:
                    value = month_values.get(month)
                    value_int = (
                        GHCNM_MISSING if value is None else round(value / scale)
                    )
                    flag_field = "   "
                parts.append(f"{value_int:5d}{flag_field:<3.3s}")
            out.append("".join(parts))
    return "\n".join(out) + ("\n" if out else "")


# ---------------------------------------------------------------------------
# station inventory (coordinates)


def _validate_coords(sid: str, lat: float, lon: float, where: str) -> None:
    if not -90.0 <= lat <= 90.0:
        raise CoordinateOutOfRangeError(
            f"{where}: station {sid!r} latitude {lat} out of [-90, 90]"
        )
    if not -180.0 <= lon <= 180.0:
        raise CoordinateOutOfRangeError(
            f"{where}: station {sid!r} longitude {lon} out of [-180, 180]"
        )


def parse_station_metadata(source) -> dict[str, tuple[float, float, str]]:
    """Parse a station inventory into an id -> (lat, lon, name) map.

    Accepts the GHCN-M fixed-width inventory (id in columns 1-11,
    latitude 13-20, longitude 22-30, optional name from column 39) or,
    when the first line starts with ``id,``, a CSV with header
    ``id,lat,lon[,name]``.  A station id appearing twice with identical
    coordinates is deduplicated silently; differing coordinates raise
    DuplicateStationError.
    """
    entries: dict[str, tuple[float, float, str]] = {}

    def add(sid: str, lat: float, lon: float, name: str, lineno: int) -> None:
        _validate_coords(sid, lat, lon, f"line {lineno}")
        if sid in entries:
            old_lat, old_lon, _ = entries[sid]
            if (old_lat, old_lon) != (lat, lon):
                raise DuplicateStationError(
                    f"line {lineno}: station {sid!r} listed with conflicting "
                    f"coordinates ({old_lat}, {old_lon}) vs ({lat}, {lon})"
                )
            return
        entries[sid] = (lat, lon, name)

    lines = _iter_lines(source)
    first = None
    for first in lines:
        if first.strip():
            break
        first = None
    if first is None:
        return entries

    if first.strip().lower().startswith("id,"):
        header = [h.strip().lower() for h in first.strip().split(",")]
        if header[:3] != ["id", "lat", "lon"]:
            raise BadHeaderError(
                f"inventory CSV header must start with id,lat,lon; got {first.strip()!r}"
            )
        for lineno, line in enumerate(lines, start=2):
            if not line.strip():
                continue
            fields = [f.strip() for f in line.rstrip("\r\n").split(",")]
            if len(fields) < 3:
                raise MalformedLineError(
                    f"line {lineno}: expected at least 3 fields", lineno
                )
            try:
                lat, lon = float(fields[1]), float(fields[2])
            except ValueError:
                raise MalformedLineError(
                    f"line {lineno}: unreadable coordinates {fields[1]!r}, {fields[2]!r}",
                    lineno,
                ) from None
            name = fields[3] if len(fields) > 3 else ""
            add(fields[0], lat, lon, name, lineno)
        return entries

    def parse_fixed(line: str, lineno: int) -> None:
        if not line.strip():
            return
        stripped = line.rstrip("\r\n")
        if len(stripped) < 30:
            raise MalformedLineError(
                f"line {lineno}: inventory line shorter than 30 characters", lineno
            )
        sid = stripped[0:11]
        try:
            lat = float(stripped[12:20])
            lon = float(stripped[21:30])
        except ValueError:
            raise MalformedLineError(
                f"line {lineno}: unreadable coordinates "
                f"{stripped[12:20]!r}, {stripped[21:30]!r}",
                lineno,
            ) from None
        name = stripped[38:].strip() if len(stripped) > 38 else ""
        add(sid, lat, lon, name, lineno)

    parse_fixed(first, 1)
    for lineno, line in enumerate(lines, start=2):
        parse_fixed(line, lineno)
    return entries


def attach_coordinates(
    records: Iterable[StationRecord],
    metadata: dict[str, tuple[float, float, str]],
) -> list[StationRecord]:
    """Return copies of `records` with coordinates filled in from
    `metadata` where the station id is known; others pass through."""
    out = []
    for rec in records:
        meta = metadata.get(rec.id)
        if meta is None:
            out.append(rec)
        else:
            lat, lon, name = meta
            out.append(
                replace(rec, latitude=lat, longitude=lon, name=name or rec.name)
            )
    return out


# ---------------------------------------------------------------------------
# long-format CSV


def parse_long_csv(source) -> list[StationRecord]:
    """Parse an ``id,date,value`` CSV into per-station records.

    Dates are ``YYYY-MM`` (monthly) or ``YYYY-MM-DD`` (daily); a station
    must use one resolution throughout.  An empty value field is a
    missing observation.  Duplicate (id, date) pairs raise
    DuplicateObservationError.
    """
    lines = _iter_lines(source)
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise BadHeaderError("empty input: expected header id,date,value") from None
    if [h.strip().lower() for h in header] != ["id", "date", "value"]:
        raise BadHeaderError(
            f"expected header id,date,value; got {','.join(header)!r}"
        )

    monthly: dict[str, dict[tuple[int, int], float | None]] = {}
    daily: dict[str, dict[dt.date, float | None]] = {}
    resolution: dict[str, str] = {}

    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 3:
            raise MalformedLineError(
                f"line {lineno}: expected 3 fields, got {len(row)}", lineno
            )
        sid, date_str, value_str = (f.strip() for f in row)
        if not sid:
            raise MalformedLineError(f"line {lineno}: empty station id", lineno)

        if value_str == "":
            value: float | None = None
        else:
            try:
                value = float(value_str)
            except ValueError:
                raise MalformedLineError(
                    f"line {lineno}: unreadable value {value_str!r}", lineno
                ) from None

        m = _MONTHLY_DATE.match(date_str)
        if m:
            year, month = int(m.group(1)), int(m.group(2))
            if not 1 <= month <= 12:
                raise BadDateError(f"line {lineno}: month out of range in {date_str!r}")
            row_resolution = "monthly"
        else:
            d = _DAILY_DATE.match(date_str)
            if not d:
                raise BadDateError(
                    f"line {lineno}: date {date_str!r} is neither YYYY-MM nor YYYY-MM-DD"
                )
            try:
                day = dt.date(int(d.group(1)), int(d.group(2)), int(d.group(3)))
            except ValueError:
                raise BadDateError(
                    f"line {lineno}: invalid calendar date {date_str!r}"
                ) from None
            row_resolution = "daily"

        seen = resolution.setdefault(sid, row_resolution)
        if seen != row_resolution:
            raise BadDateError(
                f"line {lineno}: station {sid!r} mixes {seen} and "
                f"{row_resolution} dates"
            )
        if row_resolution == "monthly":
            per = monthly.setdefault(sid, {})
            if (year, month) in per:
                raise DuplicateObservationError(
                    f"line {lineno}: duplicate observation for {sid!r} {date_str}"
                )
            per[(year, month)] = value
        else:
            per_day = daily.setdefault(sid, {})
            if day in per_day:
                raise DuplicateObservationError(
                    f"line {lineno}: duplicate observation for {sid!r} {date_str}"
                )
            per_day[day] = value

    records = []
    for sid in resolution:  # first-seen order
        if resolution[sid] == "monthly":
            obs = tuple(
                (y, mo, monthly[sid][(y, mo)]) for y, mo in sorted(monthly[sid])
            )
            records.append(
                StationRecord(id=sid, observations=obs, element="", units="")
            )
        else:
            days = tuple((day, daily[sid][day]) for day in sorted(daily[sid]))
            records.append(
                StationRecord(
                    id=sid, element="", units="", resolution="daily", daily=days
                )
            )
    return records


# ---------------------------------------------------------------------------
# daily -> monthly aggregation


def aggregate_daily_to_monthly(
    record: StationRecord, missing_tolerance: float = 0.01
) -> StationRecord | None:
    """Aggregate a daily record to monthly means under completeness rules.

    A month's value is the mean of its available daily values when at
    least 95% of that calendar month's days are present; otherwise the
    month is missing.  The record as a whole qualifies only when its
    total daily missingness — missing days between the first and last
    observation dates, inclusive — is at most `missing_tolerance`;
    a disqualified record yields None.
    """
    if record.resolution != "daily":
        raise IngestError(f"station {record.id!r}: record is not daily resolution")
    if not record.daily:
        raise EmptyRecordError(f"station {record.id!r}: no daily observations")

    observed = {day: value for day, value in record.daily if value is not None}
    days = [day for day, _ in record.daily]
    first, last = min(days), max(days)
    total_days = (last - first).days + 1
    missing_fraction = 1.0 - len(observed) / total_days
    if missing_fraction > missing_tolerance + 1e-12:
        return None

    observations = []
    year, month = first.year, first.month
    while (year, month) <= (last.year, last.month):
        n_days = calendar.monthrange(year, month)[1]
        values = [
            observed[dt.date(year, month, d)]
            for d in range(1, n_days + 1)
            if dt.date(year, month, d) in observed
        ]
        if len(values) >= 0.95 * n_days - 1e-9:
            observations.append((year, month, float(np.mean(values))))
        else:
            observations.append((year, month, None))
        year, month = (year + 1, 1) if month == 12 else (year, month + 1)

    return replace(
        record,
        observations=tuple(observations),
        resolution="monthly",
        daily=(),
        raw_values={},
        flags={},
    )


# ---------------------------------------------------------------------------
# complete-window selection and quality screens


def select_complete_window(
    record: StationRecord, window_years: int = 40
) -> TimeSeries | None:
    """Return the most recent contiguous fully observed `window_years`
    span of a monthly record as a TimeSeries, or None if no such span
    exists.  Calendar months absent from the record count as missing."""
    if record.resolution != "monthly":
        raise IngestError(f"station {record.id!r}: record is not monthly resolution")
    if window_years < 1:
        raise IngestError(f"window_years must be >= 1, got {window_years}")
    if not record.observations:
        return None

    keys = [y * 12 + (m - 1) for y, m, _ in record.observations]
    lo, hi = min(keys), max(keys)
    grid = np.full(hi - lo + 1, np.nan)
    for (y, m, value), key in zip(record.observations, keys):
        if value is not None:
            grid[key - lo] = value

    need = window_years * 12
    if len(grid) < need:
        return None
    missing = np.cumsum(np.concatenate(([0], np.isnan(grid).astype(int))))
    starts = np.flatnonzero(missing[need:] - missing[:-need] == 0)
    if len(starts) == 0:
        return None
    s = int(starts[-1])  # most recent complete span
    key0 = lo + s
    return TimeSeries(
        values=grid[s : s + need],
        period=12,
        id=record.id,
        start=(key0 // 12, key0 % 12 + 1),
    )


def quality_screen(series: TimeSeries) -> list[str]:
    """Automated stand-ins for manual visual quality control.

    Returns the list of failed screens (empty means the series passes):
    more than 50% identical consecutive values, or any observation more
    than 8 standard deviations from the series mean.
    """
    x = series.values
    reasons = []
    repeats = float(np.mean(x[1:] == x[:-1]))
    if repeats > 0.5:
        reasons.append(
            f"{repeats:.0%} of consecutive values identical (limit 50%)"
        )
    sd = float(x.std())
    if sd > 0.0:
        z_max = float(np.max(np.abs(x - x.mean())) / sd)
        if z_max > 8.0:
            reasons.append(f"spike at |z| = {z_max:.1f} (limit 8)")
    return reasons
