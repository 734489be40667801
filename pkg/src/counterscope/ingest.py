"""Parsing of hourly count files and counter metadata, plus longitudinal QC.

Records are parsed into :class:`RawCountRecord` objects, but the rest of the
pipeline works on a columnar *count frame* (a DataFrame with columns
``counter_id, direction, date, hour, count``), which is what
:func:`records_to_frame` and the synthetic generator produce.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import io
import logging
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

log = logging.getLogger(__name__)

COUNTS_HEADER = ["counter_id", "direction", "date", "hour", "classes"]
META_HEADER = ["counter_id", "lat", "lon", "road_name"]
FRAME_COLUMNS = ["counter_id", "direction", "date", "hour", "count"]

KNOWN_CLASSES = frozenset({"car", "motorbike", "bus", "lorry", "truck", "van", "trailer"})


class Direction(enum.IntEnum):
    DIR1 = 1
    DIR2 = 2


class CountFormatError(ValueError):
    """Malformed input row; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"{message}, line {line}"
        super().__init__(message)


@dataclass(frozen=True)
class VehicleClassFilter:
    included: frozenset[str] = frozenset({"car", "motorbike"})

    def __post_init__(self):
        if not self.included:
            raise ValueError("vehicle class filter must not be empty")
        unknown = set(self.included) - KNOWN_CLASSES
        if unknown:
            raise ValueError(f"unknown vehicle class: {sorted(unknown)[0]}")


@dataclass(frozen=True)
class RawCountRecord:
    counter_id: str
    direction: Direction
    date: dt.date
    hour: int
    class_counts: Mapping[str, int]

    @property
    def count(self) -> int:
        return sum(self.class_counts.values())


@dataclass(frozen=True)
class CounterMeta:
    counter_id: str
    latitude: float
    longitude: float
    road_name: str = ""

    def __post_init__(self):
        if not -90 <= self.latitude <= 90:
            raise ValueError(f"latitude out of range for {self.counter_id}: {self.latitude}")
        if not -180 <= self.longitude <= 180:
            raise ValueError(f"longitude out of range for {self.counter_id}: {self.longitude}")


@dataclass
class CleanDataset:
    frame: pd.DataFrame
    meta: dict[str, CounterMeta] = field(default_factory=dict)
    years_covered: set[int] = field(default_factory=set)
    # (counter_id, reason, detail); reason is "missing-month" or "fall-out"
    dropped: list[tuple[str, str, str]] = field(default_factory=list)
    n_counters_in: int = 0

    @property
    def counter_ids(self) -> list[str]:
        return sorted(self.frame["counter_id"].unique())


def _text_stream(source) -> IO[str]:
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(source.decode("utf-8"))
    if isinstance(source, io.TextIOBase):
        return source
    if hasattr(source, "read"):
        probe = source.read(0)
        if isinstance(probe, bytes):
            return io.TextIOWrapper(source, encoding="utf-8", newline="")
        return source
    raise TypeError(f"cannot read counts from {type(source).__name__}")


def _parse_classes(field_: str, flt: VehicleClassFilter, lineno: int) -> dict[str, int]:
    out: dict[str, int] = {}
    for pair in field_.split(";"):
        pair = pair.strip()
        if not pair:
            continue
        name, sep, value = pair.partition("=")
        name = name.strip()
        if not sep:
            raise CountFormatError(f"bad class pair {pair!r}", lineno)
        if name not in KNOWN_CLASSES:
            raise CountFormatError(f"unknown vehicle class {name!r}", lineno)
        try:
            n = int(value)
        except ValueError:
            raise CountFormatError(f"bad count {value!r} for class {name}", lineno) from None
        if n < 0:
            raise CountFormatError(f"negative count for class {name}", lineno)
        if name in out:
            raise CountFormatError(f"duplicate class {name!r}", lineno)
        if name in flt.included:
            out[name] = n
    return out


def parse_counts(source, flt: VehicleClassFilter | None = None) -> list[RawCountRecord]:
    """Parse a counts CSV (bytes, binary or text stream) into records.

    Classes outside ``flt`` are dropped. Raises :class:`CountFormatError`
    naming the line for malformed rows, unknown classes, out-of-range hours
    and duplicate (counter, direction, hour) keys.
    """
    flt = flt or VehicleClassFilter()
    reader = csv.reader(_text_stream(source))
    records: list[RawCountRecord] = []
    seen = set()
    for lineno, row in enumerate(reader, start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if row[0].startswith("#") or row == COUNTS_HEADER:
            continue
        if len(row) != 5:
            raise CountFormatError(f"expected 5 fields, got {len(row)}", lineno)
        counter_id, direction, date, hour, classes = (c.strip() for c in row)
        if not counter_id:
            raise CountFormatError("empty counter_id", lineno)
        try:
            direction_ = Direction(int(direction))
        except ValueError:
            raise CountFormatError(f"bad direction {direction!r}", lineno) from None
        try:
            day = dt.date.fromisoformat(date)
        except ValueError:
            raise CountFormatError(f"bad date {date!r}", lineno) from None
        try:
            hour_ = int(hour)
        except ValueError:
            raise CountFormatError(f"bad hour {hour!r}", lineno) from None
        if not 0 <= hour_ <= 23:
            raise CountFormatError("hour out of range", lineno)
        key = (counter_id, direction_, day, hour_)
        if key in seen:
            raise CountFormatError(f"duplicate record for {counter_id} dir {int(direction_)} {day} {hour_:02d}h", lineno)
        seen.add(key)
        records.append(RawCountRecord(counter_id, direction_, day, hour_, _parse_classes(classes, flt, lineno)))
    return records


def read_counts(path, flt: VehicleClassFilter | None = None) -> pd.DataFrame:
    """Vectorised counts reader returning a count frame.

    Any row the fast path cannot accept is re-read with :func:`parse_counts`,
    which raises the line-numbered error.
    """
    flt = flt or VehicleClassFilter()
    raw = pd.read_csv(path, dtype=str, comment="#", keep_default_na=False, skip_blank_lines=True)
    if list(raw.columns) != COUNTS_HEADER or raw.empty:
        return records_to_frame(_strict(path, flt))
    hour = pd.to_numeric(raw["hour"], errors="coerce")
    direction = pd.to_numeric(raw["direction"], errors="coerce")
    date = pd.to_datetime(raw["date"], format="%Y-%m-%d", errors="coerce")
    pairs = raw["classes"].str.split(";").explode()
    pairs = pairs[pairs.str.strip() != ""]
    parts = pairs.str.partition("=")
    name = parts[0].str.strip()
    value = pd.to_numeric(parts[2], errors="coerce")
    ok = (
        hour.between(0, 23).all()
        and (hour == hour.round()).all()
        and direction.isin([1, 2]).all()
        and date.notna().all()
        and (raw["counter_id"].str.strip() != "").all()
        and (parts[1] == "=").all()
        and name.isin(KNOWN_CLASSES).all()
        and value.notna().all()
        and (value >= 0).all()
        and (value == value.round()).all()
        and not pd.DataFrame({"i": name.index, "n": name}).duplicated().any()
    )
    frame = pd.DataFrame(
        {
            "counter_id": raw["counter_id"].str.strip(),
            "direction": direction.astype("Int64"),
            "date": date,
            "hour": hour.astype("Int64"),
        }
    )
    if not ok or frame.duplicated(["counter_id", "direction", "date", "hour"]).any():
        return records_to_frame(_strict(path, flt))
    kept = value[name.isin(flt.included)]
    frame["count"] = kept.groupby(level=0).sum().reindex(frame.index, fill_value=0).astype(np.int64)
    frame["direction"] = frame["direction"].astype(np.int8)
    frame["hour"] = frame["hour"].astype(np.int8)
    return frame.reset_index(drop=True)


def _strict(path, flt: VehicleClassFilter) -> list[RawCountRecord]:
    with open(path, "rb") as fh:
        return parse_counts(fh, flt)


def serialize_counts(records: Iterable[RawCountRecord], stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(COUNTS_HEADER)
    for r in records:
        classes = ";".join(f"{k}={v}" for k, v in sorted(r.class_counts.items()))
        writer.writerow([r.counter_id, int(r.direction), r.date.isoformat(), f"{r.hour:02d}", classes])


def records_to_frame(records: Sequence[RawCountRecord]) -> pd.DataFrame:
    """Columnar view of records with class counts summed into ``count``."""
    if not records:
        return empty_frame()
    frame = pd.DataFrame(
        {
            "counter_id": [r.counter_id for r in records],
            "direction": np.array([int(r.direction) for r in records], dtype=np.int8),
            "date": pd.to_datetime([r.date for r in records]),
            "hour": np.array([r.hour for r in records], dtype=np.int8),
            "count": np.array([r.count for r in records], dtype=np.int64),
        }
    )
    return frame


def frame_to_records(frame: pd.DataFrame, class_name: str = "car") -> list[RawCountRecord]:
    """Inverse of records_to_frame for single-class frames (e.g. synthetic data)."""
    out = []
    for cid, d, date, h, n in zip(frame["counter_id"], frame["direction"], frame["date"], frame["hour"], frame["count"]):
        out.append(RawCountRecord(cid, Direction(int(d)), pd.Timestamp(date).date(), int(h), {class_name: int(n)}))
    return out


def write_count_frame(frame: pd.DataFrame, stream: IO[str], class_name: str = "car") -> None:
    """Serialise a count frame in the counts CSV format without building record objects."""
    out = pd.DataFrame(
        {
            "counter_id": frame["counter_id"].to_numpy(),
            "direction": frame["direction"].astype(int).to_numpy(),
            "date": pd.to_datetime(frame["date"]).dt.strftime("%Y-%m-%d").to_numpy(),
            "hour": frame["hour"].astype(int).map("{:02d}".format).to_numpy(),
            "classes": (class_name + "=" + frame["count"].astype(np.int64).astype(str)).to_numpy(),
        }
    )
    out.to_csv(stream, index=False, lineterminator="\n")


def empty_frame() -> pd.DataFrame:
    return pd.DataFrame(
        {
            "counter_id": pd.Series([], dtype=object),
            "direction": pd.Series([], dtype=np.int8),
            "date": pd.Series([], dtype="datetime64[ns]"),
            "hour": pd.Series([], dtype=np.int8),
            "count": pd.Series([], dtype=np.int64),
        }
    )


def parse_meta(source) -> dict[str, CounterMeta]:
    reader = csv.reader(_text_stream(source))
    meta = {}
    for lineno, row in enumerate(reader, start=1):
        if not row or row[0].startswith("#") or row == META_HEADER:
            continue
        if len(row) != 4:
            raise CountFormatError(f"expected 4 metadata fields, got {len(row)}", lineno)
        cid, lat, lon, road = row
        try:
            meta[cid] = CounterMeta(cid, float(lat), float(lon), road)
        except ValueError as exc:
            raise CountFormatError(str(exc), lineno) from None
    return meta


def write_meta(meta: Mapping[str, CounterMeta], stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(META_HEADER)
    for cid in sorted(meta):
        m = meta[cid]
        writer.writerow([cid, f"{m.latitude:.6f}", f"{m.longitude:.6f}", m.road_name])


def _as_frame(records) -> pd.DataFrame:
    if isinstance(records, pd.DataFrame):
        return records
    return records_to_frame(list(records))


def qc_filter(records, meta: Mapping[str, CounterMeta] | None = None) -> CleanDataset:
    """Drop counters without data in all 12 months of every covered year, or with a fall-out.

    A fall-out is a month in which every reported value is zero. Both
    directions of a counter go together. Output rows are sorted by
    (counter_id, direction, date, hour).
    """
    frame = _as_frame(records)
    n_in = frame["counter_id"].nunique()
    if frame.empty:
        return CleanDataset(empty_frame(), dict(meta or {}), set(), [], 0)

    dates = pd.DatetimeIndex(frame["date"])
    years = dates.year.to_numpy()
    months = dates.month.to_numpy()
    covered = sorted(set(years.tolist()))

    per_month = (
        pd.DataFrame({"counter_id": frame["counter_id"].to_numpy(), "direction": frame["direction"].to_numpy(),
                      "year": years, "month": months, "count": frame["count"].to_numpy()})
        .groupby(["counter_id", "direction", "year", "month"], sort=True)["count"]
        .max()
    )
    dropped = []
    for cid, grp in per_month.groupby(level="counter_id", sort=True):
        reason = None
        for _, sub in grp.groupby(level="direction", sort=True):
            present = set(zip(sub.index.get_level_values("year"), sub.index.get_level_values("month")))
            missing = [(y, m) for y in covered for m in range(1, 13) if (y, m) not in present]
            if missing:
                reason = ("missing-month", missing[0])
                break
            dead = sub[sub == 0]
            if len(dead) and reason is None:
                reason = ("fall-out", tuple(dead.index[0][2:]))
        if reason:
            y, m = reason[1]
            dropped.append((cid, reason[0], f"{y}-{m:02d}"))

    drop_ids = {cid for cid, _, _ in dropped}
    keep = ~frame["counter_id"].isin(drop_ids)
    clean = frame.loc[keep].sort_values(["counter_id", "direction", "date", "hour"], kind="mergesort")
    clean = clean.reset_index(drop=True)
    log.info("qc: %d counters in, %d kept", n_in, n_in - len(drop_ids))
    for cid, reason, detail in dropped:
        log.info("qc: dropped %s (%s %s)", cid, reason, detail)
    kept_meta = {k: v for k, v in (meta or {}).items() if k not in drop_ids}
    return CleanDataset(clean, kept_meta, set(covered), dropped, n_in)
