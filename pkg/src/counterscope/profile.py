"""Trimmed-mean hourly profiles and day-type traffic shares."""

from __future__ import annotations

import enum
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np
import pandas as pd

from .calendar import WEEKDAY_NAMES, DayType, HolidayCalendar, weekend_mask
from .ingest import CleanDataset

log = logging.getLogger(__name__)

LOWER_Q = 0.10
UPPER_Q = 0.90

ProfileKey = tuple[str, int, DayType]


class Mode(str, enum.Enum):
    MONTHLY = "monthly"
    DAY_OF_WEEK = "dayofweek"

    @property
    def periods(self) -> tuple[int, ...]:
        return tuple(range(1, 13)) if self is Mode.MONTHLY else tuple(range(7))

    def period_label(self, period: int) -> str:
        return str(period) if self is Mode.MONTHLY else WEEKDAY_NAMES[period]

    def parse_period(self, label: str) -> int:
        if self is Mode.MONTHLY:
            return int(label)
        return WEEKDAY_NAMES.index(label)


def trimmed_mean(values: Sequence[float]) -> float:
    """Mean after dropping values strictly outside the 10th..90th percentile band.

    Percentiles use linear interpolation between order statistics. If the
    band excludes every value (only possible for two distinct values) the
    plain mean is returned.
    """
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError("trimmed_mean of empty sequence")
    lo, hi = np.percentile(x, [LOWER_Q * 100, UPPER_Q * 100])
    kept = x[(x >= lo) & (x <= hi)]
    if kept.size == 0:
        return float(x.sum() / x.size)
    return float(kept.sum() / kept.size)


def grouped_trimmed_mean(frame: pd.DataFrame, keys: list[str], value: str = "count") -> pd.Series:
    """Vectorised trimmed_mean over every group of ``keys``; same rule as :func:`trimmed_mean`."""
    g = frame.groupby(keys, sort=True)[value]
    lo = g.transform("quantile", LOWER_Q)
    hi = g.transform("quantile", UPPER_Q)
    v = frame[value]
    kept = frame.loc[(v >= lo) & (v <= hi), keys + [value]]
    trimmed = kept.groupby(keys, sort=True)[value].agg(["sum", "size"])
    plain = g.agg(["sum", "size"])
    trimmed = trimmed.reindex(plain.index)
    empty = trimmed["size"].isna()
    trimmed.loc[empty] = plain.loc[empty]
    return trimmed["sum"].astype(float) / trimmed["size"].astype(float)


@dataclass
class ProfileSet:
    """Hourly profiles keyed by (counter_id, direction, day type).

    Each value is an array of shape (n_periods, 24): 12 months in monthly
    mode, Mon..Sun in day-of-week mode.
    """

    mode: Mode
    profiles: dict[ProfileKey, np.ndarray] = field(default_factory=dict)
    # (key, period, hour) cells with no observations, zero-filled
    missing: list[tuple[ProfileKey, int, int]] = field(default_factory=list)

    def keys(self) -> list[ProfileKey]:
        return sorted(self.profiles, key=_key_order)

    def __len__(self) -> int:
        return len(self.profiles)

    def __getitem__(self, key: ProfileKey) -> np.ndarray:
        return self.profiles[key]

    def profile(self, key: ProfileKey, period: int) -> np.ndarray:
        idx = self.mode.periods.index(period)
        return self.profiles[key][idx]

    def counter_ids(self) -> list[str]:
        return sorted({k[0] for k in self.profiles})


def _key_order(key: ProfileKey):
    return (key[0], key[1], key[2].value)


def _aggregate(frame: pd.DataFrame, weekend: np.ndarray, mode: Mode) -> pd.Series:
    dates = pd.DatetimeIndex(frame["date"])
    if mode is Mode.MONTHLY:
        period = dates.month.to_numpy()
        daytype = np.where(weekend, DayType.WEEKEND.value, DayType.WORKDAY.value)
    else:
        period = dates.weekday.to_numpy()
        daytype = np.full(len(frame), DayType.ALL.value)
    work = pd.DataFrame(
        {
            "counter_id": frame["counter_id"].to_numpy(),
            "direction": frame["direction"].to_numpy().astype(np.int64),
            "daytype": daytype,
            "period": period.astype(np.int64),
            "hour": frame["hour"].to_numpy().astype(np.int64),
            "count": frame["count"].to_numpy().astype(np.float64),
        }
    )
    return grouped_trimmed_mean(work, ["counter_id", "direction", "daytype", "period", "hour"])


def build_profiles(
    data: CleanDataset,
    holidays: HolidayCalendar,
    mode: Mode | str = Mode.MONTHLY,
    n_jobs: int = 1,
) -> ProfileSet:
    """Aggregate a clean dataset into trimmed-mean profiles.

    Every (counter, direction, day type, period, hour) cell is trimmed
    independently over all covered years. Cells without any observation are
    filled with 0 and recorded in ``ProfileSet.missing``.
    """
    mode = Mode(mode)
    frame = data.frame
    result = ProfileSet(mode)
    if frame.empty:
        return result
    weekend = weekend_mask(frame["date"], holidays)

    counters = sorted(frame["counter_id"].unique())
    if n_jobs > 1 and len(counters) > 1:
        chunks = [c.tolist() for c in np.array_split(np.array(counters, dtype=object), min(n_jobs, len(counters)))]
        masks = [frame["counter_id"].isin(c).to_numpy() for c in chunks]
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(lambda m: _aggregate(frame.loc[m], weekend[m], mode), masks))
        cells = pd.concat(parts).sort_index()
    else:
        cells = _aggregate(frame, weekend, mode)

    daytypes = [DayType.WORKDAY, DayType.WEEKEND] if mode is Mode.MONTHLY else [DayType.ALL]
    periods = mode.periods
    pairs = frame[["counter_id", "direction"]].drop_duplicates().sort_values(["counter_id", "direction"])
    full = pd.MultiIndex.from_tuples(
        [
            (cid, int(d), dtp.value, p, h)
            for cid, d in pairs.itertuples(index=False)
            for dtp in daytypes
            for p in periods
            for h in range(24)
        ],
        names=cells.index.names,
    )
    cells = cells.reindex(full)
    holes = cells.isna().to_numpy()
    if holes.any():
        for cid, d, dtp, p, h in full[holes]:
            result.missing.append(((cid, d, DayType(dtp)), p, h))
        log.warning("profiles: %d empty cells zero-filled", int(holes.sum()))
    values = cells.fillna(0.0).to_numpy().reshape(-1, len(periods), 24)
    keys = [(cid, int(d), dtp) for cid, d in pairs.itertuples(index=False) for dtp in daytypes]
    for key, block in zip(keys, values):
        result.profiles[key] = block
    return result


def normalize_profile(p) -> np.ndarray:
    """Rescale a 24-hour profile to percent of its daily total."""
    p = np.asarray(p, dtype=float)
    total = p.sum()
    if not total > 0:
        raise ValueError("degenerate profile")
    return 100.0 * p / total


def daytype_totals(data: CleanDataset, holidays: HolidayCalendar) -> pd.DataFrame:
    """Per (counter_id, direction): number of days and total vehicles by day type."""
    frame = data.frame
    weekend = weekend_mask(frame["date"], holidays)
    work = pd.DataFrame(
        {
            "counter_id": frame["counter_id"].to_numpy(),
            "direction": frame["direction"].to_numpy().astype(np.int64),
            "weekend": weekend,
            "date": frame["date"].to_numpy(),
            "count": frame["count"].to_numpy().astype(np.float64),
        }
    )
    g = work.groupby(["counter_id", "direction", "weekend"], sort=True)
    agg = pd.DataFrame({"days": g["date"].nunique(), "total": g["count"].sum()}).unstack("weekend", fill_value=0)
    out = pd.DataFrame(index=agg.index)
    for flag, name in ((True, "weekend"), (False, "workday")):
        out[f"{name}_days"] = agg["days"][flag] if flag in agg["days"] else 0
        out[f"{name}_total"] = agg["total"][flag] if flag in agg["total"] else 0.0
    return out


def shares_from_totals(totals: pd.DataFrame) -> dict[tuple[str, int], tuple[float, float]]:
    out = {}
    for (cid, d), row in totals.iterrows():
        wk = row["weekend_total"] / row["weekend_days"] if row["weekend_days"] else 0.0
        wd = row["workday_total"] / row["workday_days"] if row["workday_days"] else 0.0
        s = wk + wd
        out[(cid, int(d))] = (wk / s, wd / s) if s > 0 else (0.5, 0.5)
    return out


def weekly_share(data: CleanDataset, holidays: HolidayCalendar) -> dict[tuple[str, int], tuple[float, float]]:
    """(weekend_share, workday_share) of the average daily traffic, per counter direction.

    Shares compare the average weekend day with the average workday, so the
    larger number of workdays does not bias the split.
    """
    return shares_from_totals(daytype_totals(data, holidays))


PROFILE_COLUMNS = ["counter_id", "direction", "daytype", "period"] + [f"h{h:02d}" for h in range(24)]


def write_profile_cache(ps: ProfileSet, stream: IO[str], header: Sequence[str] = ()) -> None:
    for line in header:
        stream.write(f"# {line}\n")
    stream.write(f"# mode={ps.mode.value}\n")
    stream.write(",".join(PROFILE_COLUMNS) + "\n")
    for key in ps.keys():
        cid, d, dtp = key
        for period, row in zip(ps.mode.periods, ps.profiles[key]):
            cells = ",".join(f"{v:.6f}" for v in row)
            stream.write(f"{cid},{d},{dtp.value},{ps.mode.period_label(period)},{cells}\n")


def read_profile_cache(stream: IO[str]) -> ProfileSet:
    mode = Mode.MONTHLY
    rows = {}
    for lineno, line in enumerate(stream, start=1):
        line = line.rstrip("\n")
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("mode="):
                mode = Mode(body.split("=", 1)[1])
            continue
        parts = line.split(",")
        if parts == PROFILE_COLUMNS:
            continue
        if len(parts) != len(PROFILE_COLUMNS):
            raise ValueError(f"bad profile cache row, line {lineno}")
        key = (parts[0], int(parts[1]), DayType(parts[2]))
        rows.setdefault(key, {})[mode.parse_period(parts[3])] = np.array(parts[4:], dtype=float)
    ps = ProfileSet(mode)
    for key, by_period in rows.items():
        missing = [p for p in mode.periods if p not in by_period]
        if missing:
            raise ValueError(f"profile cache lacks period {mode.period_label(missing[0])} for {key[0]} dir {key[1]}")
        ps.profiles[key] = np.stack([by_period[p] for p in mode.periods])
    return ps
