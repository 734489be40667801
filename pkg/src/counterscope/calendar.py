"""Day types (workday/weekend) and meteorological seasons."""

from __future__ import annotations

import datetime as dt
import enum
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np
import pandas as pd


class DayType(str, enum.Enum):
    WORKDAY = "workday"
    WEEKEND = "weekend"
    # day-of-week aggregation pools both day types under one key
    ALL = "all"


class Season(str, enum.Enum):
    SPRING = "spring"
    SUMMER = "summer"
    AUTUMN = "autumn"
    WINTER = "winter"


SEASONS = (Season.SPRING, Season.SUMMER, Season.AUTUMN, Season.WINTER)

_SEASON_OF_MONTH = {
    3: Season.SPRING, 4: Season.SPRING, 5: Season.SPRING,
    6: Season.SUMMER, 7: Season.SUMMER, 8: Season.SUMMER,
    9: Season.AUTUMN, 10: Season.AUTUMN, 11: Season.AUTUMN,
    12: Season.WINTER, 1: Season.WINTER, 2: Season.WINTER,
}

WEEKDAY_NAMES = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")


@dataclass(frozen=True)
class HolidayCalendar:
    dates: frozenset[dt.date] = field(default_factory=frozenset)

    def __contains__(self, day: dt.date) -> bool:
        return day in self.dates

    def years(self) -> set[int]:
        return {d.year for d in self.dates}


def parse_holidays(stream: TextIO) -> HolidayCalendar:
    """Read one ISO date per line; blank lines and ``#`` comments are ignored."""
    dates = set()
    for lineno, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            dates.add(dt.date.fromisoformat(line))
        except ValueError:
            raise ValueError(f"bad holiday date {line!r}, line {lineno}") from None
    return HolidayCalendar(frozenset(dates))


def load_holidays(path: str | Path | None = None) -> HolidayCalendar:
    """Load a holiday file, or the bundled Slovenian 2015-2017 list when ``path`` is None."""
    if path is None:
        ref = resources.files("counterscope") / "data" / "holidays_si_2015_2017.txt"
        with ref.open("r", encoding="utf-8") as fh:
            return parse_holidays(fh)
    with open(path, encoding="utf-8") as fh:
        return parse_holidays(fh)


def classify_day(day: dt.date, holidays: HolidayCalendar) -> DayType:
    if day.weekday() >= 5 or day in holidays:
        return DayType.WEEKEND
    return DayType.WORKDAY


def weekend_mask(dates: pd.Series | Iterable, holidays: HolidayCalendar) -> np.ndarray:
    """Vectorised classify_day: True where the date is a weekend day."""
    dates = pd.DatetimeIndex(pd.to_datetime(pd.Series(dates)).dt.normalize())
    is_weekend = dates.weekday >= 5
    if holidays.dates:
        hol = pd.DatetimeIndex(sorted(holidays.dates))
        is_weekend = is_weekend | dates.isin(hol)
    return np.asarray(is_weekend, dtype=bool)


def season_of_month(month: int) -> Season:
    try:
        return _SEASON_OF_MONTH[int(month)]
    except KeyError:
        raise ValueError(f"month out of range: {month}") from None


def season_index(months: np.ndarray) -> np.ndarray:
    """Map an array of months 1..12 to indices into SEASONS."""
    lut = np.array([0] + [SEASONS.index(_SEASON_OF_MONTH[m]) for m in range(1, 13)])
    months = np.asarray(months)
    if months.size and (months.min() < 1 or months.max() > 12):
        raise ValueError("month out of range")
    return lut[months]
