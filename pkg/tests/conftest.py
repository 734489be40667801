import datetime as dt

import numpy as np
import pandas as pd
import pytest

from counterscope.calendar import HolidayCalendar, load_holidays
from counterscope.ingest import CleanDataset


@pytest.fixture(scope="session")
def si_holidays():
    return load_holidays()


@pytest.fixture
def no_holidays():
    return HolidayCalendar()


def hourly_frame(counter_id="C1", year=2016, value=10, directions=(1, 2), fn=None):
    """Every hour of ``year`` for one counter; ``fn(timestamp_index, hour, direction)`` overrides the constant."""
    days = pd.date_range(f"{year}-01-01", f"{year}-12-31", freq="D")
    parts = []
    for d in directions:
        date = np.repeat(days.values, 24)
        hour = np.tile(np.arange(24), len(days))
        if fn is None:
            count = np.full(len(date), value, dtype=np.int64)
        else:
            count = np.asarray(fn(pd.DatetimeIndex(date), hour, d)).astype(np.int64)
        parts.append(pd.DataFrame({"counter_id": counter_id, "direction": np.int8(d), "date": date,
                                   "hour": hour.astype(np.int8), "count": count}))
    return pd.concat(parts, ignore_index=True)


def dataset(*frames):
    frame = pd.concat(frames, ignore_index=True)
    years = set(pd.DatetimeIndex(frame["date"]).year)
    return CleanDataset(frame, {}, years, [], frame["counter_id"].nunique())


@pytest.fixture
def make_frame():
    return hourly_frame


@pytest.fixture
def make_dataset():
    return dataset


@pytest.fixture
def rng():
    return np.random.default_rng(20161015)


DATE = dt.date


def pytest_terminal_summary(terminalreporter):
    lines = []
    for status in ("passed", "failed"):
        for rep in terminalreporter.stats.get(status, []):
            props = dict(getattr(rep, "user_properties", []))
            if rep.when == "call" and "criterion" in props:
                lines.append((props["criterion"], props.get("verdict", status.upper())))
    if lines:
        terminalreporter.section("acceptance criteria")
        for n, text in sorted(lines):
            terminalreporter.write_line(f"ACCEPTANCE {n} {text}")
