"""Synthetic counter corpora with planted ground truth.

Each counter follows an archetype (hourly shape per direction and day type,
monthly amplification, peak magnitude). Planted events then scale or zero
counts inside a date/hour window. The generator is deterministic for a given
seed, and each counter draws from its own RNG stream keyed by
(seed, counter_id).
"""

from __future__ import annotations

import datetime as dt
import enum
import json
import zlib
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .calendar import HolidayCalendar, load_holidays, weekend_mask
from .ingest import CounterMeta, empty_frame

HOURS = np.arange(24)


class Archetype(str, enum.Enum):
    COMMUTER = "commuter"
    SUMMER_TOURIST = "summer_tourist"
    WINTER_RESORT = "winter_resort"
    BORDER_WEEKEND = "border_weekend"
    FLAT = "flat"


class EventKind(str, enum.Enum):
    FESTIVAL_SPIKE = "festival_spike"
    ROAD_CLOSURE = "road_closure"
    ACCIDENT_DAY = "accident_day"


# peak vehicles/hour of the reference (unamplified) workday profile
MAGNITUDE = {
    Archetype.COMMUTER: 500.0,
    Archetype.SUMMER_TOURIST: 150.0,
    Archetype.WINTER_RESORT: 150.0,
    Archetype.BORDER_WEEKEND: 150.0,
    Archetype.FLAT: 50.0,
}

# Jan..Dec
MONTH_FACTOR = {
    Archetype.COMMUTER: [1.0] * 12,
    Archetype.SUMMER_TOURIST: [0.3, 0.3, 0.5, 0.7, 0.9, 1.8, 2.5, 2.5, 1.2, 0.7, 0.4, 0.3],
    Archetype.WINTER_RESORT: [3.0, 3.0, 1.2, 0.6, 0.5, 0.5, 0.6, 0.6, 0.5, 0.5, 0.8, 2.5],
    Archetype.BORDER_WEEKEND: [0.8, 0.8, 0.9, 1.0, 1.1, 1.3, 1.4, 1.4, 1.1, 1.0, 0.9, 0.9],
    Archetype.FLAT: [1.0] * 12,
}

WEEKEND_FACTOR = {
    Archetype.SUMMER_TOURIST: 1.3,
    Archetype.WINTER_RESORT: 1.5,
}


def _bump(center: float, width: float) -> np.ndarray:
    return np.exp(-0.5 * ((HOURS - center) / width) ** 2)


def _peak1(shape: np.ndarray) -> np.ndarray:
    return shape / shape.max()


def archetype_shapes(arch: Archetype) -> np.ndarray:
    """Relative hourly level, shape (7 weekdays, 2 directions, 24 hours), plus a holiday row at index 7.

    Row 7 is used for public holidays that fall on a workday.
    """
    out = np.zeros((8, 2, 24))
    if arch is Archetype.FLAT:
        out[:] = 1.0
        return out
    if arch is Archetype.COMMUTER:
        inbound = _peak1(0.04 + _bump(7, 0.9) + 0.35 * _bump(15, 1.2) + 0.25 * _bump(12, 3.0))
        outbound = _peak1(0.04 + 0.35 * _bump(7, 0.9) + _bump(15, 1.0) + 0.25 * _bump(12, 3.0))
        weekend = 0.45 * _peak1(0.08 + _bump(13, 3.0))
        out[:5, 0], out[:5, 1] = inbound, outbound
        out[5:, :] = weekend
        return out
    if arch is Archetype.SUMMER_TOURIST:
        inbound = _peak1(0.05 + _bump(12, 1.5) + 0.5 * _bump(17, 1.5))
        outbound = _peak1(0.05 + 0.5 * _bump(12, 1.5) + _bump(17, 1.5))
    elif arch is Archetype.WINTER_RESORT:
        inbound = _peak1(0.05 + _bump(8, 1.0) + 0.2 * _bump(13, 1.5))
        outbound = _peak1(0.05 + 0.2 * _bump(8, 1.0) + _bump(13, 0.8) + _bump(16, 0.8))
    else:
        base = 0.05 + 0.4 * _bump(8, 1.5) + 0.4 * _bump(16, 1.5)
        out[:, 0] = base
        out[:, 1] = base
        out[4, 1] = base + _bump(18, 1.5)  # Friday evening, leaving
        out[5, 1] = base + _bump(8, 1.5)  # Saturday morning, leaving
        out[6, 0] = base + _bump(18, 1.5)  # Sunday evening, returning
        out[7] = base
        return out / out.max()
    factor = WEEKEND_FACTOR.get(arch, 1.0)
    out[:, 0], out[:, 1] = inbound, outbound
    out[5:, :] *= factor
    return out


@dataclass(frozen=True)
class PlantedEvent:
    counter_id: str
    kind: EventKind
    start: dt.date
    end: dt.date
    hour_start: int = 0
    hour_end: int = 23
    magnitude: float = 1.0
    # None applies to both directions; festival spikes then split the hour
    # window, inbound first half and outbound second half
    direction: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", EventKind(self.kind))
        if self.end < self.start:
            raise ValueError(f"event window ends before it starts: {self.start}..{self.end}")
        if not 0 <= self.hour_start <= self.hour_end <= 23:
            raise ValueError(f"bad hour window {self.hour_start}..{self.hour_end}")
        if self.kind is EventKind.ROAD_CLOSURE:
            if self.magnitude != 0:
                raise ValueError("road closure magnitude must be 0")
        elif not self.magnitude > 0:
            raise ValueError(f"{self.kind.value} magnitude must be > 0")
        if self.direction not in (None, 1, 2):
            raise ValueError(f"bad direction {self.direction}")

    def to_json(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        d["start"], d["end"] = self.start.isoformat(), self.end.isoformat()
        return d


@dataclass
class ScenarioSpec:
    archetypes: Sequence[Archetype]
    years: Sequence[int] = (2016,)
    seed: int = 42
    planted_events: Sequence[PlantedEvent] = ()
    noise_level: float = 0.0
    n_counters: int | None = None
    holidays: HolidayCalendar | None = None
    # per-counter multiplier on the archetype magnitude (default 1)
    scales: Sequence[float] | None = None
    # counters planted through their archetype rather than an event
    targets: Sequence[str] = ()

    def __post_init__(self):
        self.archetypes = [Archetype(a) for a in self.archetypes]
        if self.n_counters is None:
            self.n_counters = len(self.archetypes)
        if self.n_counters < 1 or len(self.archetypes) != self.n_counters:
            raise ValueError("archetype list length must equal n_counters >= 1")
        if self.noise_level < 0:
            raise ValueError("noise_level must be >= 0")
        self.scales = [1.0] * self.n_counters if self.scales is None else [float(x) for x in self.scales]
        if len(self.scales) != self.n_counters or min(self.scales) <= 0:
            raise ValueError("scales must hold one positive multiplier per counter")
        self.years = sorted(set(self.years))
        ids = set(counter_ids(self.n_counters))
        for cid in self.targets:
            if cid not in ids:
                raise ValueError(f"unknown target counter {cid}")
        for ev in self.planted_events:
            if ev.counter_id not in ids:
                raise ValueError(f"event for unknown counter {ev.counter_id}")
            if ev.start.year not in self.years or ev.end.year not in self.years:
                raise ValueError(f"event window {ev.start}..{ev.end} outside covered years")


def counter_ids(n: int) -> list[str]:
    return [f"S{i:03d}" for i in range(1, n + 1)]


def _stream(seed: int, counter_id: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(counter_id.encode())]))


def _location(counter_id: str) -> tuple[float, float]:
    rng = np.random.default_rng(zlib.crc32(counter_id.encode()))
    return round(float(rng.uniform(45.45, 46.85)), 6), round(float(rng.uniform(13.4, 16.5)), 6)


def _expected(arch: Archetype, days: pd.DatetimeIndex, holiday_workday: np.ndarray) -> np.ndarray:
    """Noise-free hourly means, shape (days, 2, 24)."""
    shapes = archetype_shapes(arch)
    row = np.where(holiday_workday, 7, days.weekday.to_numpy())
    if arch is Archetype.COMMUTER or arch in WEEKEND_FACTOR:
        # holidays look like a Sunday
        row = np.where(holiday_workday, 6, row)
    month = np.asarray(MONTH_FACTOR[arch])[days.month.to_numpy() - 1]
    return MAGNITUDE[arch] * shapes[row] * month[:, None, None]


def _apply_event(values: np.ndarray, days: pd.DatetimeIndex, ev: PlantedEvent) -> None:
    in_window = (days >= pd.Timestamp(ev.start)) & (days <= pd.Timestamp(ev.end))
    if not in_window.any():
        return
    hs, he = ev.hour_start, ev.hour_end
    if ev.direction is not None:
        windows = {ev.direction - 1: (hs, he)}
    elif ev.kind is EventKind.FESTIVAL_SPIKE and he > hs:
        mid = (hs + he) // 2
        windows = {0: (hs, mid), 1: (mid + 1, he)}
    else:
        windows = {0: (hs, he), 1: (hs, he)}
    for d, (a, b) in windows.items():
        values[in_window, d, a : b + 1] *= ev.magnitude


def generate(spec: ScenarioSpec) -> tuple[pd.DataFrame, dict]:
    """Hourly counts for every counter, direction and day, plus a ground-truth manifest.

    Returns a count frame (columns ``counter_id, direction, date, hour, count``)
    sorted by counter, direction, date and hour.
    """
    holidays = spec.holidays if spec.holidays is not None else load_holidays()
    days = pd.date_range(f"{spec.years[0]}-01-01", f"{spec.years[-1]}-12-31", freq="D")
    days = days[days.year.isin(spec.years)]
    weekend = weekend_mask(days, holidays)
    holiday_workday = weekend & (days.weekday < 5)
    ids = counter_ids(spec.n_counters)
    by_counter: dict[str, list[PlantedEvent]] = {}
    for ev in spec.planted_events:
        by_counter.setdefault(ev.counter_id, []).append(ev)

    n_days = len(days)
    parts = []
    for cid, arch, scale in zip(ids, spec.archetypes, spec.scales):
        values = scale * _expected(arch, days, holiday_workday)
        if spec.noise_level > 0:
            rng = _stream(spec.seed, cid)
            values = values * np.exp(spec.noise_level * rng.standard_normal(values.shape))
        for ev in by_counter.get(cid, ()):
            _apply_event(values, days, ev)
        counts = np.rint(values).astype(np.int64)
        # (days, dir, hour) -> rows ordered by dir, day, hour
        counts = counts.transpose(1, 0, 2).reshape(-1)
        parts.append(
            pd.DataFrame(
                {
                    "counter_id": cid,
                    "direction": np.repeat(np.array([1, 2], dtype=np.int8), n_days * 24),
                    "date": np.tile(np.repeat(days.values, 24), 2),
                    "hour": np.tile(np.arange(24, dtype=np.int8), 2 * n_days),
                    "count": counts,
                }
            )
        )
    frame = pd.concat(parts, ignore_index=True) if parts else empty_frame()

    truth = {
        "seed": spec.seed,
        "years": list(spec.years),
        "noise_level": spec.noise_level,
        "counters": [
            {
                "counter_id": cid,
                "archetype": arch.value,
                "scale": scale,
                "lat": _location(cid)[0],
                "lon": _location(cid)[1],
            }
            for cid, arch, scale in zip(ids, spec.archetypes, spec.scales)
        ],
        "events": [ev.to_json() for ev in spec.planted_events],
        "planted": sorted(set(by_counter) | set(spec.targets)),
        "constants": {
            "magnitude": {a.value: MAGNITUDE[a] for a in Archetype},
            "month_factor": {a.value: MONTH_FACTOR[a] for a in Archetype},
            "weekend_factor": {a.value: WEEKEND_FACTOR[a] for a in WEEKEND_FACTOR},
        },
    }
    return frame, truth


def scenario_meta(truth: dict) -> dict[str, CounterMeta]:
    return {
        c["counter_id"]: CounterMeta(c["counter_id"], c["lat"], c["lon"], f"synthetic {c['archetype']}")
        for c in truth["counters"]
    }


def truth_json(truth: dict) -> str:
    return json.dumps(truth, indent=2, sort_keys=True) + "\n"


def manifest_check(truth: dict, detections: Iterable[str], k: int | None = None) -> tuple[float, float]:
    """Precision and recall at k of ranked counter ids against the planted set."""
    detections = list(detections)
    known = {c["counter_id"] for c in truth["counters"]}
    stray = [d for d in detections if d not in known]
    if stray:
        raise ValueError(f"detection {stray[0]} is not a counter of this corpus")
    planted = set(truth["planted"])
    top = detections[:k] if k is not None else detections
    hits = len(planted.intersection(top))
    precision = hits / len(top) if top else 0.0
    recall = hits / len(planted) if planted else 0.0
    return precision, recall


# --------------------------------------------------------------------------- presets


def _mixed(n: int) -> list[Archetype]:
    return [Archetype.COMMUTER if i % 2 == 0 else Archetype.FLAT for i in range(n)]


def festival_scenario(seed: int = 42, n_counters: int = 50, noise: float = 0.1, planted: int = 25) -> ScenarioSpec:
    """One counter gets an 8x festival spike on an October 2016 weekend, hours 10-17."""
    cid = counter_ids(n_counters)[planted - 1]
    ev = PlantedEvent(cid, EventKind.FESTIVAL_SPIKE, dt.date(2016, 10, 15), dt.date(2016, 10, 16), 10, 17, 8.0)
    return ScenarioSpec(_mixed(n_counters), years=(2016,), seed=seed, planted_events=[ev], noise_level=noise)


def winter_scenario(seed: int = 42, n_counters: int = 50, noise: float = 0.1, planted: int = 25) -> ScenarioSpec:
    """One winter-resort counter among commuter and flat counters."""
    arch = _mixed(n_counters)
    arch[planted - 1] = Archetype.WINTER_RESORT
    cid = counter_ids(n_counters)[planted - 1]
    return ScenarioSpec(arch, years=(2016,), seed=seed, noise_level=noise, targets=[cid])


def closure_scenario(seed: int = 42, n_counters: int = 50, noise: float = 0.1, planted: int = 25) -> ScenarioSpec:
    """A month-long closure (15 March to 14 April 2016) on one commuter counter."""
    arch = _mixed(n_counters)
    arch[planted - 1] = Archetype.COMMUTER
    cid = counter_ids(n_counters)[planted - 1]
    ev = PlantedEvent(cid, EventKind.ROAD_CLOSURE, dt.date(2016, 3, 15), dt.date(2016, 4, 14), 0, 23, 0.0)
    return ScenarioSpec(arch, years=(2016,), seed=seed, planted_events=[ev], noise_level=noise)


def magnitude_scenario(seed: int = 42, n_counters: int = 40, noise: float = 0.1, ratio: float = 10.0) -> ScenarioSpec:
    """Flat counters in two traffic classes: odd ids at base level, even ids ``ratio`` times higher.

    The high-traffic counters are the manifest targets.
    """
    scales = [ratio if i % 2 else 1.0 for i in range(n_counters)]
    ids = counter_ids(n_counters)
    targets = [cid for cid, s in zip(ids, scales) if s != 1.0]
    return ScenarioSpec([Archetype.FLAT] * n_counters, years=(2016,), seed=seed, noise_level=noise,
                        scales=scales, targets=targets)


def daytype_scenario(seed: int = 42, n_counters: int = 30, noise: float = 0.1) -> ScenarioSpec:
    """Commuter counters only: peaked workday shapes against broad weekend shapes."""
    return ScenarioSpec([Archetype.COMMUTER] * n_counters, years=(2016,), seed=seed, noise_level=noise)


PRESETS = {
    "festival": festival_scenario,
    "winter": winter_scenario,
    "closure": closure_scenario,
    "magnitude": magnitude_scenario,
    "daytype": daytype_scenario,
}
