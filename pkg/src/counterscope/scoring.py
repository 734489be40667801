"""Baseline profile, interestingness scores A-E, seasonal and weekly statistics, ranking.

All per-counter scores take an array of shape (n_periods, 24) holding one
hourly profile per period (month or weekday).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .calendar import SEASONS, DayType, Season, season_index
from .ingest import CleanDataset
from .profile import ProfileKey, ProfileSet

SCORE_NAMES = ("score_a", "score_b", "score_c", "score_d", "score_e")
BASELINE_WIDTH = 4
# floor for the baseline in score B, vehicles/hour
EPS_BASELINE = 1.0
# floor for the per-hour std in score E
EPS_STD = 1e-6


def _as_block(profiles) -> np.ndarray:
    p = np.asarray(profiles, dtype=float)
    if p.ndim != 2 or p.shape[1] != 24:
        raise ValueError(f"expected (periods, 24) profiles, got shape {p.shape}")
    return p


def baseline_of(profiles) -> np.ndarray:
    """Per-hour mean of the four smallest period values: the everyday commuter floor."""
    p = _as_block(profiles)
    if p.shape[0] < BASELINE_WIDTH:
        raise ValueError(f"baseline needs at least {BASELINE_WIDTH} periods, got {p.shape[0]}")
    return np.sort(p, axis=0)[:BASELINE_WIDTH].mean(axis=0)


def _argmax_cell(values: np.ndarray) -> tuple[int, int]:
    i, h = np.unravel_index(int(np.argmax(values)), values.shape)
    return int(i), int(h)


def score_a(profiles, baseline) -> tuple[float, tuple[int, int]]:
    """Largest single excess of any period over the baseline, clamped at 0."""
    diff = _as_block(profiles) - np.asarray(baseline, dtype=float)
    cell = _argmax_cell(diff)
    return max(float(diff[cell]), 0.0), cell


def score_b(profiles, baseline) -> tuple[float, tuple[int, int]]:
    b = np.asarray(baseline, dtype=float)
    rel = (_as_block(profiles) - b) / np.maximum(b, EPS_BASELINE)
    cell = _argmax_cell(rel)
    return max(float(rel[cell]), 0.0), cell


def score_c(profiles) -> tuple[float, int]:
    """Mean over hours of the across-period coefficient of variation (sample std)."""
    p = _as_block(profiles)
    if p.shape[0] < 2:
        raise ValueError("score_c needs at least 2 periods")
    mean = p.mean(axis=0)
    std = p.std(axis=0, ddof=1)
    cv = np.divide(std, mean, out=np.zeros(24), where=mean > 0)
    return float(cv.mean()), int(np.argmax(cv))


def score_d(profiles, baseline) -> tuple[float, tuple[int, int]]:
    dev = np.abs(_as_block(profiles) - np.asarray(baseline, dtype=float))
    return float(dev.sum()), _argmax_cell(dev)


def adjusted_z(profiles, baseline) -> np.ndarray:
    """z-scores with the baseline in place of the mean; std is the per-hour sample std over periods."""
    p = _as_block(profiles)
    if p.shape[0] < 2:
        raise ValueError("score_e needs at least 2 periods")
    s = p.std(axis=0, ddof=1)
    return (p - np.asarray(baseline, dtype=float)) / np.maximum(s, EPS_STD)


def score_e(profiles, baseline) -> tuple[float, tuple[int, int]]:
    z = adjusted_z(profiles, baseline)
    cell = _argmax_cell(z)
    return max(float(z[cell]), 0.0), cell


@dataclass
class ScoreCard:
    key: ProfileKey
    score_a: float
    score_b: float
    score_c: float
    score_d: float
    score_e: float
    # score name -> (period index, hour); period is None for score_c
    argmax: dict[str, tuple[int | None, int]] = field(default_factory=dict)

    @property
    def counter_id(self) -> str:
        return self.key[0]

    def score(self, name: str) -> float:
        if name not in SCORE_NAMES:
            raise KeyError(f"unknown score {name!r}")
        return getattr(self, name)


def score_card(key: ProfileKey, profiles, periods: Sequence[int] | None = None) -> ScoreCard:
    p = _as_block(profiles)
    periods = list(periods) if periods is not None else list(range(1, p.shape[0] + 1))
    b = baseline_of(p)
    a, ca = score_a(p, b)
    rb, cb = score_b(p, b)
    c, hc = score_c(p)
    d, cd = score_d(p, b)
    e, ce = score_e(p, b)
    argmax = {
        "score_a": (periods[ca[0]], ca[1]),
        "score_b": (periods[cb[0]], cb[1]),
        "score_c": (None, hc),
        "score_d": (periods[cd[0]], cd[1]),
        "score_e": (periods[ce[0]], ce[1]),
    }
    return ScoreCard(key, a, rb, c, d, e, argmax)


def score_profiles(ps: ProfileSet) -> list[ScoreCard]:
    return [score_card(key, ps[key], ps.mode.periods) for key in ps.keys()]


@dataclass
class SeasonalScoreCard:
    key: tuple[str, int]
    shares: dict[Season, float]
    deviations: dict[Season, float]

    @property
    def counter_id(self) -> str:
        return self.key[0]

    @property
    def argmax_season(self) -> Season:
        # first season in calendar order wins ties
        return max(SEASONS, key=lambda s: (self.deviations[s], -SEASONS.index(s)))

    @property
    def max_deviation(self) -> float:
        return self.deviations[self.argmax_season]

    def score(self, name: str) -> float:
        if name == "max_deviation":
            return self.max_deviation
        if name.startswith("dev_"):
            try:
                return self.deviations[Season(name[4:])]
            except ValueError:
                pass
        if name in {s.value for s in SEASONS}:
            return self.shares[Season(name)]
        raise KeyError(f"unknown score {name!r}")


def season_totals(data: CleanDataset) -> pd.DataFrame:
    """Total vehicles per (counter_id, direction) and season; columns in SEASONS order."""
    frame = data.frame
    months = pd.DatetimeIndex(frame["date"]).month.to_numpy()
    work = pd.DataFrame(
        {
            "counter_id": frame["counter_id"].to_numpy(),
            "direction": frame["direction"].to_numpy().astype(np.int64),
            "season": season_index(months),
            "count": frame["count"].to_numpy().astype(np.float64),
        }
    )
    table = work.groupby(["counter_id", "direction", "season"], sort=True)["count"].sum().unstack("season")
    table = table.reindex(columns=range(len(SEASONS)), fill_value=0.0).fillna(0.0)
    table.columns = [s.value for s in SEASONS]
    return table


def seasonal_deviation(shares: Mapping[Season, float], corpus_shares: Mapping[Season, float]) -> dict[Season, float]:
    return {s: shares[s] - corpus_shares[s] for s in SEASONS}


def seasonal_from_totals(totals: pd.DataFrame) -> list[SeasonalScoreCard]:
    values = totals[[s.value for s in SEASONS]].to_numpy(dtype=float)
    pooled = values.sum(axis=0)
    corpus = dict(zip(SEASONS, pooled / pooled.sum())) if pooled.sum() > 0 else {s: 0.25 for s in SEASONS}
    cards = []
    for (cid, d), row in zip(totals.index, values):
        total = row.sum()
        shares = dict(zip(SEASONS, row / total)) if total > 0 else {s: 0.0 for s in SEASONS}
        cards.append(SeasonalScoreCard((cid, int(d)), shares, seasonal_deviation(shares, corpus)))
    return cards


def seasonal_score(data: CleanDataset) -> list[SeasonalScoreCard]:
    """Share of each counter direction's traffic per season, minus the pooled corpus share."""
    return seasonal_from_totals(season_totals(data))


@dataclass(frozen=True)
class WeekTag:
    key: tuple[str, int]
    tag: DayType
    share: float


def week_tag(shares: Mapping[tuple[str, int], tuple[float, float]]) -> dict[tuple[str, int], WeekTag]:
    out = {}
    for key in sorted(shares):
        weekend, workday = shares[key]
        if weekend > workday:
            out[key] = WeekTag(key, DayType.WEEKEND, weekend)
        else:
            out[key] = WeekTag(key, DayType.WORKDAY, workday)
    return out


@dataclass(frozen=True)
class Ranked:
    counter_id: str
    score: float
    card: object


def rank(cards: Iterable, by: str, k: int = 10) -> list[Ranked]:
    """Top-k unique counters by ``by``, descending; each counter keeps its best card."""
    if k < 1:
        raise ValueError("k must be >= 1")
    best: dict[str, Ranked] = {}
    for card in cards:
        value = card.score(by)
        cid = card.counter_id
        if cid not in best or value > best[cid].score:
            best[cid] = Ranked(cid, float(value), card)
    ordered = sorted(best.values(), key=lambda r: (-r.score, r.counter_id))
    return ordered[:k]


def _fmt(x: float) -> str:
    return f"{x:.6f}"


SCORE_COLUMNS = ["counter_id", "direction", "daytype", *SCORE_NAMES, "argmax_month", "argmax_hour"]


def write_score_report(cards: Sequence[ScoreCard], stream: IO[str], header: Sequence[str] = ()) -> None:
    """Score CSV; the argmax columns locate the score_e peak."""
    for line in header:
        stream.write(f"# {line}\n")
    stream.write(",".join(SCORE_COLUMNS) + "\n")
    for c in cards:
        period, hour = c.argmax["score_e"]
        cid, d, dtp = c.key
        scores = ",".join(_fmt(c.score(n)) for n in SCORE_NAMES)
        stream.write(f"{cid},{d},{dtp.value},{scores},{period},{hour}\n")


def read_score_report(stream: IO[str]) -> list[ScoreCard]:
    lines = [ln for ln in stream.read().splitlines() if ln and not ln.startswith("#")]
    cards = []
    for ln in lines[1:]:
        p = ln.split(",")
        key = (p[0], int(p[1]), DayType(p[2]))
        vals = [float(v) for v in p[3:8]]
        cards.append(ScoreCard(key, *vals, argmax={"score_e": (int(p[8]), int(p[9]))}))
    return cards


SEASONAL_COLUMNS = (
    ["counter_id", "direction"]
    + [s.value for s in SEASONS]
    + [f"dev_{s.value}" for s in SEASONS]
    + ["argmax_season"]
)


def write_seasonal_report(cards: Sequence[SeasonalScoreCard], stream: IO[str], header: Sequence[str] = ()) -> None:
    for line in header:
        stream.write(f"# {line}\n")
    stream.write(",".join(SEASONAL_COLUMNS) + "\n")
    for c in cards:
        shares = ",".join(_fmt(c.shares[s]) for s in SEASONS)
        devs = ",".join(_fmt(c.deviations[s]) for s in SEASONS)
        stream.write(f"{c.key[0]},{c.key[1]},{shares},{devs},{c.argmax_season.value}\n")


def write_weektag_report(
    tags: Mapping[tuple[str, int], WeekTag],
    shares: Mapping[tuple[str, int], tuple[float, float]],
    stream: IO[str],
    header: Sequence[str] = (),
) -> None:
    for line in header:
        stream.write(f"# {line}\n")
    stream.write("counter_id,direction,weekend_share,workday_share,tag,share\n")
    for key in sorted(tags):
        t = tags[key]
        wk, wd = shares[key]
        stream.write(f"{key[0]},{key[1]},{_fmt(wk)},{_fmt(wd)},{t.tag.value},{_fmt(t.share)}\n")


def write_ranking(ranked: Sequence[Ranked], by: str, stream: IO[str], header: Sequence[str] = ()) -> None:
    for line in header:
        stream.write(f"# {line}\n")
    stream.write("rank,counter_id,score,direction,daytype\n")
    for i, r in enumerate(ranked, start=1):
        key = r.card.key
        daytype = key[2].value if len(key) > 2 else ""
        stream.write(f"{i},{r.counter_id},{_fmt(r.score)},{key[1]},{daytype}\n")
