import io
import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from counterscope.calendar import SEASONS, DayType, Season
from counterscope.scoring import (
    SCORE_NAMES,
    adjusted_z,
    baseline_of,
    rank,
    read_score_report,
    score_a,
    score_b,
    score_c,
    score_card,
    score_d,
    score_e,
    seasonal_deviation,
    seasonal_from_totals,
    seasonal_score,
    week_tag,
    write_score_report,
)


def column(values):
    """Twelve monthly values at hour 0, every other hour constant at 1."""
    p = np.ones((len(values), 24))
    p[:, 0] = values
    return p


def flat(value=5.0):
    return np.full((12, 24), value)


profiles_strategy = arrays(np.float64, (12, 24), elements=st.floats(0, 1000, allow_nan=False))


# --------------------------------------------------------------------------- baseline


def test_baseline_four_lowest_identical():
    assert baseline_of(column([2, 2, 2, 2] + [10] * 8))[0] == 2


def test_baseline_one_to_twelve():
    assert baseline_of(column(range(1, 13)))[0] == 2.5


def test_baseline_constant():
    np.testing.assert_array_equal(baseline_of(flat(7.5)), np.full(24, 7.5))


def test_baseline_is_per_hour():
    p = np.tile(np.arange(24.0), (12, 1))
    np.testing.assert_array_equal(baseline_of(p), np.arange(24.0))


def test_baseline_needs_four_periods():
    with pytest.raises(ValueError):
        baseline_of(np.ones((3, 24)))


@given(profiles_strategy)
@settings(max_examples=100, deadline=None)
def test_baseline_below_median(p):
    b = baseline_of(p)
    for h in range(24):
        assert b[h] == pytest.approx(sum(sorted(p[:, h])[:4]) / 4, rel=1e-12, abs=1e-12)
        assert b[h] <= np.median(p[:, h]) + 1e-9


# --------------------------------------------------------------------------- A-E examples


def test_scores_zero_when_at_baseline():
    p = flat()
    b = baseline_of(p)
    assert score_a(p, b)[0] == 0
    assert score_b(p, b)[0] == 0
    assert score_c(p)[0] == 0
    assert score_d(p, b)[0] == 0
    assert score_e(p, b)[0] == 0


def test_score_a_single_cell():
    p = flat()
    p[4, 9] += 7
    value, cell = score_a(p, baseline_of(p))
    assert value == 7 and cell == (4, 9)


def test_score_a_two_cells():
    p = flat()
    p[1, 2] += 3
    p[6, 20] += 9
    assert score_a(p, baseline_of(p)) == (9, (6, 20))


def test_score_a_clamped_at_zero():
    assert score_a(flat(), np.full(24, 8.0))[0] == 0


def test_score_b_ratio():
    p = flat(2.0)
    p[7, 12] = 6
    assert score_b(p, baseline_of(p))[0] == 2.0


def test_score_b_epsilon_guard():
    p = flat(0.0)
    p[7, 12] = 5
    assert score_b(p, baseline_of(p))[0] == 5.0


def test_score_c_hand_computed():
    p = np.ones((2, 24))
    p[:, 5] = [1, 3]
    value, hour = score_c(p)
    assert value == pytest.approx((math.sqrt(2) / 2) / 24, rel=1e-12)
    assert hour == 5


def test_score_c_zero_mean_hour():
    p = flat()
    p[:, 3] = 0
    assert score_c(p)[0] == 0


def test_score_c_scale_invariant():
    rng = np.random.default_rng(2)
    p = rng.uniform(1, 100, (12, 24))
    assert score_c(10 * p)[0] == pytest.approx(score_c(p)[0], rel=1e-12)


def test_score_d_uniform_month():
    p = flat()
    p[3] += 1
    assert score_d(p, baseline_of(p))[0] == 24


def test_score_d_absolute_values():
    p = flat(10.0)
    b = np.full(24, 10.0)
    p[0, 0] = 13
    p[5, 5] = 7
    assert score_d(p, b)[0] == 6


def test_score_e_single_outlier():
    p = column([10] * 11 + [20])
    p[:, 1:] = 10
    b = baseline_of(p)
    s = np.std([10] * 11 + [20], ddof=1)
    value, cell = score_e(p, b)
    assert value == pytest.approx(10 / s, rel=1e-12)
    assert cell == (11, 0)


def test_score_e_identical_months():
    assert score_e(flat(3), baseline_of(flat(3)))[0] == 0


@given(profiles_strategy, st.floats(0.1, 50), st.floats(-100, 100))
@settings(max_examples=100, deadline=None)
def test_adjusted_z_per_hour_affine_invariance(p, alpha, beta):
    s = p.std(axis=0, ddof=1)
    if s.min() < 1e-3:
        return
    z = adjusted_z(p, baseline_of(p))
    q = alpha * p + beta
    np.testing.assert_allclose(adjusted_z(q, baseline_of(q)), z, rtol=1e-7, atol=1e-7)


def test_affine_invariance_with_hour_specific_coefficients():
    rng = np.random.default_rng(5)
    p = rng.uniform(10, 100, (12, 24))
    alpha = rng.uniform(0.5, 3, 24)
    beta = rng.uniform(-5, 5, 24)
    q = alpha * p + beta
    np.testing.assert_allclose(adjusted_z(q, baseline_of(q)), adjusted_z(p, baseline_of(p)), rtol=1e-10)


# --------------------------------------------------------------------------- invariants


@given(profiles_strategy)
@settings(max_examples=150, deadline=None)
def test_scores_nonnegative_and_d_dominates_a(p):
    card = score_card(("X", 1, DayType.WORKDAY), p)
    for name in SCORE_NAMES:
        v = card.score(name)
        assert v >= 0 and math.isfinite(v)
    assert card.score_d >= card.score_a - 1e-9


@given(profiles_strategy, st.floats(0.01, 100))
@settings(max_examples=100, deadline=None)
def test_scale_behaviour(p, alpha):
    ref = score_card(("X", 1, DayType.WORKDAY), p)
    scaled = score_card(("X", 1, DayType.WORKDAY), alpha * p)
    assert scaled.score_a == pytest.approx(alpha * ref.score_a, rel=1e-9, abs=1e-9)
    assert scaled.score_d == pytest.approx(alpha * ref.score_d, rel=1e-9, abs=1e-7)
    assert scaled.score_c == pytest.approx(ref.score_c, rel=1e-9, abs=1e-12)


def test_rankings_invariant_under_uniform_rescale():
    rng = np.random.default_rng(9)
    blocks = {f"C{i:02d}": rng.uniform(20, 200, (12, 24)) for i in range(15)}
    for name in SCORE_NAMES:
        ref = [r.counter_id for r in rank([score_card((c, 1, DayType.WORKDAY), p) for c, p in blocks.items()], name, 15)]
        got = [r.counter_id for r in rank([score_card((c, 1, DayType.WORKDAY), 3.7 * p) for c, p in blocks.items()], name, 15)]
        assert ref == got, name


def test_score_card_argmax_context_uses_period_labels():
    p = flat()
    p[9, 18] = 50
    card = score_card(("X", 2, DayType.WEEKEND), p)
    assert card.argmax["score_e"] == (10, 18)
    assert card.argmax["score_a"] == (10, 18)
    assert card.argmax["score_c"][0] is None


def test_unknown_score_name():
    card = score_card(("X", 1, DayType.WORKDAY), flat())
    with pytest.raises(KeyError):
        card.score("score_f")
    with pytest.raises(KeyError):
        rank([card], "score_f")


def test_score_report_round_trip():
    rng = np.random.default_rng(4)
    cards = [score_card((f"C{i}", 1 + i % 2, DayType.WEEKEND), rng.uniform(0, 50, (12, 24))) for i in range(4)]
    buf = io.StringIO()
    write_score_report(cards, buf, header=["h"])
    back = read_score_report(io.StringIO(buf.getvalue()))
    for a, b in zip(cards, back):
        assert a.key == b.key
        for name in SCORE_NAMES:
            assert b.score(name) == pytest.approx(a.score(name), abs=5e-7)
        assert a.argmax["score_e"] == b.argmax["score_e"]


# --------------------------------------------------------------------------- seasonal


def test_winter_share_example():
    counter = {Season.WINTER: 0.30, Season.SPRING: 0.25, Season.SUMMER: 0.25, Season.AUTUMN: 0.20}
    corpus = {Season.WINTER: 0.26, Season.SPRING: 0.25, Season.SUMMER: 0.25, Season.AUTUMN: 0.24}
    dev = seasonal_deviation(counter, corpus)
    assert abs(dev[Season.WINTER] - 0.04) <= 1e-12


def test_winter_share_example_end_to_end():
    # two equal-volume counters: winter 30/100 and 22/100 pool to 26/100
    totals = pd.DataFrame(
        {"spring": [25.0, 26.0], "summer": [25.0, 26.0], "autumn": [20.0, 26.0], "winter": [30.0, 22.0]},
        index=pd.MultiIndex.from_tuples([("A", 1), ("B", 1)], names=["counter_id", "direction"]),
    )
    cards = seasonal_from_totals(totals)
    assert abs(cards[0].deviations[Season.WINTER] - 0.04) <= 1e-12
    assert cards[0].argmax_season is Season.WINTER


def test_uniform_counter_in_uniform_corpus(make_frame, make_dataset):
    cards = seasonal_score(make_dataset(make_frame("A", year=2015), make_frame("B", year=2015)))
    for c in cards:
        for s in SEASONS:
            assert c.deviations[s] == 0


def test_seasonal_shares_and_deviation_sums(make_frame, make_dataset):
    rng = np.random.default_rng(12)
    data = make_dataset(*[make_frame(f"C{i}", fn=lambda d, h, dr: rng.integers(0, 100, len(d))) for i in range(5)])
    for c in seasonal_score(data):
        assert abs(sum(c.shares.values()) - 1) < 1e-9
        assert abs(sum(c.deviations.values())) < 1e-9


def test_winter_loaded_counter_wins_winter(make_frame, make_dataset):
    ski = make_frame("SKI", fn=lambda d, h, dr: np.where(np.isin(d.month, [12, 1, 2]), 50, 10))
    data = make_dataset(ski, make_frame("A"), make_frame("B"))
    best = rank(seasonal_score(data), "dev_winter", 1)[0]
    assert best.counter_id == "SKI"
    assert best.card.argmax_season is Season.WINTER


# --------------------------------------------------------------------------- week tags and rank


@pytest.mark.parametrize(
    "shares,tag,share",
    [((0.6, 0.4), DayType.WEEKEND, 0.6), ((0.5, 0.5), DayType.WORKDAY, 0.5), ((0.1, 0.9), DayType.WORKDAY, 0.9)],
)
def test_week_tag(shares, tag, share):
    out = week_tag({("X", 1): shares})[("X", 1)]
    assert out.tag is tag and out.share == share


class _Card:
    def __init__(self, cid, value, direction=1):
        self.counter_id = cid
        self.key = (cid, direction)
        self.value = value

    def score(self, name):
        if name != "s":
            raise KeyError(name)
        return self.value


def test_rank_top_two():
    assert [r.counter_id for r in rank([_Card("X", 5), _Card("Y", 3), _Card("Z", 9)], "s", 2)] == ["Z", "X"]


def test_rank_unique_counter_keeps_best_direction():
    out = rank([_Card("X", 4, 1), _Card("X", 7, 2)], "s", 1)
    assert len(out) == 1 and out[0].score == 7 and out[0].card.key == ("X", 2)


def test_rank_ties_by_counter_id():
    out = rank([_Card("B", 1), _Card("A", 1), _Card("C", 2)], "s", 3)
    assert [r.counter_id for r in out] == ["C", "A", "B"]


def test_rank_rejects_k_zero():
    with pytest.raises(ValueError):
        rank([_Card("A", 1)], "s", 0)


@given(st.lists(st.tuples(st.sampled_from("ABCDEFG"), st.integers(0, 20)), min_size=1, max_size=30), st.integers(1, 10))
@settings(max_examples=100, deadline=None)
def test_rank_is_deterministic_prefix(items, k):
    cards = [_Card(c, v) for c, v in items]
    out = rank(cards, "s", k)
    again = rank(list(reversed(cards)), "s", k)
    assert [(r.counter_id, r.score) for r in out] == [(r.counter_id, r.score) for r in again]
    ids = [r.counter_id for r in out]
    assert len(ids) == len(set(ids)) == min(k, len({c for c, _ in items}))
    full = [r.counter_id for r in rank(cards, "s", 100)]
    assert ids == full[: len(ids)]
