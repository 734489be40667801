"""Acceptance criteria, one test each.

Each test records a one-line verdict through ``record_property``; the
terminal summary hook in conftest.py prints them as
``ACCEPTANCE <n> PASS|FAIL <detail>``.
"""

import math
import os
import time
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from counterscope import synth
from counterscope.calendar import DayType, Season, load_holidays
from counterscope.cluster import (
    adjusted_rand_index,
    cut_dendrogram,
    feature_matrix,
    kmeans,
    select_k,
    silhouette,
    spearman_distance_matrix,
    ward_hclust,
    ward_spearman,
)
from counterscope.ingest import qc_filter
from counterscope.profile import build_profiles, trimmed_mean
from counterscope.scoring import SCORE_NAMES, rank, score_card, score_profiles, seasonal_deviation, seasonal_from_totals, seasonal_score
from oracles import exhaustive_wcss, silhouette_oracle, spearman_oracle, trimmed_mean_oracle, ward_naive

pytestmark = pytest.mark.acceptance

SEEDS = range(42, 62)
HOLIDAYS = load_holidays()


def verdict(record_property, n, ok, detail):
    record_property("criterion", n)
    record_property("verdict", f"{'PASS' if ok else 'FAIL'} {detail}")
    print(f"ACCEPTANCE {n} {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


def _pipeline(spec):
    frame, truth = synth.generate(spec)
    data = qc_filter(frame)
    return data, build_profiles(data, HOLIDAYS), truth


# --------------------------------------------------------------------------- 1


def test_criterion_1_seasonal_worked_example(record_property):
    shares = {Season.WINTER: 0.30, Season.SPRING: 0.24, Season.SUMMER: 0.26, Season.AUTUMN: 0.20}
    corpus = {Season.WINTER: 0.26, Season.SPRING: 0.25, Season.SUMMER: 0.26, Season.AUTUMN: 0.23}
    direct = seasonal_deviation(shares, corpus)[Season.WINTER]
    # the same number through the full share computation: winter 30/100 and 22/100 pool to 26/100
    totals = pd.DataFrame(
        {"spring": [24.0, 26.0], "summer": [26.0, 26.0], "autumn": [20.0, 26.0], "winter": [30.0, 22.0]},
        index=pd.MultiIndex.from_tuples([("A", 1), ("B", 1)], names=["counter_id", "direction"]),
    )
    pooled = seasonal_from_totals(totals)[0].deviations[Season.WINTER]
    err = max(abs(direct - 0.04), abs(pooled - 0.04))
    verdict(record_property, 1, err <= 1e-12, f"deviation={direct:.16f} pooled={pooled:.16f} |err|={err:.1e}")


# --------------------------------------------------------------------------- 2


def test_criterion_2_planted_festival(record_property):
    hits, worst = 0, 0.0
    misses = []
    for seed in SEEDS:
        t0 = time.perf_counter()
        spec = synth.festival_scenario(seed=seed)
        _, ps, truth = _pipeline(spec)
        top = [r.counter_id for r in rank(score_profiles(ps), "score_e", 1)]
        worst = max(worst, time.perf_counter() - t0)
        p_at_1, _ = synth.manifest_check(truth, top, k=1)
        hits += p_at_1 == 1.0
        if p_at_1 != 1.0:
            misses.append(seed)
    ok = hits == len(SEEDS) and worst < 30
    verdict(record_property, 2, ok, f"P@1=1 on {hits}/{len(SEEDS)} seeds (misses {misses}); slowest run {worst:.1f}s")


# --------------------------------------------------------------------------- 3


def test_criterion_3_planted_season(record_property):
    hits = 0
    margins = []
    for seed in SEEDS:
        data, _, truth = _pipeline(synth.winter_scenario(seed=seed))
        ranked = rank(seasonal_score(data), "dev_winter", 2)
        hits += ranked[0].counter_id in truth["planted"]
        margins.append(ranked[0].score - ranked[1].score)
    verdict(record_property, 3, hits == len(SEEDS), f"rank 1 on {hits}/{len(SEEDS)} seeds; min margin {min(margins):.3f}")


# --------------------------------------------------------------------------- 4


def test_criterion_4_road_closure(record_property):
    hits = 0
    positions = []
    for seed in SEEDS:
        _, ps, truth = _pipeline(synth.closure_scenario(seed=seed))
        cards = score_profiles(ps)
        planted = truth["planted"][0]
        best = math.inf
        for name in ("score_c", "score_d"):
            ids = [r.counter_id for r in rank(cards, name, 10)]
            if planted in ids:
                best = min(best, ids.index(planted) + 1)
        hits += best <= 10
        positions.append(best)
    verdict(record_property, 4, hits == len(SEEDS), f"top 10 on {hits}/{len(SEEDS)} seeds; worst rank {max(positions)}")


# --------------------------------------------------------------------------- 5


def test_criterion_5_k_selection(record_property):
    _, ps, truth = _pipeline(synth.magnitude_scenario(seed=42))
    fm = feature_matrix(ps, period=5, normalize=False)
    best, scores, models = select_k(fm.X, range(2, 9), seed=42)
    high = set(truth["planted"])
    ari = adjusted_rand_index(models[best].labels, [k[0] in high for k in fm.keys])
    ok = best == 2 and scores[2] >= 0.7 and ari == 1.0
    verdict(record_property, 5, ok, f"k*={best} silhouette={scores[best]:.4f} ARI={ari}")


# --------------------------------------------------------------------------- 6


def test_criterion_6_shape_clustering(record_property):
    _, ps, _ = _pipeline(synth.daytype_scenario(seed=42))
    fm = feature_matrix(ps, period=5)
    labels = ward_spearman(fm, 2).labels
    weekend = np.array([d is DayType.WEEKEND for d in fm.daytypes])
    majority = sum(max(weekend[labels == c].sum(), (~weekend[labels == c]).sum()) for c in np.unique(labels))
    purity = majority / len(labels)
    verdict(record_property, 6, purity >= 0.95, f"day-type purity {100 * purity:.2f}% over {len(labels)} rows")


# --------------------------------------------------------------------------- 7


def test_criterion_7_oracle_equivalence(record_property):
    rng = np.random.default_rng(7)
    failures = []
    for i in range(100):
        xs = rng.integers(0, 500, rng.integers(1, 40)).tolist()
        if trimmed_mean(xs) != trimmed_mean_oracle(xs):
            failures.append(f"trimmed_mean#{i}")
    for i in range(100):
        n = int(rng.integers(4, 25))
        X = rng.integers(0, 6, (2, n)).astype(float)
        if np.ptp(X[0]) == 0 or np.ptp(X[1]) == 0:
            X[:, 0], X[:, 1] = [0, 0], [1, 1]
        rho = 1 - spearman_distance_matrix(X)[0, 1]
        if abs(rho - spearman_oracle(X[0], X[1])) > 1e-12:
            failures.append(f"spearman#{i}")
    for i in range(100):
        n = int(rng.integers(4, 15))
        X = rng.normal(size=(n, 3))
        labels = rng.integers(0, 3, n)
        labels[:2] = [0, 1]
        if abs(silhouette(X, labels) - silhouette_oracle(X, labels)) > 1e-12:
            failures.append(f"silhouette#{i}")
    for i in range(100):
        P = rng.normal(size=(int(rng.integers(2, 9)), 3))
        D = np.sqrt(((P[:, None] - P[None]) ** 2).sum(2))
        tree = ward_hclust(D)
        sets = [frozenset([j]) for j in range(len(P))]
        got = []
        for left, right, h, _ in tree.merges:
            got.append(({sets[left], sets[right]}, h))
            sets.append(sets[left] | sets[right])
        ref = [({a, b}, h) for a, b, h in ward_naive(D)]
        if any(g[0] != r[0] or abs(g[1] - r[1]) > 1e-9 * max(1.0, r[1]) for g, r in zip(got, ref)):
            failures.append(f"ward#{i}")
    worst = 0.0
    for i in range(100):
        n, k = int(rng.integers(4, 11)), int(rng.integers(1, 4))
        X = rng.normal(size=(n, 2))
        opt = exhaustive_wcss(X, k)
        got = kmeans(X, k, seed=i, restarts=10).inertia
        worst = max(worst, got / opt if opt > 0 else 1.0)
        if got > opt * 1.05 + 1e-12:
            failures.append(f"kmeans#{i}")
    verdict(record_property, 7, not failures, f"5x100 instances, {len(failures)} mismatches {failures[:5]}; worst k-means ratio {worst:.4f}")


# --------------------------------------------------------------------------- 8


def test_criterion_8_invariants(record_property):
    rng = np.random.default_rng(8)
    broken = []

    flat = np.full((12, 24), 37.0)
    card = score_card(("F", 1, DayType.WORKDAY), flat)
    if any(card.score(n) != 0 for n in SCORE_NAMES):
        broken.append("zero-case")

    blocks = {f"C{i:02d}": rng.uniform(5, 300, (12, 24)) for i in range(20)}
    for alpha in (0.25, 3.0, 40.0):
        for c, p in blocks.items():
            a, b = score_card((c, 1, DayType.WORKDAY), p), score_card((c, 1, DayType.WORKDAY), alpha * p)
            if not (np.isclose(b.score_a, alpha * a.score_a) and np.isclose(b.score_d, alpha * a.score_d)):
                broken.append("equivariance")
            if not all(np.isclose(b.score(n), a.score(n)) for n in ("score_b", "score_c", "score_e")):
                broken.append("invariance")
            if a.score_d < a.score_a:
                broken.append("d>=a")
        for name in SCORE_NAMES:
            ref = [r.counter_id for r in rank([score_card((c, 1, DayType.WORKDAY), p) for c, p in blocks.items()], name, 20)]
            got = [r.counter_id for r in rank([score_card((c, 1, DayType.WORKDAY), alpha * p) for c, p in blocks.items()], name, 20)]
            if ref != got:
                broken.append(f"ranking {name}")

    frame, _ = synth.generate(synth.ScenarioSpec(list(synth.Archetype), seed=8, noise_level=0.2))
    for c in seasonal_score(qc_filter(frame)):
        if abs(sum(c.deviations.values())) > 1e-9 or abs(sum(c.shares.values()) - 1) > 1e-9:
            broken.append("seasonal sums")

    tree = ward_hclust(spearman_distance_matrix(rng.uniform(0, 10, (25, 24))))
    if np.any(np.diff(tree.heights()) < -1e-12):
        broken.append("ward monotone")
    for k in range(2, 26):
        fine, coarse = cut_dendrogram(tree, k), cut_dendrogram(tree, k - 1)
        if any(len(set(coarse[fine == c])) != 1 for c in set(fine)):
            broken.append("cut refinement")

    X = rng.normal(size=(120, 24))
    runs = [kmeans(X, 4, seed=3, n_jobs=j) for j in (1, 1, 4)]
    if not all(np.array_equal(runs[0].labels, r.labels) and runs[0].inertia == r.inertia for r in runs):
        broken.append("kmeans determinism")
    data = qc_filter(frame)
    p1, p4 = build_profiles(data, HOLIDAYS, n_jobs=1), build_profiles(data, HOLIDAYS, n_jobs=4)
    if any(not np.array_equal(p1[key], p4[key]) for key in p1.keys()):
        broken.append("profile determinism")
    again, _ = synth.generate(synth.ScenarioSpec(list(synth.Archetype), seed=8, noise_level=0.2))
    if not frame.equals(again):
        broken.append("synth determinism")

    broken = sorted(set(broken))
    verdict(record_property, 8, not broken, "all invariants hold" if not broken else f"broken: {broken}")


# --------------------------------------------------------------------------- 9


def test_criterion_9_qc_and_golden_files(record_property, tmp_path):
    from test_cli import GOLDEN, GOLDEN_FILES, run_pipeline, write_corpus

    problems = []
    base = synth.generate(synth.ScenarioSpec([synth.Archetype.FLAT] * 3, seed=1, noise_level=0.1))[0]
    months = pd.DatetimeIndex(base["date"]).month
    no_march = base[~((base["counter_id"] == "S002") & (months == 3))]
    if qc_filter(no_march).dropped != [("S002", "missing-month", "2016-03")]:
        problems.append("12-month rule")
    dead_july = base.copy()
    dead_july.loc[(dead_july["counter_id"] == "S003") & (months == 7), "count"] = 0
    if qc_filter(dead_july).dropped != [("S003", "fall-out", "2016-07")]:
        problems.append("fall-out rule")
    if qc_filter(base).dropped:
        problems.append("clean corpus dropped")

    write_corpus(tmp_path)
    out = run_pipeline(tmp_path)
    for name in GOLDEN_FILES:
        if (out / name).read_text() != (GOLDEN / name).read_text():
            problems.append(f"golden {name}")
    verdict(record_property, 9, not problems, f"QC rules + {len(GOLDEN_FILES)} golden files; problems: {problems or 'none'}")
