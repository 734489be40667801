"""Output writers shared by the CLI: provenance header, cluster JSON, SVG line chart, GeoJSON."""

from __future__ import annotations

import hashlib
import json
import logging
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

from . import __version__
from .calendar import SEASONS, DayType
from .cluster import ClusterModel, ClusterProfile, FeatureMatrix
from .ingest import CounterMeta
from .profile import Mode, ProfileKey, ProfileSet
from .scoring import baseline_of

log = logging.getLogger(__name__)


def config_hash(config: Mapping) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def provenance(config: Mapping, seed: int) -> dict:
    return {"tool": "counterscope", "version": __version__, "seed": seed, "config_hash": config_hash(config)}


def header_lines(config: Mapping, seed: int) -> list[str]:
    p = provenance(config, seed)
    return [f"{p['tool']} {p['version']} seed={p['seed']} config={p['config_hash']}"]


def _r(x: float, nd: int = 6) -> float:
    # normalise -0.0 so reruns stay byte-identical
    return round(float(x), nd) + 0.0


def cluster_report(
    model: ClusterModel,
    fm: FeatureMatrix,
    profiles: Sequence[ClusterProfile],
    meta: Mapping,
    silhouette_by_k: Mapping[int, float] | None = None,
) -> dict:
    out = {
        "meta": dict(meta),
        "method": model.method,
        "k": model.k,
        "period": fm.keys[0][3] if fm.keys else None,
        "clusters": [
            {
                "id": p.cluster,
                "size": p.size,
                "mean": [_r(v) for v in p.mean],
                "std": [_r(v) for v in p.std],
                "composition": {"weekend": _r(p.weekend_pct), "workday": _r(p.workday_pct)},
            }
            for p in profiles
        ],
        "assignments": [
            {"counter_id": cid, "direction": d, "daytype": t.value, "cluster": int(lab)}
            for (cid, d, t, _), lab in zip(fm.keys, model.labels)
        ],
    }
    if model.method == "kmeans":
        out["silhouette"] = _r(model.silhouette) if model.silhouette is not None else None
        out["inertia"] = _r(model.inertia)
        if silhouette_by_k:
            out["silhouette_by_k"] = {str(k): _r(v) for k, v in sorted(silhouette_by_k.items())}
    if model.dendrogram is not None:
        out["merges"] = [[int(a), int(b), _r(h, 9), int(s)] for a, b, h, s in model.dendrogram.merges]
    return out


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


# --------------------------------------------------------------------------- SVG

PALETTE = [
    "#1f77b4", "#aec7e8", "#2ca02c", "#98df8a", "#d62728", "#ff9896",
    "#9467bd", "#c5b0d5", "#8c564b", "#e377c2", "#7f7f7f", "#17becf",
]
MONTH_NAMES = ["Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"]


def plot_series(ps: ProfileSet, key: ProfileKey, baseline: bool = True) -> dict:
    """Data behind the line chart: {period label: 24 values}, plus 'baseline' when requested."""
    if key not in ps.profiles:
        raise KeyError(f"no profiles for counter {key[0]} direction {key[1]} {key[2].value}")
    block = ps[key]
    labels = MONTH_NAMES if ps.mode is Mode.MONTHLY else [ps.mode.period_label(p) for p in ps.mode.periods]
    series = {label: block[i].copy() for i, label in enumerate(labels)}
    if baseline:
        series["baseline"] = baseline_of(block)
    return series


def _nice_max(v: float) -> float:
    if v <= 0:
        return 1.0
    exp = 10 ** np.floor(np.log10(v))
    for m in (1, 2, 2.5, 5, 10):
        if m * exp >= v:
            return float(m * exp)
    return float(10 * exp)


def render_svg(series: Mapping[str, np.ndarray], title: str, emphasize: str | None = None, comment: str = "") -> str:
    width, height = 760, 420
    left, right, top, bottom = 60, 110, 40, 40
    pw, ph = width - left - right, height - top - bottom
    ymax = _nice_max(max(float(np.max(v)) for v in series.values()))

    def xy(h, v):
        return left + pw * h / 23.0, top + ph * (1.0 - v / ymax)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
    ]
    if comment:
        out.append(f"<!-- {escape(comment)} -->")
    out.append(f'<text x="{left}" y="22" font-family="sans-serif" font-size="14">{escape(title)}</text>')
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>')
    for h in range(0, 24, 3):
        x, _ = xy(h, 0)
        out.append(f'<text x="{x:.2f}" y="{top + ph + 16}" font-family="sans-serif" font-size="10" text-anchor="middle">{h}</text>')
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        _, y = xy(0, frac * ymax)
        out.append(f'<text x="{left - 6}" y="{y + 3:.2f}" font-family="sans-serif" font-size="10" text-anchor="end">{frac * ymax:g}</text>')
    for i, (label, values) in enumerate(series.items()):
        pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in (xy(h, float(v)) for h, v in enumerate(values)))
        data = " ".join(f"{float(v):.6f}" for v in values)
        if label == "baseline":
            style = 'stroke="#000" stroke-width="2" stroke-dasharray="6 4"'
        else:
            w = 3 if label == emphasize else 1.2
            style = f'stroke="{PALETTE[i % len(PALETTE)]}" stroke-width="{w}"'
        out.append(f'<polyline fill="none" {style} points="{pts}" data-series="{escape(label)}" data-values="{data}"/>')
        ly = top + 12 + 14 * i
        out.append(f'<text x="{left + pw + 10}" y="{ly}" font-family="sans-serif" font-size="10">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------- GeoJSON

WEEK_SIZE_RANGE = (0.5, 0.7)


def _feature(m: CounterMeta, props: dict) -> dict:
    return {
        "type": "Feature",
        "geometry": {"type": "Point", "coordinates": [m.longitude, m.latitude]},
        "properties": {"counter_id": m.counter_id, "road_name": m.road_name, **props},
    }


def _collection(features: list, meta: Mapping) -> dict:
    return {"type": "FeatureCollection", "metadata": dict(meta), "features": features}


def _located(meta: Mapping[str, CounterMeta], ids) -> list[CounterMeta]:
    out = []
    for cid in sorted(ids):
        if cid not in meta:
            log.warning("counter %s has no coordinates, skipped", cid)
            continue
        out.append(meta[cid])
    if not out:
        log.warning("map layer is empty")
    return out


def weektag_layer(meta: Mapping[str, CounterMeta], shares: Mapping[str, tuple[float, float]], info: Mapping) -> dict:
    """shares: counter_id -> (weekend_share, workday_share); size is the winning share clamped to [0.5, 0.7]."""
    lo, hi = WEEK_SIZE_RANGE
    feats = []
    for m in _located(meta, shares):
        wk, wd = shares[m.counter_id]
        tag, share = (DayType.WEEKEND, wk) if wk > wd else (DayType.WORKDAY, wd)
        feats.append(_feature(m, {"tag": tag.value, "share": _r(share), "size": _r(min(max(share, lo), hi))}))
    return _collection(feats, info)


def season_layer(meta: Mapping[str, CounterMeta], cards: Mapping[str, object], info: Mapping) -> dict:
    """cards: counter_id -> SeasonalScoreCard (directions pooled)."""
    feats = []
    for m in _located(meta, cards):
        c = cards[m.counter_id]
        props = {s.value: _r(c.shares[s]) for s in SEASONS}
        props.update({f"dev_{s.value}": _r(c.deviations[s]) for s in SEASONS})
        props["season"] = c.argmax_season.value
        props["size"] = _r(c.shares[c.argmax_season])
        feats.append(_feature(m, props))
    return _collection(feats, info)


def cluster_layer(meta: Mapping[str, CounterMeta], report: Mapping, info: Mapping) -> dict:
    """One point per counter; ``cluster`` is the most common label over its rows (ties to the lower id)."""
    rows: dict[str, dict[str, int]] = {}
    for a in report["assignments"]:
        rows.setdefault(a["counter_id"], {})[f"{a['direction']}/{a['daytype']}"] = a["cluster"]
    feats = []
    for m in _located(meta, rows):
        labels = list(rows[m.counter_id].values())
        counts = {lab: labels.count(lab) for lab in labels}
        best = min(counts, key=lambda lab: (-counts[lab], lab))
        feats.append(_feature(m, {"cluster": best, "rows": dict(sorted(rows[m.counter_id].items()))}))
    return _collection(feats, info)
