"""``counterscope`` command line: ingest -> score / cluster -> plot / map, plus synth.

Subcommands hand data to each other through files in the output directory:

    ingest   profiles.csv, totals.csv, qc_log.csv, meta.csv
    score    scores.csv, seasonal.csv, weektags.csv, rank_*.csv
    cluster  cluster_kmeans.json, silhouette.csv, cluster_ward.json, dendrogram.csv
    plot     plot_<counter>_<dir>_<daytype>.svg
    map      map_<layer>.geojson
    synth    counts.csv, meta.csv, truth.json

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import dataclasses
import io
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import tomli

from . import cluster, report, scoring, synth
from .calendar import SEASONS, DayType, load_holidays
from .ingest import (
    CountFormatError,
    VehicleClassFilter,
    parse_meta,
    qc_filter,
    read_counts,
    write_count_frame,
    write_meta,
)
from .profile import Mode, ProfileSet, build_profiles, daytype_totals, read_profile_cache, shares_from_totals, write_profile_cache

log = logging.getLogger("counterscope")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


@dataclass
class RunConfig:
    counts: list[str] = field(default_factory=list)
    meta: str | None = None
    holidays: str | None = None
    classes: list[str] = field(default_factory=lambda: ["car", "motorbike"])
    mode: str = "monthly"
    scores: list[str] = field(default_factory=lambda: list(scoring.SCORE_NAMES))
    top_k: int = 10
    method: str = "both"
    month: int = 5
    k: int = 6
    kmeans_k: int | None = None
    k_min: int = 2
    k_max: int = 10
    restarts: int = 10
    features: str = "percent"
    seed: int = 42
    n_jobs: int = 1
    out: str = "out"

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("out")
        d.pop("n_jobs")
        return d


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except tomli.TOMLDecodeError as exc:
        raise UsageError(f"bad config file {path}: {exc}") from None
    names = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(raw) - names
    if unknown:
        raise UsageError(f"unknown config key: {sorted(unknown)[0]}")
    return raw


def build_config(args: argparse.Namespace) -> RunConfig:
    values = load_config(getattr(args, "config", None))
    for f in dataclasses.fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    cfg = RunConfig(**values)
    if isinstance(cfg.counts, str):
        cfg.counts = [cfg.counts]
    return cfg


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _render(writer, *args, **kwargs) -> str:
    buf = io.StringIO()
    writer(*args, stream=buf, **kwargs)
    return buf.getvalue()


def _need(path: Path, what: str) -> Path:
    if not path.exists():
        raise DataError(f"missing {what}: {path} (run the earlier pipeline step first)")
    return path


# --------------------------------------------------------------------------- ingest


TOTALS_COLUMNS = (
    ["counter_id", "direction"]
    + [s.value for s in SEASONS]
    + ["weekend_days", "weekend_total", "workday_days", "workday_total"]
)


def write_totals(seasons: pd.DataFrame, daytypes: pd.DataFrame, stream, header=()) -> None:
    for line in header:
        stream.write(f"# {line}\n")
    stream.write(",".join(TOTALS_COLUMNS) + "\n")
    joined = seasons.join(daytypes, how="outer").fillna(0)
    for (cid, d), row in joined.iterrows():
        vals = [f"{row[s.value]:.0f}" for s in SEASONS]
        vals += [f"{row['weekend_days']:.0f}", f"{row['weekend_total']:.0f}"]
        vals += [f"{row['workday_days']:.0f}", f"{row['workday_total']:.0f}"]
        stream.write(f"{cid},{d}," + ",".join(vals) + "\n")


def read_totals(path: Path) -> pd.DataFrame:
    frame = pd.read_csv(path, comment="#", dtype={"counter_id": str})
    return frame.set_index(["counter_id", "direction"])


def cmd_ingest(cfg: RunConfig) -> int:
    if not cfg.counts:
        raise UsageError("ingest needs at least one counts file (--counts)")
    out = Path(cfg.out)
    flt = VehicleClassFilter(frozenset(cfg.classes))
    holidays = load_holidays(cfg.holidays)
    frames = []
    for path in cfg.counts:
        try:
            frames.append(read_counts(path, flt))
        except FileNotFoundError:
            raise DataError(f"counts file not found: {path}") from None
        except CountFormatError as exc:
            raise DataError(f"{path}: {exc}") from None
    frame = pd.concat(frames, ignore_index=True)
    if frame.duplicated(["counter_id", "direction", "date", "hour"]).any():
        raise DataError("duplicate (counter, direction, hour) records across input files")
    meta = {}
    if cfg.meta:
        try:
            with open(cfg.meta, "rb") as fh:
                meta = parse_meta(fh)
        except FileNotFoundError:
            raise DataError(f"metadata file not found: {cfg.meta}") from None
        except CountFormatError as exc:
            raise DataError(f"{cfg.meta}: {exc}") from None

    data = qc_filter(frame, meta)
    header = report.header_lines(cfg.as_dict(), cfg.seed)
    ps = build_profiles(data, holidays, Mode(cfg.mode), n_jobs=cfg.n_jobs)

    _write(out / "profiles.csv", _render(write_profile_cache, ps, header=header))
    seasons = scoring.season_totals(data)
    days = daytype_totals(data, holidays)
    _write(out / "totals.csv", _render(write_totals, seasons, days, header=header))
    qc = [f"# {line}" for line in header]
    qc.append(f"# counters in: {data.n_counters_in}, kept: {data.n_counters_in - len(data.dropped)}")
    qc.append("counter_id,status,reason,detail")
    dropped = {cid: (reason, detail) for cid, reason, detail in data.dropped}
    all_ids = sorted(set(frame["counter_id"]))
    for cid in all_ids:
        if cid in dropped:
            qc.append(f"{cid},dropped,{dropped[cid][0]},{dropped[cid][1]}")
        else:
            qc.append(f"{cid},kept,,")
    _write(out / "qc_log.csv", "\n".join(qc) + "\n")
    _write(out / "meta.csv", _render(write_meta, data.meta))
    if ps.missing:
        lines = ["counter_id,direction,daytype,period,hour"]
        lines += [f"{k[0]},{k[1]},{k[2].value},{ps.mode.period_label(p)},{h}" for k, p, h in ps.missing]
        _write(out / "missing_cells.csv", "\n".join(lines) + "\n")
    log.info("%d in, %d kept", data.n_counters_in, data.n_counters_in - len(data.dropped))
    print(f"ingest: {data.n_counters_in} in, {data.n_counters_in - len(data.dropped)} kept -> {out}")
    return 0


# --------------------------------------------------------------------------- score


def _load_profiles(out: Path) -> ProfileSet:
    with open(_need(out / "profiles.csv", "profile cache"), encoding="utf-8") as fh:
        return read_profile_cache(fh)


def cmd_score(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    ps = _load_profiles(out)
    totals = read_totals(_need(out / "totals.csv", "totals cache"))
    for name in cfg.scores:
        if name not in scoring.SCORE_NAMES:
            raise UsageError(f"unknown score {name!r}")
    header = report.header_lines(cfg.as_dict(), cfg.seed)

    cards = scoring.score_profiles(ps)
    _write(out / "scores.csv", _render(scoring.write_score_report, cards, header=header))
    for name in cfg.scores:
        ranked = scoring.rank(cards, name, cfg.top_k)
        _write(out / f"rank_{name}.csv", _render(scoring.write_ranking, ranked, name, header=header))

    seasonal = scoring.seasonal_from_totals(totals)
    _write(out / "seasonal.csv", _render(scoring.write_seasonal_report, seasonal, header=header))
    for name in ["max_deviation"] + [f"dev_{s.value}" for s in SEASONS]:
        ranked = scoring.rank(seasonal, name, cfg.top_k)
        _write(out / f"rank_{name}.csv", _render(scoring.write_ranking, ranked, name, header=header))

    shares = shares_from_totals(totals)
    tags = scoring.week_tag(shares)
    _write(out / "weektags.csv", _render(scoring.write_weektag_report, tags, shares, header=header))
    print(f"score: {len(cards)} score cards, {len(seasonal)} seasonal cards -> {out}")
    return 0


# --------------------------------------------------------------------------- cluster


def cmd_cluster(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    if cfg.method not in ("kmeans", "ward", "both"):
        raise UsageError(f"unknown cluster method {cfg.method!r}")
    if cfg.features not in ("percent", "absolute"):
        raise UsageError(f"unknown feature scale {cfg.features!r}")
    if cfg.kmeans_k is not None and cfg.kmeans_k < 2:
        raise UsageError("k must be ≥ 2 for silhouette")
    if cfg.method in ("kmeans", "both") and cfg.k_min < 2:
        raise UsageError("k must be ≥ 2 for silhouette")
    ps = _load_profiles(out)
    if ps.mode is not Mode.MONTHLY or cfg.month not in ps.mode.periods:
        raise DataError(f"month {cfg.month} not in profile cache")
    fm = cluster.feature_matrix(ps, cfg.month, normalize=cfg.features == "percent")
    meta = report.provenance(cfg.as_dict(), cfg.seed)
    header = report.header_lines(cfg.as_dict(), cfg.seed)

    if cfg.method in ("kmeans", "both"):
        if cfg.kmeans_k is not None:
            ks = [cfg.kmeans_k]
        else:
            ks = list(range(cfg.k_min, min(cfg.k_max, len(fm)) + 1))
        if not ks or max(ks) > len(fm):
            raise DataError(f"not enough rows ({len(fm)}) for k={ks[-1] if ks else cfg.k_min}")
        best, scores, models = cluster.select_k(fm.X, ks, seed=cfg.seed, restarts=cfg.restarts, n_jobs=cfg.n_jobs)
        model = models[best]
        profiles = cluster.cluster_profiles(fm.X, model.labels, fm.daytypes)
        _write(out / "cluster_kmeans.json", report.dump_json(report.cluster_report(model, fm, profiles, meta, scores)))
        lines = [f"# {h}" for h in header] + ["k,silhouette,selected"]
        lines += [f"{k},{scores[k]:.6f},{int(k == best)}" for k in ks]
        _write(out / "silhouette.csv", "\n".join(lines) + "\n")
        print(f"cluster: k-means k*={best} silhouette={scores[best]:.3f}")

    if cfg.method in ("ward", "both"):
        if not 1 <= cfg.k <= len(fm):
            raise UsageError(f"cut k={cfg.k} outside 1..{len(fm)}")
        try:
            model = cluster.ward_spearman(fm, cfg.k)
        except cluster.DegenerateRowError as exc:
            raise DataError(str(exc)) from None
        profiles = cluster.cluster_profiles(fm.X, model.labels, fm.daytypes)
        _write(out / "cluster_ward.json", report.dump_json(report.cluster_report(model, fm, profiles, meta)))
        _write(out / "dendrogram.csv", _render(cluster.write_dendrogram_csv, model.dendrogram, header=header))
        comp = ", ".join(f"{p.cluster}:{p.weekend_pct:.1f}% weekend" for p in profiles)
        print(f"cluster: ward/spearman k={cfg.k} ({comp})")
    return 0


# --------------------------------------------------------------------------- plot / map


def cmd_plot(cfg: RunConfig, counter_id: str, direction: int, daytype: str, emphasize: str | None, baseline: bool) -> int:
    out = Path(cfg.out)
    ps = _load_profiles(out)
    if counter_id not in ps.counter_ids():
        raise DataError(f"unknown counter {counter_id}")
    key = (counter_id, direction, DayType(daytype))
    if key not in ps.profiles:
        raise DataError(f"no profiles for counter {counter_id} direction {direction} {daytype}")
    series = report.plot_series(ps, key, baseline=baseline)
    title = f"counter {counter_id}, direction {direction}, {daytype}"
    comment = report.header_lines(cfg.as_dict(), cfg.seed)[0]
    svg = report.render_svg(series, title, emphasize=emphasize, comment=comment)
    path = out / f"plot_{counter_id}_{direction}_{daytype}.svg"
    _write(path, svg)
    print(f"plot: {path}")
    return 0


def _pooled_totals(totals: pd.DataFrame) -> pd.DataFrame:
    pooled = totals.groupby(level="counter_id").sum()
    pooled.index = pd.MultiIndex.from_arrays([pooled.index, np.zeros(len(pooled), dtype=int)], names=["counter_id", "direction"])
    return pooled


def cmd_map(cfg: RunConfig, layer: str) -> int:
    out = Path(cfg.out)
    meta_path = Path(cfg.meta) if cfg.meta else out / "meta.csv"
    with open(_need(meta_path, "counter metadata"), "rb") as fh:
        meta = parse_meta(fh)
    info = report.provenance(cfg.as_dict(), cfg.seed)
    info["layer"] = layer
    if layer == "weektag":
        pooled = _pooled_totals(read_totals(_need(out / "totals.csv", "totals cache")))
        shares = {cid: s for (cid, _), s in shares_from_totals(pooled).items()}
        doc = report.weektag_layer(meta, shares, info)
    elif layer == "season":
        pooled = _pooled_totals(read_totals(_need(out / "totals.csv", "totals cache")))
        cards = {c.counter_id: c for c in scoring.seasonal_from_totals(pooled)}
        doc = report.season_layer(meta, cards, info)
    elif layer == "cluster":
        with open(_need(out / "cluster_kmeans.json", "k-means cluster report"), encoding="utf-8") as fh:
            doc = report.cluster_layer(meta, json.load(fh), info)
    else:
        raise UsageError(f"unknown map layer {layer!r}")
    path = out / f"map_{layer}.geojson"
    _write(path, report.dump_json(doc))
    print(f"map: {path} ({len(doc['features'])} features)")
    return 0


# --------------------------------------------------------------------------- synth


def cmd_synth(cfg: RunConfig, preset: str, noise: float | None) -> int:
    if preset not in synth.PRESETS:
        raise UsageError(f"unknown preset {preset!r}; choose from {', '.join(synth.PRESETS)}")
    kwargs = {"seed": cfg.seed}
    if noise is not None:
        kwargs["noise"] = noise
    spec = synth.PRESETS[preset](**kwargs)
    frame, truth = synth.generate(spec)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "counts.csv", "w", encoding="utf-8", newline="\n") as fh:
        write_count_frame(frame, fh)
    _write(out / "meta.csv", _render(write_meta, synth.scenario_meta(truth)))
    truth["preset"] = preset
    _write(out / "truth.json", synth.truth_json(truth))
    print(f"synth: {preset} seed={cfg.seed}, {truth['planted']} planted -> {out}")
    return 0


# --------------------------------------------------------------------------- argparse


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="counterscope", description="Traffic counter profiles, interestingness scores and clustering.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="key = value config file (TOML)")
        sp.add_argument("--out", help="output/work directory (default: out)")
        sp.add_argument("--seed", type=int)
        return sp

    sp = common(sub.add_parser("ingest", help="parse, QC and aggregate counts into a profile cache"))
    sp.add_argument("--counts", action="append", help="counts CSV (repeatable)")
    sp.add_argument("--meta", help="counter metadata CSV")
    sp.add_argument("--holidays", help="holiday file (default: bundled Slovenian 2015-2017)")
    sp.add_argument("--classes", type=_csv_list, help="vehicle classes to keep, comma separated")
    sp.add_argument("--mode", choices=[m.value for m in Mode])
    sp.add_argument("--n-jobs", dest="n_jobs", type=int)

    sp = common(sub.add_parser("score", help="score, seasonal and weekly reports with top-k rankings"))
    sp.add_argument("--scores", type=_csv_list)
    sp.add_argument("--top-k", dest="top_k", type=int)

    sp = common(sub.add_parser("cluster", help="k-means and Ward/Spearman clustering of one month"))
    sp.add_argument("--method", choices=["kmeans", "ward", "both"])
    sp.add_argument("--month", type=int)
    sp.add_argument("--k", type=int, help="number of clusters for the dendrogram cut")
    sp.add_argument("--kmeans-k", dest="kmeans_k", type=int, help="fixed k for k-means instead of silhouette search")
    sp.add_argument("--k-min", dest="k_min", type=int)
    sp.add_argument("--k-max", dest="k_max", type=int)
    sp.add_argument("--restarts", type=int)
    sp.add_argument("--features", choices=["percent", "absolute"])
    sp.add_argument("--n-jobs", dest="n_jobs", type=int)

    sp = common(sub.add_parser("plot", help="SVG line chart of one counter's profiles"))
    sp.add_argument("counter_id")
    sp.add_argument("--direction", type=int, choices=[1, 2], required=True)
    sp.add_argument("--daytype", choices=[d.value for d in DayType], default="workday")
    sp.add_argument("--emphasize", help="series label drawn thicker, e.g. Feb")
    sp.add_argument("--no-baseline", action="store_true")

    sp = common(sub.add_parser("map", help="GeoJSON point layer"))
    sp.add_argument("--layer", choices=["weektag", "season", "cluster"], required=True)
    sp.add_argument("--meta", help="counter metadata CSV (default: <out>/meta.csv)")

    sp = common(sub.add_parser("synth", help="write a synthetic corpus with ground truth"))
    sp.add_argument("--preset", default="festival", help=f"one of: {', '.join(synth.PRESETS)}")
    sp.add_argument("--noise", type=float)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # --help exits 0, argument errors exit 1
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        if args.command == "ingest":
            return cmd_ingest(cfg)
        if args.command == "score":
            return cmd_score(cfg)
        if args.command == "cluster":
            return cmd_cluster(cfg)
        if args.command == "plot":
            return cmd_plot(cfg, args.counter_id, args.direction, args.daytype, args.emphasize, not args.no_baseline)
        if args.command == "map":
            return cmd_map(cfg, args.layer)
        if args.command == "synth":
            return cmd_synth(cfg, args.preset, args.noise)
    except UsageError as exc:
        print(f"counterscope: error: {exc}", file=sys.stderr)
        return 1
    except (DataError, CountFormatError, ValueError, KeyError) as exc:
        print(f"counterscope: data error: {exc}", file=sys.stderr)
        return 2
    return 1


if __name__ == "__main__":
    sys.exit(main())
