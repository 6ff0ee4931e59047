"""Experiment orchestration: ingest, selection audits, rolling runs, reports.

All report files are written with repr-formatted floats and stable row
ordering, so identical configs and seeds reproduce byte-identical outputs.
Per-(target, period) forecast records are cached under out/cache with a
config digest, making interrupted runs resumable and `report` a pure
re-aggregation.
"""

from __future__ import annotations

import csv
import hashlib
import json
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .data import DailyRecord, ingest_asset, read_daily_records, write_daily_records
from .errors import ConfigError, ValidationError
from .evaluation import (
    EvalRun,
    ForecastRecord,
    ModelSpec,
    SamplePeriod,
    _AssetState,
    compute_losses,
    dm_test,
    loss_series,
    model_confidence_set,
    paired_losses,
    rolling_evaluate,
)
from .selection import SelectionConfig, build_training_set

SCARCITY_SUFFIX = {"1": "-1", "5": "-5", "22": ""}


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(float(v))  # shortest round-trip form, numpy scalars included
    return str(v)


def write_csv(path: Path, header: list[str], rows: list[tuple]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


# ---------------------------------------------------------------------------
# model spec construction
# ---------------------------------------------------------------------------


def build_specs(cfg: ExperimentConfig, period: SamplePeriod) -> list[ModelSpec]:
    """The model grid for one period: NF plus modes x families x predictor sets.

    Scarcity-period presets pin the reduced predictor suffix; configured
    transition strategies add strategy-driven variants on top.
    """
    specs: list[ModelSpec] = []
    if cfg.include_nf:
        specs.append(ModelSpec(family="nf"))
    suffix = SCARCITY_SUFFIX.get(period.label, "")
    strategies: list[str | None] = [None]
    if period.label in SCARCITY_SUFFIX and cfg.strategies:
        strategies += list(cfg.strategies)
    for strategy in strategies:
        for mode in cfg.modes:
            for family in cfg.families:
                for base in cfg.predictor_sets:
                    if mode == "MTL":
                        for eps in cfg.epsilons:
                            specs.append(
                                ModelSpec(
                                    family=family, mode=mode, predictor_base=base,
                                    epsilon=eps, suffix=suffix if strategy is None else "",
                                    strategy=strategy,
                                )
                            )
                    else:
                        specs.append(
                            ModelSpec(
                                family=family, mode=mode, predictor_base=base,
                                suffix=suffix if strategy is None else "",
                                strategy=strategy,
                            )
                        )
    return specs


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------


def ingest(cfg: ExperimentConfig, verbose: bool = False) -> list[Path]:
    """Turn every intraday-bound asset into a cached daily-record CSV."""
    written = []
    for spec in cfg.targets + cfg.sources:
        if spec.intraday_csv is None:
            continue
        records = ingest_asset(
            spec.intraday_csv,
            ticker=spec.asset_id,
            earnings_path=cfg.earnings_csv,
            macro_paths=cfg.macro_csvs,
            holidays=cfg.holidays,
            tz=cfg.timezone,
        )
        spec.daily_csv.parent.mkdir(parents=True, exist_ok=True)
        write_daily_records(records, spec.daily_csv)
        written.append(spec.daily_csv)
        if verbose:
            print(f"ingested {spec.asset_id}: {len(records)} usable days -> {spec.daily_csv}")
    return written


def load_records(cfg: ExperimentConfig) -> tuple[dict[str, list[DailyRecord]], dict[str, list[DailyRecord]]]:
    targets = {}
    for s in cfg.targets:
        records = read_daily_records(s.daily_csv)
        if s.listing_date is not None:
            records = [r for r in records if r.date >= s.listing_date]
        targets[s.asset_id] = records
    sources = {s.asset_id: read_daily_records(s.daily_csv) for s in cfg.sources}
    return targets, sources


# ---------------------------------------------------------------------------
# forecast runs with a resumable cache
# ---------------------------------------------------------------------------


def _run_digest(cfg: ExperimentConfig, target_id: str, period: SamplePeriod) -> str:
    payload = json.dumps(
        {
            "seed": cfg.seed,
            "m": cfg.m,
            "target": target_id,
            "period": [period.label, period.train_end, period.eval_len, period.reestimate_every],
            "sources": sorted(s.asset_id for s in cfg.sources),
            "modes": cfg.modes,
            "families": cfg.families,
            "sets": cfg.predictor_sets,
            "epsilons": cfg.epsilons,
            "strategies": cfg.strategies,
            "nf": cfg.include_nf,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()


def _cache_paths(out_dir: Path, target_id: str, period: SamplePeriod) -> tuple[Path, Path]:
    stem = f"records_{target_id}_{period.label}"
    cache = out_dir / "cache"
    return cache / f"{stem}.csv", cache / f"{stem}.digest"


def _write_run_cache(out_dir: Path, target_id: str, period: SamplePeriod, run: EvalRun, digest: str) -> None:
    rec_path, digest_path = _cache_paths(out_dir, target_id, period)
    rows = [
        (r.asset, r.model_id, period.label, r.origin_day, r.forecast, r.actual)
        for r in sorted(run.records, key=lambda r: (r.model_id, r.origin_day))
    ]
    write_csv(rec_path, ["asset", "model", "period", "origin", "forecast", "actual"], rows)
    digest_path.write_text(digest)


def _read_run_cache(out_dir: Path, target_id: str, period: SamplePeriod, digest: str) -> list[ForecastRecord] | None:
    rec_path, digest_path = _cache_paths(out_dir, target_id, period)
    if not rec_path.exists() or not digest_path.exists():
        return None
    if digest_path.read_text().strip() != digest:
        return None
    records = []
    with open(rec_path) as fh:
        for row in csv.DictReader(fh):
            records.append(
                ForecastRecord(
                    asset=row["asset"],
                    model_id=row["model"],
                    origin_day=row["origin"],
                    forecast=float(row["forecast"]),
                    actual=float(row["actual"]),
                )
            )
    return records


def forecast(
    cfg: ExperimentConfig,
    period_filter: str | None = None,
    verbose: bool = False,
) -> dict[str, list[ForecastRecord]]:
    """Full pipeline: rolling runs for every (target, period), then reports."""
    targets, sources = load_records(cfg)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    periods = [p for p in cfg.periods if period_filter is None or p.label == period_filter]
    if not periods:
        raise ConfigError(f"period filter {period_filter!r} matches no configured period")

    tasks = [(tid, period) for tid in sorted(targets) for period in periods]

    def run_task(task):
        tid, period = task
        digest = _run_digest(cfg, tid, period)
        cached = _read_run_cache(out, tid, period, digest)
        if cached is not None:
            if verbose:
                print(f"cache hit: {tid} period {period.label} ({len(cached)} records)")
            return tid, period, cached, EvalRun(records=cached)
        specs = build_specs(cfg, period)
        run = rolling_evaluate(
            tid, targets[tid], sources, specs, period, m=cfg.m, root_seed=cfg.seed
        )
        _write_run_cache(out, tid, period, run, digest)
        if verbose:
            print(f"ran {tid} period {period.label}: {len(run.records)} records")
        return tid, period, run.records, run

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(run_task, tasks))
    else:
        results = [run_task(t) for t in tasks]

    records_by_period: dict[str, list[ForecastRecord]] = defaultdict(list)
    audit_rows: list[dict] = []
    fit_rows: list[tuple] = []
    for tid, period, records, run in sorted(results, key=lambda r: (r[1].label, r[0])):
        records_by_period[period.label].extend(records)
        for row in run.audit:
            audit_rows.append(row)
        for entry in run.fit_log:
            fit_rows.append(
                (tid, period.label, entry["origin"], entry["model_id"], entry["status"],
                 entry["n_rows"], entry.get("origin_date", ""),
                 entry.get("max_train_date", ""), entry.get("max_label_date", ""),
                 entry["error"])
            )
        snap_dir = out / "snapshots"
        snap_dir.mkdir(parents=True, exist_ok=True)
        for model_id, snap in sorted(run.snapshots.items()):
            name = f"{tid}_{period.label}_{model_id.replace(' ', '_').replace('/', '-')}.json"
            (snap_dir / name).write_text(json.dumps(snap, sort_keys=True))

    write_csv(
        out / "selection_audit.csv",
        ["target", "model_id", "origin", "asset_id", "start_index", "distance", "selected"],
        [
            (r["target"], r["model_id"], r["origin"], r["asset_id"], r["start_index"],
             r["distance"], r["selected"])
            for r in sorted(
                audit_rows,
                key=lambda r: (r["target"], r["model_id"], r["origin"], r["asset_id"], r["start_index"]),
            )
        ],
    )
    write_csv(
        out / "fit_log.csv",
        ["target", "period", "origin", "model", "status", "n_rows",
         "origin_date", "max_train_date", "max_label_date", "error"],
        sorted(fit_rows),
    )
    write_reports(records_by_period, out, cfg)
    return dict(records_by_period)


# ---------------------------------------------------------------------------
# report aggregation
# ---------------------------------------------------------------------------


def _records_from_forecast_csv(path: Path) -> dict[str, list[ForecastRecord]]:
    by_period: dict[str, list[ForecastRecord]] = defaultdict(list)
    with open(path) as fh:
        for row in csv.DictReader(fh):
            by_period[row["period"]].append(
                ForecastRecord(
                    asset=row["asset"],
                    model_id=row["model"],
                    origin_day=row["origin"],
                    forecast=float(row["forecast"]),
                    actual=float(row["actual"]),
                )
            )
    return dict(by_period)


def report(cfg: ExperimentConfig, period_filter: str | None = None) -> None:
    """Re-aggregate report files from cached forecasts without refitting."""
    path = cfg.output_dir / "forecasts.csv"
    if not path.exists():
        raise ValidationError(f"no cached forecasts at {path}; run `forecast` first")
    by_period = _records_from_forecast_csv(path)
    if period_filter is not None:
        by_period = {k: v for k, v in by_period.items() if k == period_filter}
    write_reports(by_period, cfg.output_dir, cfg)


def _group(records: list[ForecastRecord]):
    by_asset_model: dict[tuple[str, str], list[ForecastRecord]] = defaultdict(list)
    for r in records:
        by_asset_model[(r.asset, r.model_id)].append(r)
    return by_asset_model


STANDARD_LABELS = ("50", "150", "250", "350", "450")


def write_reports(
    records_by_period: dict[str, list[ForecastRecord]], out: Path, cfg: ExperimentConfig
) -> None:
    out.mkdir(parents=True, exist_ok=True)
    long_rows = []
    for period in sorted(records_by_period):
        for r in sorted(records_by_period[period], key=lambda r: (r.asset, r.model_id, r.origin_day)):
            long_rows.append((r.asset, r.model_id, period, r.origin_day, r.forecast, r.actual))
    write_csv(out / "forecasts.csv", ["asset", "model", "period", "origin", "forecast", "actual"], long_rows)

    # the full evaluation period is the union of the five standard walks
    if all(lbl in records_by_period for lbl in STANDARD_LABELS):
        records_by_period = dict(records_by_period)
        records_by_period["s_star"] = [
            r for lbl in STANDARD_LABELS for r in records_by_period[lbl]
        ]

    loss_rows = []
    rel_nf_rows = []
    pairwise_rows = []
    mcs_rows = []
    for period in sorted(records_by_period):
        records = records_by_period[period]
        grouped = _group(records)
        assets = sorted({a for a, _ in grouped})
        models = sorted({m for _, m in grouped})

        losses = {key: compute_losses(recs) for key, recs in grouped.items()}
        for (asset, model) in sorted(losses):
            mse, mae = losses[(asset, model)]
            loss_rows.append((period, asset, model, len(grouped[(asset, model)]), mse, mae))

        # cross-sectional average of per-asset ratios vs the naive forecast
        if "NF" in models:
            for model in models:
                if model == "NF":
                    continue
                ratios_mse, ratios_mae = [], []
                for asset in assets:
                    if (asset, model) in losses and (asset, "NF") in losses:
                        nf_mse, nf_mae = losses[(asset, "NF")]
                        m_mse, m_mae = losses[(asset, model)]
                        if nf_mse > 0 and nf_mae > 0:
                            ratios_mse.append(m_mse / nf_mse)
                            ratios_mae.append(m_mae / nf_mae)
                if ratios_mse:
                    rel_nf_rows.append(
                        (period, model, float(np.mean(ratios_mse)), float(np.mean(ratios_mae)))
                    )

        # pairwise relative losses with one-sided DM majority flags
        records_by_asset = {asset: [r for r in records if r.asset == asset] for asset in assets}
        for metric in ("mse", "mae"):
            idx = 0 if metric == "mse" else 1
            for bench in models:
                for model in models:
                    if model == bench:
                        continue
                    ratios, rejects = [], []
                    for asset in assets:
                        if (asset, model) not in losses or (asset, bench) not in losses:
                            continue
                        b = losses[(asset, bench)][idx]
                        v = losses[(asset, model)][idx]
                        if b > 0:
                            ratios.append(v / b)
                        la, lb = paired_losses(records_by_asset[asset], model, bench, metric)
                        if la.size >= 10:
                            rejects.append(dm_test(la, lb).reject_at_5pct)
                    if ratios:
                        frac = float(np.mean(rejects)) if rejects else 0.0
                        pairwise_rows.append(
                            (period, metric, bench, model, float(np.mean(ratios)),
                             frac, int(frac > 0.5))
                        )

        # per-asset model confidence sets
        for metric in ("mse", "mae"):
            for asset in assets:
                series = loss_series([r for r in records if r.asset == asset], metric=metric)
                mids = sorted(m for m in series if len(series[m]) >= 20)
                if len(mids) < 2:
                    continue
                matrix = np.column_stack([series[m] for m in mids])
                survivors = model_confidence_set(
                    matrix, alpha=0.05, n_boot=cfg.mcs_bootstrap,
                    seed=int.from_bytes(
                        hashlib.sha256(f"{cfg.seed}|mcs|{period}|{asset}|{metric}".encode()).digest()[:8],
                        "big",
                    ),
                )
                for i in survivors:
                    mcs_rows.append((period, metric, asset, mids[i]))

    write_csv(out / "losses.csv", ["period", "asset", "model", "n", "mse", "mae"], loss_rows)
    write_csv(out / "relative_nf.csv", ["period", "model", "rel_mse", "rel_mae"], rel_nf_rows)
    write_csv(
        out / "pairwise.csv",
        ["period", "metric", "benchmark", "model", "avg_ratio", "dm_reject_frac", "dm_majority"],
        pairwise_rows,
    )
    mcs_counts: dict[tuple, int] = defaultdict(int)
    for period, metric, _asset, model in mcs_rows:
        mcs_counts[(period, metric, model)] += 1
    write_csv(
        out / "mcs.csv",
        ["period", "metric", "model", "inclusions"],
        [(k[0], k[1], k[2], v) for k, v in sorted(mcs_counts.items())],
    )
    transition_rows = _transition_table(records_by_period)
    if transition_rows:
        write_csv(
            out / "transitions.csv",
            ["metric", "row_strategy", "col_strategy", "avg_ratio"],
            transition_rows,
        )
    _print_summary(rel_nf_rows)


def _transition_table(records_by_period: dict[str, list[ForecastRecord]]) -> list[tuple]:
    """Column-strategy loss relative to row-strategy loss, averaged over the
    pooled NP and MTL models (target-only runs blow up on scarce data and are
    reported separately), pooled across the post-listing sample periods."""
    scarcity = [p for p in records_by_period if p in SCARCITY_SUFFIX]
    pooled = [
        r
        for p in scarcity
        for r in records_by_period[p]
        if r.model_id.startswith("Str.") and " TO " not in r.model_id
    ]
    if not pooled:
        return []
    grouped: dict[tuple[str, str, str], list[ForecastRecord]] = defaultdict(list)
    for r in pooled:
        strat, rest = r.model_id.split(" ", 1)
        grouped[(r.asset, strat.removeprefix("Str."), rest)].append(r)
    losses = {k: compute_losses(v) for k, v in grouped.items()}
    strategies = sorted({k[1] for k in losses})
    rows = []
    for idx, metric in ((0, "mse"), (1, "mae")):
        for row_s in strategies:
            for col_s in strategies:
                ratios = [
                    losses[(a, col_s, m)][idx] / losses[(a, row_s, m)][idx]
                    for (a, s, m) in losses
                    if s == row_s and (a, col_s, m) in losses and losses[(a, row_s, m)][idx] > 0
                ]
                if ratios:
                    rows.append((metric, row_s, col_s, float(np.mean(ratios))))
    return rows


def _print_summary(rel_nf_rows: list[tuple]) -> None:
    if not rel_nf_rows:
        print("no NF-relative summary (naive forecast disabled)")
        return
    print(f"{'period':>8}  {'model':<34} {'relMSE':>9} {'relMAE':>9}")
    for period, model, rel_mse, rel_mae in rel_nf_rows:
        print(f"{period:>8}  {model:<34} {rel_mse:9.3f} {rel_mae:9.3f}")


# ---------------------------------------------------------------------------
# selection audit without fitting
# ---------------------------------------------------------------------------


def select(cfg: ExperimentConfig, period_filter: str | None = None) -> Path:
    """Emit the subsequence-selection audit log only (no model fits)."""
    targets, sources = load_records(cfg)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    rows: list[dict] = []
    periods = [p for p in cfg.periods if period_filter is None or p.label == period_filter]
    for tid in sorted(targets):
        for period in periods:
            state = _AssetState(tid, targets[tid], sources, cfg.m, cfg.seed, period)
            suffix = SCARCITY_SUFFIX.get(period.label, "")
            for base in cfg.predictor_sets:
                kind = base + suffix
                full = state.full_dataset(tid, kind)
                for origin in period.fit_origins:
                    origin_date = np.datetime64(targets[tid][origin - 1].date, "D")
                    target_train = full.take(full.label_dates <= origin_date)
                    aligned = {}
                    for sid in sorted(sources):
                        src = state.full_dataset(sid, kind)
                        aligned[sid] = src.take(src.label_dates <= origin_date)
                    window = state.target_window(kind, origin_date)
                    for eps in cfg.epsilons:
                        _, audit = build_training_set(
                            "MTL", target_train, aligned,
                            SelectionConfig(m=cfg.m, epsilon=eps, mode="MTL"),
                            origin_date, target_window=window,
                        )
                        for row in audit:
                            row.update(target=tid, period=period.label, kind=kind, epsilon=eps)
                            rows.append(row)
    path = out / "selection_audit.csv"
    write_csv(
        path,
        ["target", "period", "kind", "epsilon", "origin", "asset_id", "start_index", "distance", "selected"],
        [
            (r["target"], r["period"], r["kind"], r["epsilon"], r["origin"], r["asset_id"],
             r["start_index"], r["distance"], r["selected"])
            for r in sorted(
                rows,
                key=lambda r: (r["target"], r["period"], r["kind"], r["epsilon"], r["origin"],
                               r["asset_id"], r["start_index"]),
            )
        ],
    )
    return path
