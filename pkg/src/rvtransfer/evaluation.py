"""Rolling forecast protocol, loss metrics, DM tests, and model confidence sets.

The walk: at each re-estimation origin the approach-specific training set is
rebuilt from data dated at or before the origin, each model is refit, and the
frozen model produces 1-day-ahead forecasts for the following
`reestimate_every` days from the evolving feature rows. Negative forecasts are
clamped to the target's training-sample minimum RV.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .data import DailyRecord, SupervisedDataSet, assemble, feature_names, feature_rows, vol_feature_count
from .errors import ConfigError, FitError, ValidationError
from .models import BoostConfig, FitConfig, clamp_forecast, fit_boosted, fit_fnn, fit_har
from .selection import SelectionConfig, build_training_set, rank_sources_for_window

STANDARD_PERIOD_LABELS = ("50", "150", "250", "350", "450")
SCARCITY_PERIODS = {"1": (1, 4), "5": (5, 17), "22": (22, 28)}
STRATEGIES = ("1-1-1", "1-5-5", "1-5-22")


@dataclass(frozen=True)
class SamplePeriod:
    """One evaluation window: origins train_end .. train_end+eval_len-1."""

    label: str
    train_end: int  # target day index (1-based) at period start
    eval_len: int
    reestimate_every: int

    def __post_init__(self) -> None:
        if self.train_end < 1 or self.eval_len < 1 or self.reestimate_every < 1:
            raise ConfigError("sample period counts must be >= 1")

    @property
    def is_scarcity(self) -> bool:
        return self.reestimate_every == 1

    @property
    def fit_origins(self) -> range:
        return range(self.train_end, self.train_end + self.eval_len, self.reestimate_every)


def standard_period(label: str) -> SamplePeriod:
    """Presets: '50'..'450' are 100-day walks refit every 5 days; '1','5','22'
    are the post-listing scarcity windows refit daily."""
    if label in STANDARD_PERIOD_LABELS:
        return SamplePeriod(label=label, train_end=int(label), eval_len=100, reestimate_every=5)
    if label in SCARCITY_PERIODS:
        train_end, eval_len = SCARCITY_PERIODS[label]
        return SamplePeriod(label=label, train_end=train_end, eval_len=eval_len, reestimate_every=1)
    raise ConfigError(f"unknown sample period label {label!r}")


@dataclass(frozen=True)
class ForecastRecord:
    asset: str
    model_id: str
    origin_day: str  # ISO date of the feature day; forecast targets origin+1
    forecast: float
    actual: float
    horizon: int = 1


@dataclass(frozen=True)
class ModelSpec:
    """One (family, training-approach, predictor-set) combination."""

    family: str  # "har" | "fnn" | "xgb" | "nf"
    mode: str = "TO"  # "TO" | "NP" | "MTL"
    predictor_base: str = "STD"  # "STD" | "EXT"
    epsilon: float | None = None  # MTL percentile
    suffix: str = ""  # "", "-5", "-1": reduced predictor sets
    strategy: str | None = None  # overrides suffix per origin day

    def __post_init__(self) -> None:
        if self.family not in ("har", "fnn", "xgb", "nf"):
            raise ConfigError(f"unknown model family {self.family!r}")
        if self.family != "nf" and self.mode not in ("TO", "NP", "MTL"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.mode == "MTL" and self.family != "nf" and self.epsilon is None:
            raise ConfigError("MTL specs need an epsilon percentile")
        if self.strategy is not None and self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}")

    @property
    def model_id(self) -> str:
        if self.family == "nf":
            return "NF"
        mode = self.mode if self.mode != "MTL" else f"MTL-{self.epsilon:g}"
        name = f"{mode} {self.family.upper()}-{self.predictor_base}"
        if self.strategy is not None:
            return f"Str.{self.strategy} {name}"
        if self.suffix:
            return f"{self.suffix.lstrip('-')}-{name}"
        return name

    def kind_at(self, day: int) -> str:
        suffix = transition_predictors(self.strategy, day) if self.strategy else self.suffix
        return self.predictor_base + suffix


def transition_predictors(strategy: str, day_since_listing: int) -> str:
    """Predictor-set suffix under a transition strategy for a given day count."""
    if day_since_listing < 1:
        raise ConfigError("day_since_listing must be >= 1")
    if strategy == "1-1-1":
        return "-1"
    if strategy == "1-5-5":
        return "-1" if day_since_listing <= 5 else "-5"
    if strategy == "1-5-22":
        if day_since_listing <= 5:
            return "-1"
        return "-5" if day_since_listing <= 22 else ""
    raise ConfigError(f"unknown strategy {strategy!r}")


def naive_forecast(rv_series: np.ndarray, origin_day: int) -> float | None:
    """Previous-day persistence: the forecast for origin+1 is rv_d(origin)."""
    rv = np.asarray(rv_series, dtype=float)
    if origin_day < 1 or origin_day > rv.size:
        return None
    v = rv[origin_day - 1]
    return float(v) if math.isfinite(v) else None


def stable_seed(root: int, *parts: str) -> int:
    """Deterministic per-task sub-seed; adding tasks never perturbs others."""
    digest = hashlib.sha256(("|".join([str(root), *parts])).encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass
class EvalRun:
    records: list[ForecastRecord] = field(default_factory=list)
    audit: list[dict] = field(default_factory=list)
    fit_log: list[dict] = field(default_factory=list)
    snapshots: dict[str, dict] = field(default_factory=dict)  # model_id -> last fit


# FNN batch sizes per training approach; target-only drops to 1 under daily
# re-estimation because almost no target rows exist.
_FNN_BATCH = {"TO": 4, "MTL": 512, "NP": 1024}


class _AssetState:
    """Per-(target, period) caches: full assemblies, windows, FNN epoch reuse."""

    def __init__(self, target_id, target_records, source_records, m, root_seed, period):
        self.target_id = target_id
        self.records = target_records
        self.sources = source_records
        self.m = m
        self.root_seed = root_seed
        self.period = period
        self._full: dict[tuple[str, str], SupervisedDataSet] = {}
        self._windows: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        self._aligned: dict[tuple[str, str], dict[str, SupervisedDataSet]] = {}
        self._ranked: dict[tuple[str, str], list] = {}
        self.fnn_epochs: dict[tuple[str, str], int] = {}
        self.rv = np.array([r.rv_d for r in target_records])

    def full_dataset(self, asset_id: str, kind: str) -> SupervisedDataSet:
        key = (asset_id, kind)
        if key not in self._full:
            recs = self.records if asset_id == self.target_id else self.sources[asset_id]
            self._full[key] = assemble(recs, kind, asset_id=asset_id)
        return self._full[key]

    def target_window(self, kind: str, origin_date: np.datetime64) -> np.ndarray:
        if kind not in self._windows:
            self._windows[kind] = feature_rows(self.records, kind)
        dates, feats = self._windows[kind]
        mask = dates <= origin_date
        vol = feats[mask][:, : vol_feature_count(kind)]
        return vol[-min(self.m, len(vol)) :]

    def aligned_sources(self, kind: str, origin_date: np.datetime64) -> dict[str, SupervisedDataSet]:
        key = (kind, str(origin_date))
        if key not in self._aligned:
            out: dict[str, SupervisedDataSet] = {}
            for sid in sorted(self.sources):
                src = self.full_dataset(sid, kind)
                out[sid] = src.take(src.label_dates <= origin_date)
            self._aligned[key] = out
        return self._aligned[key]

    def ranked_subsequences(self, kind: str, origin_date: np.datetime64) -> list:
        """DTW ranking shared by every MTL spec at one (kind, origin)."""
        key = (kind, str(origin_date))
        if key not in self._ranked:
            self._ranked[key] = rank_sources_for_window(
                self.aligned_sources(kind, origin_date),
                self.target_window(kind, origin_date),
                self.m,
            )
        return self._ranked[key]


def _fit_model(spec: ModelSpec, pooled: SupervisedDataSet, state: _AssetState, kind: str, origin: int):
    seed = stable_seed(state.root_seed, state.target_id, state.period.label, spec.model_id, str(origin))
    if spec.family == "har":
        return fit_har(pooled)
    if spec.family == "xgb":
        return fit_boosted(pooled, BoostConfig(seed=seed))
    if spec.family == "fnn":
        batch = _FNN_BATCH[spec.mode]
        if spec.mode == "TO" and state.period.is_scarcity:
            batch = 1
        cfg = FitConfig(batch_size=batch, seed=seed)
        key = (spec.model_id, kind)
        if key in state.fnn_epochs:
            return fit_fnn(pooled, cfg, epochs_override=state.fnn_epochs[key])
        model = fit_fnn(pooled, cfg)
        state.fnn_epochs[key] = model.trained_epochs
        return model
    raise ConfigError(f"family {spec.family!r} is not fittable")


def rolling_evaluate(
    target_id: str,
    target_records: list[DailyRecord],
    source_records: dict[str, list[DailyRecord]],
    specs: list[ModelSpec],
    period: SamplePeriod,
    m: int = 22,
    root_seed: int = 0,
) -> EvalRun:
    """Walk one target through one sample period for every model spec."""
    needed = period.train_end + period.eval_len
    if len(target_records) < needed:
        raise ValidationError(
            f"target {target_id} has {len(target_records)} usable days; "
            f"period {period.label} needs {needed}"
        )
    state = _AssetState(target_id, target_records, source_records, m, root_seed, period)
    run = EvalRun()
    last_day = period.train_end + period.eval_len - 1

    for origin in period.fit_origins:
        origin_date = np.datetime64(target_records[origin - 1].date, "D")
        block_days = range(origin, min(origin + period.reestimate_every - 1, last_day) + 1)
        training_min_rv = float(np.min(state.rv[:origin]))

        for spec in specs:
            if spec.family == "nf":
                if origin == period.train_end:  # NF needs no refits; emit once
                    for f in range(period.train_end, last_day + 1):
                        fc = naive_forecast(state.rv, f)
                        if fc is None:
                            continue
                        run.records.append(
                            ForecastRecord(
                                asset=target_id,
                                model_id="NF",
                                origin_day=target_records[f - 1].date.isoformat(),
                                forecast=fc,
                                actual=float(state.rv[f]),
                            )
                        )
                continue

            kind = spec.kind_at(origin)
            target_full = state.full_dataset(target_id, kind)
            tmask = target_full.label_dates <= origin_date
            target_train = target_full.take(tmask)

            sources: dict[str, SupervisedDataSet] = {}
            window = None
            ranked = None
            if spec.mode in ("NP", "MTL"):
                sources = state.aligned_sources(kind, origin_date)
                if spec.mode == "MTL":
                    window = state.target_window(kind, origin_date)
                    ranked = state.ranked_subsequences(kind, origin_date)

            cfg = SelectionConfig(
                m=m, epsilon=spec.epsilon if spec.epsilon is not None else 50.0, mode=spec.mode
            )
            try:
                pooled, audit = build_training_set(
                    spec.mode, target_train, sources, cfg, origin_date,
                    target_window=window, ranked=ranked,
                )
                model = _fit_model(spec, pooled, state, kind, origin)
            except FitError as exc:
                run.fit_log.append(
                    {
                        "origin": origin,
                        "model_id": spec.model_id,
                        "status": "failed",
                        "error": str(exc),
                        "n_rows": int(target_train.n_rows),
                    }
                )
                continue
            for row in audit:
                row["target"] = target_id
                row["model_id"] = spec.model_id
            run.audit.extend(audit)
            run.snapshots[spec.model_id] = model.to_snapshot()
            run.fit_log.append(
                {
                    "origin": origin,
                    "model_id": spec.model_id,
                    "status": "ok",
                    "error": "",
                    "n_rows": int(pooled.n_rows),
                    "origin_date": str(origin_date),
                    "max_train_date": str(pooled.dates.max()) if pooled.n_rows else "",
                    "max_label_date": str(pooled.label_dates.max()) if pooled.n_rows else "",
                }
            )

            names = feature_names(kind)
            for f in block_days:
                rec = target_records[f - 1]
                vals = [rec.feature(nm) for nm in names]
                kind_f = spec.kind_at(f)
                if kind_f != kind or not all(math.isfinite(v) for v in vals):
                    continue  # feature set switches or gaps: day handled by next fit
                pred = clamp_forecast(model.predict(np.asarray(vals)), training_min_rv)
                run.records.append(
                    ForecastRecord(
                        asset=target_id,
                        model_id=spec.model_id,
                        origin_day=rec.date.isoformat(),
                        forecast=pred,
                        actual=float(state.rv[f]),
                    )
                )
    return run


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def compute_losses(records: list[ForecastRecord]) -> tuple[float, float]:
    """(MSE, MAE) over a non-empty record list.

    Exact (fsum) accumulation, so the metrics are invariant to record order.
    """
    if not records:
        raise ValidationError("no records: loss metrics undefined")
    err = [r.forecast - r.actual for r in records]
    n = len(err)
    return math.fsum(e * e for e in err) / n, math.fsum(abs(e) for e in err) / n


def _loss_map(records: list[ForecastRecord], metric: str) -> dict[str, dict[tuple, float]]:
    by_model: dict[str, dict[tuple, float]] = {}
    for r in records:
        e = r.forecast - r.actual
        loss = e * e if metric == "mse" else abs(e)
        by_model.setdefault(r.model_id, {})[(r.asset, r.origin_day)] = loss
    return by_model


def loss_series(records: list[ForecastRecord], metric: str = "mse") -> dict[str, np.ndarray]:
    """Per-model daily loss series aligned on origin days common to all models."""
    by_model = _loss_map(records, metric)
    if not by_model:
        return {}
    common = set.intersection(*(set(v) for v in by_model.values()))
    keys = sorted(common)
    return {mid: np.array([vals[k] for k in keys]) for mid, vals in by_model.items()}


def paired_losses(
    records: list[ForecastRecord], model_a: str, model_b: str, metric: str = "mse"
) -> tuple[np.ndarray, np.ndarray]:
    """Daily losses for two models aligned on the days both forecast."""
    by_model = _loss_map(records, metric)
    a = by_model.get(model_a, {})
    b = by_model.get(model_b, {})
    keys = sorted(set(a) & set(b))
    return np.array([a[k] for k in keys]), np.array([b[k] for k in keys])


@dataclass(frozen=True)
class DmResult:
    statistic: float
    p_value: float
    reject_at_5pct: bool
    degenerate: bool = False


def _normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def dm_test(loss_a: np.ndarray, loss_b: np.ndarray) -> DmResult:
    """One-sided Diebold-Mariano test of H1: E[loss_a] < E[loss_b].

    d_t = loss_a - loss_b; the long-run variance uses truncation lag 0 (plain
    sample variance), appropriate for 1-step-ahead forecasts. No small-sample
    correction.
    """
    a = np.asarray(loss_a, dtype=float)
    b = np.asarray(loss_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError("loss series must be equal-length vectors")
    n = a.size
    if n < 10:
        raise ValidationError("DM test needs at least 10 observations")
    d = a - b
    dbar = math.fsum(d) / n
    gamma0 = math.fsum((x - dbar) ** 2 for x in d) / n
    if dbar == 0.0 and gamma0 == 0.0:
        return DmResult(statistic=0.0, p_value=0.5, reject_at_5pct=False)
    if gamma0 <= (1e-12 * abs(dbar)) ** 2:  # constant differential up to jitter
        return DmResult(
            statistic=math.copysign(math.inf, dbar),
            p_value=0.0 if dbar < 0 else 1.0,
            reject_at_5pct=False,
            degenerate=True,
        )
    stat = dbar / math.sqrt(gamma0 / n)
    p = _normal_cdf(stat)
    return DmResult(statistic=stat, p_value=p, reject_at_5pct=p < 0.05)


# ---------------------------------------------------------------------------
# Model confidence set
# ---------------------------------------------------------------------------


def _block_bootstrap_indices(
    rng: np.random.Generator, n: int, block: int, n_boot: int
) -> np.ndarray:
    n_blocks = -(-n // block)
    starts = rng.integers(0, n - block + 1, size=(n_boot, n_blocks))
    idx = starts[:, :, None] + np.arange(block)[None, None, :]
    return idx.reshape(n_boot, -1)[:, :n]


def model_confidence_set(
    loss_matrix: np.ndarray,
    alpha: float = 0.05,
    n_boot: int = 5000,
    seed: int = 0,
) -> list[int]:
    """Surviving column indices under iterative range-statistic elimination.

    Pairwise mean loss differentials are standardized by moving-block
    bootstrap standard errors (block length floor(n^(1/3))); the range
    statistic max|t| is compared with its bootstrap distribution, and while
    its p-value is below alpha the model with the largest standardized mean
    relative loss is dropped. Bootstrap tensors are processed in chunks so
    large (B, K) combinations stay memory-bounded.
    """
    losses = np.asarray(loss_matrix, dtype=float)
    if losses.ndim != 2:
        raise ValidationError("loss_matrix must be 2-dimensional (days x models)")
    n, k = losses.shape
    if n < 20 or k < 2:
        raise ValidationError("MCS needs n >= 20 days and K >= 2 models")
    block = max(1, int(np.floor(n ** (1.0 / 3.0))))
    rng = np.random.default_rng(seed)
    idx = _block_bootstrap_indices(rng, n, block, n_boot)
    chunk = max(1, min(n_boot, 64_000_000 // max(1, n * k)))

    boot_means = np.empty((n_boot, k))
    for lo in range(0, n_boot, chunk):
        boot_means[lo : lo + chunk] = losses[idx[lo : lo + chunk]].mean(axis=1)

    members = list(range(k))
    while len(members) > 1:
        cols = np.asarray(members)
        means = losses[:, cols].mean(axis=0)
        dbar = means[:, None] - means[None, :]
        bm = boot_means[:, cols]

        var = np.zeros_like(dbar)
        for lo in range(0, n_boot, chunk):
            dev = (bm[lo : lo + chunk, :, None] - bm[lo : lo + chunk, None, :]) - dbar[None]
            var += np.sum(dev * dev, axis=0)
        se = np.sqrt(var / n_boot)

        safe = se > 0.0
        t_pair = np.zeros_like(dbar)
        t_pair[safe] = dbar[safe] / se[safe]
        t_pair[~safe & (dbar != 0.0)] = np.inf
        t_range = float(np.max(np.abs(t_pair)))
        if t_range == 0.0:
            break  # indistinguishable losses: everyone survives

        exceed = 0
        dev_rel_sq = np.zeros(len(members))
        for lo in range(0, n_boot, chunk):
            dev = (bm[lo : lo + chunk, :, None] - bm[lo : lo + chunk, None, :]) - dbar[None]
            boot_t = np.zeros_like(dev)
            boot_t[:, safe] = np.abs(dev[:, safe]) / se[safe]
            exceed += int(np.sum(boot_t.reshape(dev.shape[0], -1).max(axis=1) >= t_range))
            rel_dev = dev.mean(axis=2)
            dev_rel_sq += np.sum(rel_dev * rel_dev, axis=0)
        p = exceed / n_boot
        if p >= alpha:
            break

        rel = dbar.mean(axis=1)
        se_rel = np.sqrt(dev_rel_sq / n_boot)
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.where(se_rel > 0.0, rel / np.where(se_rel > 0.0, se_rel, 1.0), np.sign(rel) * np.inf)
        worst = int(np.argmax(u))
        members.pop(worst)
    return members
