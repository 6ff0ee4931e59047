"""Daily predictor/label construction from intraday bars and macro series.

The pipeline is: intraday bars -> session filter -> per-day realized variance
-> weekly/monthly components -> extended (firm + macro) predictors -> one
DailyRecord per usable trading day -> SupervisedDataSet rows for a chosen
predictor set.

Unavailable values (warm-up windows, exhausted forward-fill) are carried as
NaN inside DailyRecord and dropped at assembly time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from datetime import date, time
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .errors import ConfigError, ValidationError

SESSION_OPEN = time(9, 30)
SESSION_CLOSE = time(16, 0)
SESSION_TZ = "America/New_York"

WEEKLY_WINDOW = 5
MONTHLY_WINDOW = 22

# Fixed feature orders per predictor set. The "-5" kinds drop the monthly
# component plus the momentum and dollar-volume predictors; the "-1" kinds
# additionally drop the weekly component and the differenced macro inputs.
PREDICTOR_KINDS: dict[str, tuple[str, ...]] = {
    "STD": ("rv_d", "rv_w", "rv_m"),
    "EXT": ("rv_d", "rv_w", "rv_m", "mom", "dv", "ea", "us3m", "hsi", "ads", "epu", "vix"),
    "STD-5": ("rv_d", "rv_w"),
    "EXT-5": ("rv_d", "rv_w", "ea", "us3m", "hsi", "ads", "epu", "vix"),
    "STD-1": ("rv_d",),
    "EXT-1": ("rv_d", "ea", "ads", "epu", "vix"),
}

# Leading lagged-volatility columns used for DTW ranking under each kind.
VOL_FEATURE_COUNT = {"STD": 3, "EXT": 3, "STD-5": 2, "EXT-5": 2, "STD-1": 1, "EXT-1": 1}

MACRO_SERIES = ("us3m", "hsi", "ads", "epu", "vix")


def feature_names(kind: str) -> tuple[str, ...]:
    try:
        return PREDICTOR_KINDS[kind]
    except KeyError:
        raise ConfigError(f"unknown predictor kind {kind!r}") from None


def feature_width(kind: str) -> int:
    return len(feature_names(kind))


def vol_feature_count(kind: str) -> int:
    feature_names(kind)
    return VOL_FEATURE_COUNT[kind]


@dataclass
class DailyRecord:
    """One trading day of one asset. NaN marks an unavailable value."""

    date: date
    rv_d: float
    rv_w: float = math.nan
    rv_m: float = math.nan
    mom: float = math.nan
    dv: float = math.nan
    ea: float = math.nan
    us3m: float = math.nan
    hsi: float = math.nan
    ads: float = math.nan
    epu: float = math.nan
    vix: float = math.nan
    label: float = math.nan

    def feature(self, name: str) -> float:
        return getattr(self, name)


DAILY_RECORD_COLUMNS = [f.name for f in fields(DailyRecord)]


@dataclass
class SupervisedDataSet:
    """Ordered (feature, label) rows for one predictor set, with provenance.

    `dates` are the feature days; `label_dates` the label days (feature day's
    successor in the asset's own trading calendar). Both are needed for the
    no-look-ahead audit.
    """

    features: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) float64
    dates: np.ndarray  # (n,) datetime64[D]
    label_dates: np.ndarray  # (n,) datetime64[D]
    asset_tags: np.ndarray  # (n,) object
    predictor_kind: str

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=float)
        feats = np.asarray(self.features, dtype=float)
        if len(self.labels):
            feats = feats.reshape(len(self.labels), -1)
        else:
            feats = feats.reshape(0, feature_width(self.predictor_kind))
        self.features = feats
        self.dates = np.asarray(self.dates, dtype="datetime64[D]")
        self.label_dates = np.asarray(self.label_dates, dtype="datetime64[D]")
        self.asset_tags = np.asarray(self.asset_tags, dtype=object)
        width = feature_width(self.predictor_kind)
        if self.n_rows and self.features.shape[1] != width:
            raise ValidationError(
                f"{self.predictor_kind} expects width {width}, got {self.features.shape[1]}"
            )
        if self.n_rows:
            if not np.isfinite(self.features).all():
                raise ValidationError("non-finite feature values")
            if not np.isfinite(self.labels).all() or (self.labels < 0).any():
                raise ValidationError("labels must be finite and >= 0")

    @property
    def n_rows(self) -> int:
        return len(self.labels)

    def take(self, index) -> "SupervisedDataSet":
        return SupervisedDataSet(
            features=self.features[index],
            labels=self.labels[index],
            dates=self.dates[index],
            label_dates=self.label_dates[index],
            asset_tags=self.asset_tags[index],
            predictor_kind=self.predictor_kind,
        )

    @classmethod
    def empty(cls, kind: str) -> "SupervisedDataSet":
        width = feature_width(kind)
        return cls(
            features=np.empty((0, width)),
            labels=np.empty(0),
            dates=np.empty(0, dtype="datetime64[D]"),
            label_dates=np.empty(0, dtype="datetime64[D]"),
            asset_tags=np.empty(0, dtype=object),
            predictor_kind=kind,
        )

    @classmethod
    def concat(cls, parts: Sequence["SupervisedDataSet"]) -> "SupervisedDataSet":
        parts = [p for p in parts if p.n_rows]
        if not parts:
            raise ValidationError("cannot concatenate zero non-empty datasets")
        kinds = {p.predictor_kind for p in parts}
        if len(kinds) != 1:
            raise ValidationError(f"mixed predictor kinds in concat: {sorted(kinds)}")
        return cls(
            features=np.concatenate([p.features for p in parts]),
            labels=np.concatenate([p.labels for p in parts]),
            dates=np.concatenate([p.dates for p in parts]),
            label_dates=np.concatenate([p.label_dates for p in parts]),
            asset_tags=np.concatenate([p.asset_tags for p in parts]),
            predictor_kind=parts[0].predictor_kind,
        )


# ---------------------------------------------------------------------------
# Session filtering and realized variance
# ---------------------------------------------------------------------------


def filter_sessions(bars: pd.DataFrame, holidays: Iterable[date] = ()) -> pd.DataFrame:
    """Keep bars inside [9:30, 16:00] local exchange time on business days.

    `bars` needs a tz-aware `timestamp` column sorted strictly increasing.
    Weekends, configured full-day holidays, and the overnight/weekend spans
    between sessions are dropped.
    """
    if bars.empty:
        return bars.copy()
    ts = bars["timestamp"]
    if ts.dt.tz is None:
        raise ValidationError("bar timestamps must be timezone-aware")
    if not ts.is_monotonic_increasing or ts.duplicated().any():
        raise ValidationError("bar timestamps must be strictly increasing")
    local = ts.dt.tz_convert(SESSION_TZ)
    tod = pd.Series([t.time() for t in local], index=bars.index)
    holiday_set = set(holidays)
    keep = (
        (tod >= SESSION_OPEN)
        & (tod <= SESSION_CLOSE)
        & (local.dt.weekday < 5)
        & ~local.dt.date.isin(holiday_set)
    )
    out = bars.loc[keep].copy()
    out["session_date"] = local.loc[keep].dt.date
    return out


def compute_daily_rv(
    day_bars: pd.DataFrame, sampling_minutes: int = 5
) -> float | None:
    """Sum of squared log returns between 5-minute closes of one session.

    Marks sit on the :30, :35, ..., :00 wall-clock grid; each mark takes the
    last trade at or before it (previous-tick fill). Marks before the first
    trade are skipped. Returns None when fewer than 2 marks are realized.
    """
    if day_bars.empty:
        return None
    local = day_bars["timestamp"].dt.tz_convert(SESSION_TZ)
    closes = day_bars["close"].to_numpy(dtype=float)
    if (closes <= 0).any():
        raise ValidationError("non-positive close in session bars")

    day = local.iloc[0].date()
    offsets = (
        local - pd.Timestamp(day, tz=SESSION_TZ)
    ).dt.total_seconds().to_numpy()
    open_s = SESSION_OPEN.hour * 3600 + SESSION_OPEN.minute * 60
    close_s = SESSION_CLOSE.hour * 3600 + SESSION_CLOSE.minute * 60
    marks = np.arange(open_s, close_s + 1, sampling_minutes * 60)

    # index of the last bar at or before each mark; -1 means no trade yet
    pos = np.searchsorted(offsets, marks, side="right") - 1
    mark_closes = closes[pos[pos >= 0]]
    if mark_closes.size < 2:
        return None
    r = np.diff(np.log(mark_closes))
    return float(np.sum(r * r))


def build_components(rv_series: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Trailing 5-day and 22-day means of daily RV, NaN until the window fills."""
    rv = np.asarray(rv_series, dtype=float)
    n = rv.size
    rv_w = np.full(n, np.nan)
    rv_m = np.full(n, np.nan)
    # direct window means so recomputation from raw rv_d reproduces bits
    for window, out in ((WEEKLY_WINDOW, rv_w), (MONTHLY_WINDOW, rv_m)):
        for t in range(window - 1, n):
            out[t] = np.mean(rv[t - window + 1 : t + 1])
    return rv_w, rv_m


# ---------------------------------------------------------------------------
# Extended predictors
# ---------------------------------------------------------------------------


def _forward_fill_to_dates(
    series: pd.Series, dates: Sequence[date]
) -> np.ndarray:
    """Most recent value at or before each date; NaN before the first value."""
    s = series.dropna().sort_index()
    if s.index.has_duplicates:
        s = s[~s.index.duplicated(keep="last")]
    keys = np.asarray(s.index, dtype="datetime64[D]")
    vals = s.to_numpy(dtype=float)
    targets = np.asarray(pd.to_datetime(list(dates)), dtype="datetime64[D]")
    pos = np.searchsorted(keys, targets, side="right") - 1
    out = np.full(len(targets), np.nan)
    ok = pos >= 0
    out[ok] = vals[pos[ok]]
    return out


def build_extended_predictors(
    dates: Sequence[date],
    closes: np.ndarray,
    volumes: np.ndarray,
    earnings_dates: Iterable[date],
    macro: dict[str, pd.Series],
) -> dict[str, np.ndarray]:
    """Firm-level and macro predictor columns aligned to the asset's trading days.

    mom(t) = log p(t) - log p(t-5); dv(t) = log(p(t) v(t)) - log(p(t-1) v(t-1));
    ea(t) = 1 iff an announcement falls on the next trading day; us3m is the
    first-differenced rate, hsi the squared daily log index return, ads/epu/vix
    pass through as levels. Macro gaps are forward-filled by calendar date.
    """
    n = len(dates)
    closes = np.asarray(closes, dtype=float)
    volumes = np.asarray(volumes, dtype=float)
    logp = np.log(closes)

    mom = np.full(n, np.nan)
    if n > 5:
        mom[5:] = logp[5:] - logp[:-5]

    dv = np.full(n, np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_dollar = np.log(closes * volumes)
    if n > 1:
        dv[1:] = log_dollar[1:] - log_dollar[:-1]

    ea = np.zeros(n)
    announce = set(earnings_dates)
    for i in range(n - 1):
        if dates[i + 1] in announce:
            ea[i] = 1.0
    # the final day's next trading day is outside the sample; fall back to
    # calendar lookup so a scheduled announcement still flags it
    if n:
        nxt = pd.Timestamp(dates[-1]) + pd.offsets.BDay(1)
        if nxt.date() in announce:
            ea[-1] = 1.0

    out: dict[str, np.ndarray] = {"mom": mom, "dv": dv, "ea": ea}

    rate = _forward_fill_to_dates(macro["us3m"], dates) if "us3m" in macro else np.full(n, np.nan)
    us3m = np.full(n, np.nan)
    us3m[1:] = rate[1:] - rate[:-1]
    out["us3m"] = us3m

    if "hsi" in macro:
        level = _forward_fill_to_dates(macro["hsi"], dates)
        hsi = np.full(n, np.nan)
        with np.errstate(invalid="ignore"):
            lr = np.diff(np.log(level))
        hsi[1:] = lr * lr
        out["hsi"] = hsi
    else:
        out["hsi"] = np.full(n, np.nan)

    for name in ("ads", "epu", "vix"):
        if name in macro:
            out[name] = _forward_fill_to_dates(macro[name], dates)
        else:
            out[name] = np.full(n, np.nan)
    return out


# ---------------------------------------------------------------------------
# DailyRecord assembly
# ---------------------------------------------------------------------------


def build_daily_records(
    dates: Sequence[date],
    rv_d: np.ndarray,
    closes: np.ndarray | None = None,
    volumes: np.ndarray | None = None,
    earnings_dates: Iterable[date] = (),
    macro: dict[str, pd.Series] | None = None,
) -> list[DailyRecord]:
    """Compose per-day records; extended fields stay NaN without price/macro inputs."""
    rv = np.asarray(rv_d, dtype=float)
    n = rv.size
    if len(dates) != n:
        raise ValidationError("dates and rv_d length mismatch")
    rv_w, rv_m = build_components(rv)
    if closes is not None and volumes is not None:
        ext = build_extended_predictors(dates, closes, volumes, earnings_dates, macro or {})
    else:
        nancol = np.full(n, np.nan)
        ext = {k: nancol.copy() for k in ("mom", "dv", "us3m", "hsi", "ads", "epu", "vix")}
        ext["ea"] = np.zeros(n)

    records = []
    for i in range(n):
        records.append(
            DailyRecord(
                date=dates[i],
                rv_d=float(rv[i]),
                rv_w=float(rv_w[i]),
                rv_m=float(rv_m[i]),
                mom=float(ext["mom"][i]),
                dv=float(ext["dv"][i]),
                ea=float(ext["ea"][i]),
                us3m=float(ext["us3m"][i]),
                hsi=float(ext["hsi"][i]),
                ads=float(ext["ads"][i]),
                epu=float(ext["epu"][i]),
                vix=float(ext["vix"][i]),
                label=float(rv[i + 1]) if i + 1 < n else math.nan,
            )
        )
    return records


def feature_rows(
    records: Sequence[DailyRecord], kind: str
) -> tuple[np.ndarray, np.ndarray]:
    """All rows whose features are fully available, labeled or not.

    Returns (dates, features). Used for the DTW target window, which includes
    the forecast-day feature row that has no label yet.
    """
    names = feature_names(kind)
    dates, rows = [], []
    for rec in records:
        vals = [rec.feature(nm) for nm in names]
        if all(math.isfinite(v) for v in vals):
            dates.append(rec.date)
            rows.append(vals)
    if not rows:
        return np.empty(0, dtype="datetime64[D]"), np.empty((0, len(names)))
    return (
        np.asarray(pd.to_datetime(dates), dtype="datetime64[D]"),
        np.asarray(rows, dtype=float),
    )


def assemble(
    records: Sequence[DailyRecord], kind: str, asset_id: str = ""
) -> SupervisedDataSet:
    """Labeled rows for one predictor set, in chronological order.

    A row is emitted only when every feature required by `kind` and the label
    are available. Deterministic: identical inputs give identical datasets.
    """
    names = feature_names(kind)
    feats, labels, dts, label_dts = [], [], [], []
    for i, rec in enumerate(records):
        if not math.isfinite(rec.label) or rec.label < 0:
            continue
        vals = [rec.feature(nm) for nm in names]
        if not all(math.isfinite(v) for v in vals):
            continue
        feats.append(vals)
        labels.append(rec.label)
        dts.append(rec.date)
        if i + 1 < len(records):
            label_dts.append(records[i + 1].date)
        else:
            label_dts.append((pd.Timestamp(rec.date) + pd.offsets.BDay(1)).date())
    if not feats:
        return SupervisedDataSet.empty(kind)
    return SupervisedDataSet(
        features=np.asarray(feats, dtype=float),
        labels=np.asarray(labels, dtype=float),
        dates=np.asarray(pd.to_datetime(dts), dtype="datetime64[D]"),
        label_dates=np.asarray(pd.to_datetime(label_dts), dtype="datetime64[D]"),
        asset_tags=np.asarray([asset_id] * len(feats), dtype=object),
        predictor_kind=kind,
    )


# ---------------------------------------------------------------------------
# CSV interfaces
# ---------------------------------------------------------------------------


def read_intraday_csv(path: str | Path, tz: str = SESSION_TZ) -> pd.DataFrame:
    """Load `timestamp,open,high,low,close,volume` bars; localize naive stamps to tz."""
    df = pd.read_csv(path)
    required = {"timestamp", "close", "volume"}
    missing = required - set(df.columns)
    if missing:
        raise ValidationError(f"{path}: missing columns {sorted(missing)}")
    import warnings

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", FutureWarning)
            ts = pd.to_datetime(df["timestamp"], utc=False, format="ISO8601")
    except ValueError:
        ts = pd.Series(index=df.index, dtype=object)
    if ts.dtype == object:
        # mixed UTC offsets (files spanning DST changes) need a UTC pass
        ts = pd.to_datetime(df["timestamp"], utc=True, format="ISO8601")
    if ts.dt.tz is None:
        ts = ts.dt.tz_localize(tz)  # naive stamps are exchange-local
    df = df.assign(timestamp=ts)
    df = df[df["close"] > 0].reset_index(drop=True)
    return df[["timestamp", "close", "volume"]]


def read_macro_csv(path: str | Path) -> pd.Series:
    """Load a `date,value` series indexed by calendar date."""
    df = pd.read_csv(path)
    if not {"date", "value"} <= set(df.columns):
        raise ValidationError(f"{path}: macro CSV needs columns date,value")
    idx = pd.to_datetime(df["date"])
    return pd.Series(df["value"].to_numpy(dtype=float), index=idx).sort_index()


def read_earnings_csv(path: str | Path, ticker: str) -> list[date]:
    """Announcement dates for one ticker from a `date,ticker` calendar."""
    df = pd.read_csv(path)
    if not {"date", "ticker"} <= set(df.columns):
        raise ValidationError(f"{path}: earnings CSV needs columns date,ticker")
    sel = df[df["ticker"] == ticker]
    return [d.date() for d in pd.to_datetime(sel["date"])]


def write_daily_records(records: Sequence[DailyRecord], path: str | Path) -> None:
    """Cache records as CSV, one column per DailyRecord field; NaN -> empty."""
    rows = []
    for rec in records:
        row = {}
        for name in DAILY_RECORD_COLUMNS:
            v = getattr(rec, name)
            if name == "date":
                row[name] = v.isoformat()
            else:
                row[name] = "" if (isinstance(v, float) and math.isnan(v)) else repr(float(v))
        rows.append(row)
    pd.DataFrame(rows, columns=DAILY_RECORD_COLUMNS).to_csv(path, index=False)


def read_daily_records(path: str | Path) -> list[DailyRecord]:
    df = pd.read_csv(path, float_precision="round_trip")
    missing = set(DAILY_RECORD_COLUMNS) - set(df.columns)
    if missing:
        raise ValidationError(f"{path}: missing daily-record columns {sorted(missing)}")
    records = []
    for _, row in df.iterrows():
        kwargs = {"date": pd.Timestamp(row["date"]).date()}
        for name in DAILY_RECORD_COLUMNS[1:]:
            v = row[name]
            kwargs[name] = float(v) if pd.notna(v) and v != "" else math.nan
        records.append(DailyRecord(**kwargs))
    for a, b in zip(records, records[1:]):
        if a.date >= b.date:
            raise ValidationError(f"{path}: dates not strictly increasing at {b.date}")
    return records


def ingest_asset(
    intraday_path: str | Path,
    ticker: str,
    earnings_path: str | Path | None = None,
    macro_paths: dict[str, str | Path] | None = None,
    holidays: Iterable[date] = (),
    tz: str = SESSION_TZ,
) -> list[DailyRecord]:
    """Full ingestion for one asset: bars -> session days -> DailyRecords."""
    bars = read_intraday_csv(intraday_path, tz=tz)
    bars = filter_sessions(bars, holidays=holidays)
    if bars.empty:
        return []

    dates, rvs, closes, volumes = [], [], [], []
    for day, day_bars in bars.groupby("session_date", sort=True):
        rv = compute_daily_rv(day_bars)
        if rv is None:
            continue
        dates.append(day)
        rvs.append(rv)
        closes.append(float(day_bars["close"].iloc[-1]))
        volumes.append(float(day_bars["volume"].sum()))

    earnings = read_earnings_csv(earnings_path, ticker) if earnings_path else []
    macro = {name: read_macro_csv(p) for name, p in (macro_paths or {}).items()}
    return build_daily_records(
        dates,
        np.asarray(rvs),
        closes=np.asarray(closes),
        volumes=np.asarray(volumes),
        earnings_dates=earnings,
        macro=macro,
    )
