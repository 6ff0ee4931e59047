"""Training-set construction: target-only, naive pooling, and DTW-selected transfer.

Source histories are cut into non-overlapping windows (excess observations
dropped from the head), ranked by DTW distance between their lagged-volatility
features and the target's most recent window, and pooled with the target data
when their distance falls below the chosen percentile.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import SupervisedDataSet, vol_feature_count
from .dtw import dtw_distance
from .errors import AlignmentError, ConfigError, ValidationError

MODES = ("TO", "NP", "MTL")


@dataclass(frozen=True)
class SelectionConfig:
    m: int = 22
    epsilon: float = 50.0
    mode: str = "MTL"

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.m < 1:
            raise ConfigError("subsequence length m must be >= 1")
        if self.mode == "MTL" and not 0.0 < self.epsilon < 100.0:
            raise ConfigError("epsilon must lie in (0, 100) for MTL")


@dataclass(frozen=True)
class Subsequence:
    """A contiguous m-row slice of one source asset's supervised history."""

    asset_id: str
    start_index: int  # 0-based row offset within the aligned source dataset
    rows: SupervisedDataSet
    dtw_features: np.ndarray  # (m, d_vol) lagged-volatility slice

    @property
    def length(self) -> int:
        return self.rows.n_rows

    def sort_key(self) -> tuple[str, int]:
        return (self.asset_id, self.start_index)


@dataclass
class SubsequenceUniverse:
    items: list[Subsequence]
    counts: dict[str, tuple[int, int]] = field(default_factory=dict)  # asset -> (K, e)


def generate_subsequences(
    source: SupervisedDataSet, m: int, asset_id: str | None = None
) -> list[Subsequence]:
    """Split a source dataset into K = floor((N - N mod m) / m) disjoint windows.

    The e = N mod m excess rows at the head are omitted, so windows start at
    0-based offsets e, e+m, e+2m, ...
    """
    if m < 1:
        raise ConfigError("m must be >= 1")
    n = source.n_rows
    if n < m:
        return []
    tag = asset_id if asset_id is not None else str(source.asset_tags[0])
    e = n % m
    k = (n - e) // m
    d_vol = vol_feature_count(source.predictor_kind)
    subs = []
    for i in range(k):
        start = e + i * m
        rows = source.take(slice(start, start + m))
        subs.append(
            Subsequence(
                asset_id=tag,
                start_index=start,
                rows=rows,
                dtw_features=rows.features[:, :d_vol],
            )
        )
    return subs


def build_universe(
    sources: dict[str, SupervisedDataSet], m: int
) -> SubsequenceUniverse:
    items: list[Subsequence] = []
    counts: dict[str, tuple[int, int]] = {}
    for asset_id in sorted(sources):
        ds = sources[asset_id]
        subs = generate_subsequences(ds, m, asset_id=asset_id)
        counts[asset_id] = (len(subs), ds.n_rows % m if ds.n_rows >= m else ds.n_rows)
        items.extend(subs)
    return SubsequenceUniverse(items=items, counts=counts)


def rank_by_similarity(
    target_window: np.ndarray, universe: SubsequenceUniverse
) -> list[tuple[Subsequence, float]]:
    """Order subsequences by DTW distance to the target window, ascending.

    The window is the target's last m available lagged-volatility feature rows,
    including the forecast-day row that has no label yet. Ties break on
    (asset_id, start_index) so ranking is deterministic.
    """
    window = np.asarray(target_window, dtype=float)
    if window.ndim == 1:
        window = window[:, None]
    if window.shape[0] == 0:
        raise ValidationError("empty target window")
    scored = []
    for sub in universe.items:
        if sub.dtw_features.shape[1] != window.shape[1]:
            raise ValidationError(
                f"dtw feature width mismatch: window {window.shape[1]}, "
                f"subsequence {sub.dtw_features.shape[1]}"
            )
        scored.append((sub, dtw_distance(window, sub.dtw_features)))
    scored.sort(key=lambda pair: (pair[1], pair[0].sort_key()))
    return scored


def select_by_percentile(
    ranked: list[tuple[Subsequence, float]], epsilon: float
) -> list[tuple[Subsequence, float]]:
    """Keep items strictly below the epsilon-th percentile of all distances.

    The threshold is the (floor(eps*n/100)+1)-th order statistic, so with n
    distinct distances exactly floor(eps*n/100) items survive. If nothing
    falls strictly below (heavy ties), the single minimum-distance item is
    kept so the pool is never empty.
    """
    if not ranked:
        raise ValidationError("cannot select from an empty ranking")
    distances = np.array([d for _, d in ranked])
    n = distances.size
    idx = min(int(np.floor(epsilon * n / 100.0)), n - 1)
    threshold = float(np.sort(distances)[idx])
    selected = [(s, d) for s, d in ranked if d < threshold]
    if not selected:
        selected = [ranked[0]]
    return selected


def align_to_origin(ds: SupervisedDataSet, origin: np.datetime64) -> SupervisedDataSet:
    """Trim to rows whose feature and label dates are both at or before origin."""
    if ds.n_rows == 0:
        return ds
    mask = (ds.dates <= origin) & (ds.label_dates <= origin)
    return ds.take(mask)


def _check_alignment(ds: SupervisedDataSet, origin: np.datetime64, what: str) -> None:
    if ds.n_rows == 0:
        return
    if (ds.dates > origin).any() or (ds.label_dates > origin).any():
        raise AlignmentError(f"{what} contains rows dated after origin {origin}")


def rank_sources_for_window(
    sources: dict[str, SupervisedDataSet],
    target_window: np.ndarray,
    m: int,
) -> list[tuple[Subsequence, float]]:
    """Universe generation plus DTW ranking for one origin's target window.

    The window shrinks to the rows available when fewer than m exist, and the
    subsequence length follows it. The result is reusable across epsilon
    thresholds and model families at the same origin.
    """
    window = np.asarray(target_window, dtype=float)
    m_eff = min(m, window.shape[0])
    if m_eff < 1:
        raise ValidationError("MTL target window is empty")
    universe = build_universe(sources, m_eff)
    if not universe.items:
        return []
    return rank_by_similarity(window[-m_eff:], universe)


def build_training_set(
    mode: str,
    target: SupervisedDataSet,
    sources: dict[str, SupervisedDataSet],
    cfg: SelectionConfig,
    origin: np.datetime64,
    target_window: np.ndarray | None = None,
    ranked: list[tuple[Subsequence, float]] | None = None,
) -> tuple[SupervisedDataSet, list[dict]]:
    """Pool the approach-specific training rows for one forecast origin.

    TO: target rows only. NP: target plus every aligned source row. MTL:
    target plus the rows of all percentile-selected subsequences. Target rows
    are always included in full. Returns (dataset, audit rows); audit rows are
    only produced for MTL, one per subsequence in the universe.

    Sources must already be trimmed to the origin; future-dated rows raise.
    A precomputed `ranked` list (from rank_sources_for_window on the same
    sources and window) skips the DTW pass.
    """
    origin = np.datetime64(origin, "D")
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}")
    _check_alignment(target, origin, "target data")
    for asset_id, ds in sources.items():
        _check_alignment(ds, origin, f"source {asset_id}")

    audit: list[dict] = []
    if mode == "TO" or not sources:
        return target, audit

    if mode == "NP":
        parts = [target] + [sources[a] for a in sorted(sources)]
        return SupervisedDataSet.concat(parts), audit

    if ranked is None:
        if target_window is None:
            raise ValidationError("MTL selection requires the target feature window")
        ranked = rank_sources_for_window(sources, target_window, cfg.m)
    if not ranked:
        return target, audit
    selected = select_by_percentile(ranked, cfg.epsilon)
    chosen = {(s.asset_id, s.start_index) for s, _ in selected}
    for sub, dist in ranked:
        audit.append(
            {
                "origin": str(origin),
                "asset_id": sub.asset_id,
                "start_index": sub.start_index,
                "distance": dist,
                "selected": int((sub.asset_id, sub.start_index) in chosen),
            }
        )
    ordered = sorted((s for s, _ in selected), key=Subsequence.sort_key)
    parts = [target] + [s.rows for s in ordered]
    return SupervisedDataSet.concat(parts), audit
