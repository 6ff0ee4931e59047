"""Seeded synthetic panels for fixtures and protocol tests.

The benchmark panel mirrors the transfer setting: the target and a minority
of long-history sources follow one calm/burst regime-switching process (same
dynamics, independent paths), while the remaining sources are shorter
histories with far-off volatility levels and unrelated persistence. The
target's pre-evaluation history is forced calm, so burst behaviour is only
learnable from the shared sources.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .data import DailyRecord, build_daily_records, write_daily_records

CALENDAR_START = "2012-01-03"


@dataclass(frozen=True)
class HarRegime:
    beta_d: float
    beta_w: float
    beta_m: float
    mean_level: float
    noise_sigma: float
    noise: str = "lognormal"  # or "gaussian" (additive, variance noise_sigma^2)

    @property
    def beta_0(self) -> float:
        return self.mean_level * (1.0 - self.beta_d - self.beta_w - self.beta_m)


@dataclass(frozen=True)
class SwitchingProcess:
    calm: HarRegime
    burst: HarRegime
    p_calm_to_burst: float = 0.035
    p_burst_to_calm: float = 0.06
    calm_days: int = 0  # forced initial calm span


SHARED_CALM = HarRegime(beta_d=0.35, beta_w=0.30, beta_m=0.20, mean_level=2e-4, noise_sigma=0.45)
SHARED_BURST = HarRegime(beta_d=0.35, beta_w=0.30, beta_m=0.20, mean_level=8e-4, noise_sigma=0.55)


def har_rv_series(n: int, regime: HarRegime, rng: np.random.Generator) -> np.ndarray:
    """Simulate n days of RV whose conditional mean is the HAR recursion."""
    proc = SwitchingProcess(calm=regime, burst=regime, p_calm_to_burst=0.0, p_burst_to_calm=0.0)
    return switching_rv_series(n, proc, rng)


def switching_rv_series(n: int, proc: SwitchingProcess, rng: np.random.Generator) -> np.ndarray:
    """HAR recursion whose level/noise regime follows a two-state Markov chain."""
    rv = np.empty(n)
    rv[0] = proc.calm.mean_level
    floor = proc.calm.mean_level * 1e-3
    state = 0
    for t in range(1, n):
        if t >= proc.calm_days:
            u = rng.uniform()
            if state == 0 and u < proc.p_calm_to_burst:
                state = 1
            elif state == 1 and u < proc.p_burst_to_calm:
                state = 0
        reg = proc.calm if state == 0 else proc.burst
        w = np.mean(rv[max(0, t - 5) : t])
        m = np.mean(rv[max(0, t - 22) : t])
        mu = reg.beta_0 + reg.beta_d * rv[t - 1] + reg.beta_w * w + reg.beta_m * m
        if reg.noise == "gaussian":
            rv[t] = mu + reg.noise_sigma * rng.standard_normal()
        else:
            z = rng.standard_normal()
            rv[t] = mu * np.exp(reg.noise_sigma * z - 0.5 * reg.noise_sigma**2)
        rv[t] = max(rv[t], floor)
    return rv


def _macro_series(calendar: pd.DatetimeIndex, rng: np.random.Generator) -> dict[str, pd.Series]:
    n = len(calendar)
    us3m = 1.5 + np.cumsum(rng.normal(0.0, 0.01, size=n))
    hsi = 20000.0 * np.exp(np.cumsum(rng.normal(0.0, 0.012, size=n)))
    ads = np.zeros(n)
    for t in range(1, n):
        ads[t] = 0.95 * ads[t - 1] + rng.normal(0.0, 0.1)
    epu = 100.0 + 50.0 * np.abs(np.cumsum(rng.normal(0.0, 0.05, size=n))) / np.sqrt(
        np.arange(1, n + 1)
    )
    vix = np.empty(n)
    vix[0] = 18.0
    for t in range(1, n):
        vix[t] = 18.0 + 0.9 * (vix[t - 1] - 18.0) + rng.normal(0.0, 1.0)
    return {
        "us3m": pd.Series(us3m, index=calendar),
        "hsi": pd.Series(hsi, index=calendar),
        "ads": pd.Series(ads, index=calendar),
        "epu": pd.Series(epu, index=calendar),
        "vix": pd.Series(np.maximum(vix, 9.0), index=calendar),
    }


def _impostor_regime(rng: np.random.Generator) -> HarRegime:
    level = SHARED_CALM.mean_level * np.exp(rng.uniform(np.log(12.0), np.log(40.0)))
    betas = rng.dirichlet([1.0, 1.0, 1.0]) * rng.uniform(0.2, 0.6)
    return HarRegime(
        beta_d=float(betas[0]),
        beta_w=float(betas[1]),
        beta_m=float(betas[2]),
        mean_level=float(level),
        noise_sigma=float(rng.uniform(0.6, 0.9)),
    )


def records_from_rv(
    dates: list, rv: np.ndarray, rng: np.random.Generator, macro: dict[str, pd.Series]
) -> list[DailyRecord]:
    """Wrap a simulated RV path with synthetic price/volume/earnings columns."""
    n = len(dates)
    closes = 100.0 * np.exp(np.cumsum(rng.normal(0.0, 0.015, size=n)))
    volumes = np.exp(rng.normal(12.0, 0.3, size=n))
    first_earn = int(rng.integers(5, 63))
    earnings = [dates[i] for i in range(first_earn, n, 63)]
    return build_daily_records(dates, rv, closes, volumes, earnings, macro)


def synth_asset_records(
    dates: list,
    regime: HarRegime,
    rng: np.random.Generator,
    macro: dict[str, pd.Series],
) -> list[DailyRecord]:
    """One-regime asset: RV path plus synthetic price/volume/earnings columns."""
    return records_from_rv(dates, har_rv_series(len(dates), regime, rng), rng, macro)


def generate_panel(
    n_sources: int = 10,
    source_days: int = 650,
    impostor_days: int = 250,
    target_days: int = 160,
    n_shared: int = 4,
    seed: int = 7,
    target_calm_days: int = 60,
) -> tuple[list[DailyRecord], dict[str, list[DailyRecord]]]:
    """One target plus n_sources sources ending on a common calendar date.

    The target and the first n_shared sources follow the shared calm/burst
    process; the rest are shorter impostor histories with unrelated regimes.
    """
    if not 0 <= n_shared <= n_sources:
        raise ValueError("n_shared must lie in [0, n_sources]")
    if target_days > source_days or impostor_days > source_days:
        raise ValueError("source_days must bound target and impostor lengths")
    root = np.random.SeedSequence(seed)
    streams = root.spawn(n_sources + 3)
    calendar = pd.bdate_range(CALENDAR_START, periods=source_days)
    dates = [d.date() for d in calendar]
    macro = _macro_series(calendar, np.random.default_rng(streams[0]))

    target_proc = SwitchingProcess(SHARED_CALM, SHARED_BURST, calm_days=target_calm_days)
    shared_proc = SwitchingProcess(SHARED_CALM, SHARED_BURST)
    target_rng = np.random.default_rng(streams[1])
    target = records_from_rv(
        dates[-target_days:],
        switching_rv_series(target_days, target_proc, target_rng),
        target_rng,
        macro,
    )

    regime_rng = np.random.default_rng(streams[2])
    sources: dict[str, list[DailyRecord]] = {}
    for i in range(n_sources):
        rng = np.random.default_rng(streams[3 + i])
        if i < n_shared:
            span = dates
            rv = switching_rv_series(len(span), shared_proc, rng)
        else:
            span = dates[-impostor_days:]
            rv = har_rv_series(len(span), _impostor_regime(regime_rng), rng)
        sources[f"S{i:02d}"] = records_from_rv(span, rv, rng, macro)
    return target, sources


def write_panel(
    out_dir: str | Path,
    n_sources: int = 10,
    source_days: int = 650,
    impostor_days: int = 250,
    target_days: int = 160,
    n_shared: int = 4,
    seed: int = 7,
) -> dict[str, Path]:
    """Write the panel as daily-record CSVs; returns asset -> path."""
    out = Path(out_dir)
    (out / "data").mkdir(parents=True, exist_ok=True)
    target, sources = generate_panel(
        n_sources=n_sources,
        source_days=source_days,
        impostor_days=impostor_days,
        target_days=target_days,
        n_shared=n_shared,
        seed=seed,
    )
    paths: dict[str, Path] = {}
    paths["T00"] = out / "data" / "T00.csv"
    write_daily_records(target, paths["T00"])
    for asset_id, records in sources.items():
        paths[asset_id] = out / "data" / f"{asset_id}.csv"
        write_daily_records(records, paths[asset_id])
    return paths
