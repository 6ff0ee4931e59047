"""Experiment configuration: TOML loading and validation.

A config names every input file, the approaches/models/periods to run, and an
explicit root seed; paths are resolved relative to the config file so a config
directory is a portable experiment description.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

try:  # 3.11+ stdlib, tomli backport on 3.10
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigError
from .evaluation import SCARCITY_PERIODS, STANDARD_PERIOD_LABELS, STRATEGIES, SamplePeriod, standard_period

VALID_MODES = ("TO", "NP", "MTL")
VALID_FAMILIES = ("har", "fnn", "xgb")
VALID_PREDICTOR_SETS = ("STD", "EXT")


@dataclass(frozen=True)
class AssetSpec:
    asset_id: str
    daily_csv: Path
    listing_date: date | None = None
    intraday_csv: Path | None = None


@dataclass
class ExperimentConfig:
    seed: int
    output_dir: Path
    targets: list[AssetSpec]
    sources: list[AssetSpec]
    modes: list[str]
    epsilons: list[float]
    families: list[str]
    predictor_sets: list[str]
    periods: list[SamplePeriod]
    strategies: list[str] = field(default_factory=list)
    include_nf: bool = True
    m: int = 22
    threads: int = 1
    mcs_bootstrap: int = 5000
    holidays: list[date] = field(default_factory=list)
    timezone: str = "America/New_York"
    earnings_csv: Path | None = None
    macro_csvs: dict[str, Path] = field(default_factory=dict)
    config_path: Path | None = None


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"{where}: missing required key {key!r}")
    return table[key]


def _as_path(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def _parse_period(entry, custom: dict[str, SamplePeriod]) -> SamplePeriod:
    label = str(entry)
    if label in custom:
        return custom[label]
    if label in STANDARD_PERIOD_LABELS or label in SCARCITY_PERIODS:
        return standard_period(label)
    raise ConfigError(
        f"unknown period {label!r}; expected one of "
        f"{STANDARD_PERIOD_LABELS + tuple(SCARCITY_PERIODS)} or a [[custom_periods]] label"
    )


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate a TOML experiment config.

    Syntax errors surface tomllib's line/column diagnostics; semantic errors
    name the offending key and file.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: TOML parse error: {exc}") from exc

    base = path.parent
    if "seed" not in raw:
        raise ConfigError(f"{path}: 'seed' must be explicit (no wall-clock entropy)")
    seed = int(raw["seed"])
    output_dir = _as_path(base, str(raw.get("output_dir", "out")))

    ingest = raw.get("ingest", {})
    holidays = [date.fromisoformat(str(d)) for d in ingest.get("holidays", [])]
    tz = str(ingest.get("timezone", "America/New_York"))
    earnings = _as_path(base, ingest["earnings_csv"]) if "earnings_csv" in ingest else None
    macro = {name: _as_path(base, p) for name, p in ingest.get("macro", {}).items()}
    intraday = {name: _as_path(base, p) for name, p in ingest.get("intraday", {}).items()}

    def parse_assets(key: str) -> list[AssetSpec]:
        specs = []
        for entry in raw.get(key, []):
            asset_id = str(_require(entry, "id", f"{path}:[[{key}]]"))
            daily = _as_path(base, str(_require(entry, "daily_csv", f"{path}:[[{key}]] {asset_id}")))
            listing = entry.get("listing_date")
            specs.append(
                AssetSpec(
                    asset_id=asset_id,
                    daily_csv=daily,
                    listing_date=date.fromisoformat(str(listing)) if listing else None,
                    intraday_csv=intraday.get(asset_id),
                )
            )
        if not specs:
            raise ConfigError(f"{path}: at least one [[{key}]] entry required")
        ids = [s.asset_id for s in specs]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"{path}: duplicate ids in [[{key}]]")
        return specs

    targets = parse_assets("targets")
    sources = parse_assets("sources")

    run = raw.get("run", {})
    modes = [str(m) for m in run.get("modes", ["TO", "NP", "MTL"])]
    for m in modes:
        if m not in VALID_MODES:
            raise ConfigError(f"{path}: run.modes contains unknown mode {m!r}")
    families = [str(f) for f in run.get("families", ["har"])]
    for f in families:
        if f not in VALID_FAMILIES:
            raise ConfigError(f"{path}: run.families contains unknown family {f!r}")
    predictor_sets = [str(q) for q in run.get("predictor_sets", ["STD"])]
    for q in predictor_sets:
        if q not in VALID_PREDICTOR_SETS:
            raise ConfigError(f"{path}: run.predictor_sets contains unknown set {q!r}")
    epsilons = [float(e) for e in run.get("epsilons", [25.0, 50.0, 75.0])]
    for e in epsilons:
        if not 0.0 < e < 100.0:
            raise ConfigError(f"{path}: epsilon {e} outside (0, 100)")
    strategies = [str(s) for s in run.get("strategies", [])]
    for s in strategies:
        if s not in STRATEGIES:
            raise ConfigError(f"{path}: unknown transition strategy {s!r}")

    custom: dict[str, SamplePeriod] = {}
    for entry in raw.get("custom_periods", []):
        label = str(_require(entry, "label", f"{path}:[[custom_periods]]"))
        custom[label] = SamplePeriod(
            label=label,
            train_end=int(_require(entry, "train_end", f"{path}:{label}")),
            eval_len=int(_require(entry, "eval_len", f"{path}:{label}")),
            reestimate_every=int(_require(entry, "reestimate_every", f"{path}:{label}")),
        )
    periods = [_parse_period(p, custom) for p in run.get("periods", ["50"])]

    cfg = ExperimentConfig(
        seed=seed,
        output_dir=output_dir,
        targets=targets,
        sources=sources,
        modes=modes,
        epsilons=epsilons,
        families=families,
        predictor_sets=predictor_sets,
        periods=periods,
        strategies=strategies,
        include_nf=bool(run.get("include_nf", True)),
        m=int(raw.get("m", 22)),
        threads=int(raw.get("threads", 1)),
        mcs_bootstrap=int(run.get("mcs_bootstrap", 5000)),
        holidays=holidays,
        timezone=tz,
        earnings_csv=earnings,
        macro_csvs=macro,
        config_path=path,
    )
    _validate_paths(cfg)
    return cfg


def _validate_paths(cfg: ExperimentConfig) -> None:
    """Every referenced input must exist; daily CSVs may be ingest outputs."""
    missing: list[str] = []
    for spec in cfg.targets + cfg.sources:
        if spec.intraday_csv is not None:
            if not spec.intraday_csv.exists():
                missing.append(str(spec.intraday_csv))
        elif not spec.daily_csv.exists():
            missing.append(str(spec.daily_csv))
    if cfg.earnings_csv is not None and not cfg.earnings_csv.exists():
        missing.append(str(cfg.earnings_csv))
    for p in cfg.macro_csvs.values():
        if not p.exists():
            missing.append(str(p))
    if missing:
        raise ConfigError("missing input files: " + ", ".join(sorted(missing)))
