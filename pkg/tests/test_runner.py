import csv
import hashlib
import math
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from rvtransfer.cli import main
from rvtransfer.config import load_config
from rvtransfer.data import read_daily_records
from rvtransfer.evaluation import ModelSpec, rolling_evaluate, standard_period
from rvtransfer.runner import build_specs, forecast
from rvtransfer.synth import generate_panel

from test_cli import make_fixture


def test_build_specs_composition(tmp_path):
    config = make_fixture(tmp_path, families='["har", "xgb"]')
    cfg = load_config(config)
    specs = build_specs(cfg, cfg.periods[0])
    # NF + (TO, NP) x 2 families + MTL x 2 families x 3 epsilons
    assert len(specs) == 1 + 2 * 2 + 2 * 3
    ids = [s.model_id for s in specs]
    assert len(set(ids)) == len(ids)
    assert "NF" in ids and "MTL-75 XGB-STD" in ids


def test_strategy_specs_in_scarcity_periods(tmp_path):
    config = make_fixture(
        tmp_path,
        extra='\n',
    )
    cfg = load_config(config)
    cfg.strategies = ["1-1-1", "1-5-22"]
    period = standard_period("5")
    specs = build_specs(cfg, period)
    strategy_ids = [s.model_id for s in specs if s.strategy]
    # strategies multiply the (mode x family x set) grid
    assert len(strategy_ids) == 2 * (2 + 3)
    assert any(s.startswith("Str.1-5-22") for s in strategy_ids)


@pytest.fixture(scope="module")
def strategy_panel():
    return generate_panel(n_sources=5, source_days=360, target_days=160, n_shared=2, seed=21)


def test_strategy_run_covers_49_forecasts(strategy_panel):
    target, sources = strategy_panel
    spec = ModelSpec(family="har", mode="MTL", epsilon=50.0, strategy="1-5-22")
    total_records = 0
    total_fits = 0
    for label in ("1", "5", "22"):
        run = rolling_evaluate("T", target, sources, [spec], standard_period(label), root_seed=0)
        total_records += len(run.records)
        total_fits += sum(1 for f in run.fit_log if f["status"] == "ok")
    assert total_records == 49
    assert total_fits == 49


def test_transitions_report(tmp_path):
    config = make_fixture(tmp_path)
    text = (tmp_path / "config.toml").read_text()
    text = text.replace('periods = ["smoke"]', 'periods = ["1", "5", "22"]')
    text = text.replace('modes = ["TO", "NP", "MTL"]', 'modes = ["NP", "MTL"]')
    text = text.replace(
        'include_nf = true',
        'include_nf = true\nstrategies = ["1-1-1", "1-5-5", "1-5-22"]',
    )
    (tmp_path / "config.toml").write_text(text)
    assert main(["forecast", "--config", str(tmp_path / "config.toml")]) == 0
    path = tmp_path / "out" / "transitions.csv"
    assert path.exists()
    rows = list(csv.DictReader(open(path)))
    diag = [r for r in rows if r["row_strategy"] == r["col_strategy"]]
    assert diag and all(float(r["avg_ratio"]) == 1.0 for r in diag)
    strategies = {r["row_strategy"] for r in rows}
    assert strategies == {"1-1-1", "1-5-5", "1-5-22"}


def test_full_period_aggregation(tmp_path):
    # the five standard walks need 551 target days
    main(["synth", "--out", str(tmp_path), "--assets", "6", "--days", "700",
          "--target-days", "560", "--shared", "2", "--impostor-days", "250", "--seed", "5"])
    config = tmp_path / "config.toml"
    text = config.read_text()
    text = text.replace('periods = ["50"]', 'periods = ["50", "150", "250", "350", "450"]')
    text = text.replace('modes = ["TO", "NP", "MTL"]', 'modes = ["TO"]')
    text = text.replace('epsilons = [25.0, 50.0, 75.0]', 'epsilons = [50.0]')
    config.write_text(text)
    assert main(["forecast", "--config", str(config)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "out" / "losses.csv")))
    star = [r for r in rows if r["period"] == "s_star" and r["model"] == "TO HAR-STD"]
    assert star and star[0]["n"] == "500"
    # s_star loss is the record-weighted pooling of the five sub-periods
    subs = [r for r in rows if r["period"] in ("50", "150", "250", "350", "450")
            and r["model"] == "TO HAR-STD"]
    pooled = sum(float(r["mse"]) * int(r["n"]) for r in subs) / 500
    assert float(star[0]["mse"]) == pytest.approx(pooled, rel=1e-12)


def test_listing_date_trims_target_history(tmp_path):
    from rvtransfer.runner import load_records

    config = make_fixture(tmp_path)
    cfg = load_config(config)
    full, _ = load_records(cfg)
    cutoff = full["T00"][10].date
    text = config.read_text().replace(
        'id = "T00"', f'id = "T00"\nlisting_date = "{cutoff.isoformat()}"'
    )
    config.write_text(text)
    trimmed, _ = load_records(load_config(config))
    assert len(trimmed["T00"]) == len(full["T00"]) - 10
    assert trimmed["T00"][0].date == cutoff


def test_relative_metrics_recomputable_from_losses(tmp_path):
    config = make_fixture(tmp_path, families='["har", "xgb"]')
    assert main(["forecast", "--config", str(config)]) == 0
    losses = list(csv.DictReader(open(tmp_path / "out" / "losses.csv")))
    rel = list(csv.DictReader(open(tmp_path / "out" / "relative_nf.csv")))
    by_key = {(r["period"], r["asset"], r["model"]): r for r in losses}
    assets = sorted({r["asset"] for r in losses})
    for row in rel:
        ratios = [
            float(by_key[(row["period"], a, row["model"])]["mse"])
            / float(by_key[(row["period"], a, "NF")]["mse"])
            for a in assets
            if (row["period"], a, row["model"]) in by_key
        ]
        assert float(row["rel_mse"]) == pytest.approx(np.mean(ratios), rel=1e-12)


def test_threads_do_not_change_outputs(tmp_path):
    config = make_fixture(tmp_path)
    outs = {}
    for threads, name in ((1, "t1"), (3, "t3")):
        rc = main([
            "forecast", "--config", str(config), "--out", str(tmp_path / name),
            "--threads", str(threads),
        ])
        assert rc == 0
        outs[name] = {
            p.name: hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted((tmp_path / name).glob("*.csv"))
        }
    assert outs["t1"] == outs["t3"]


# ---------------------------------------------------------------------------
# intraday ingestion end-to-end
# ---------------------------------------------------------------------------


def write_intraday(path: Path, days, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for day in days:
        stamps = pd.date_range(f"{day} 09:30", f"{day} 16:00", freq="1min", tz="America/New_York")
        prices = 100.0 * np.exp(np.cumsum(rng.normal(0, 2e-4, size=len(stamps))))
        for ts, px in zip(stamps, prices):
            rows.append((ts.isoformat(), px, px, px, px, 100))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "open", "high", "low", "close", "volume"])
        writer.writerows(rows)


def test_ingest_end_to_end(tmp_path):
    days = [d.date() for d in pd.bdate_range("2023-05-01", periods=4)]
    raw = tmp_path / "raw"
    raw.mkdir()
    write_intraday(raw / "T.csv", days, seed=1)
    write_intraday(raw / "S.csv", days, seed=2)
    with open(raw / "earnings.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "ticker"])
        w.writerow([days[2].isoformat(), "T"])
    for name, level in (("us3m", 1.5), ("hsi", 20000.0), ("ads", 0.0), ("epu", 100.0), ("vix", 18.0)):
        with open(raw / f"{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["date", "value"])
            for i, d in enumerate(days):
                w.writerow([d.isoformat(), level + 0.01 * i])

    config = tmp_path / "config.toml"
    config.write_text(
        f"""
seed = 1
output_dir = "out"

[[targets]]
id = "T"
daily_csv = "cache/T.csv"

[[sources]]
id = "S"
daily_csv = "cache/S.csv"

[ingest]
earnings_csv = "raw/earnings.csv"
[ingest.intraday]
T = "raw/T.csv"
S = "raw/S.csv"
[ingest.macro]
us3m = "raw/us3m.csv"
hsi = "raw/hsi.csv"
ads = "raw/ads.csv"
epu = "raw/epu.csv"
vix = "raw/vix.csv"
"""
    )
    assert main(["ingest", "--config", str(config)]) == 0
    records = read_daily_records(tmp_path / "cache" / "T.csv")
    assert len(records) == 4
    assert all(r.rv_d > 0 for r in records)
    assert records[1].ea == 1.0  # announcement scheduled for the next day
    assert records[2].ea == 0.0
    assert math.isfinite(records[1].dv) and math.isfinite(records[1].vix)
    assert records[0].label == records[1].rv_d
    # rv matches an independent recomputation from 5-minute marks
    import rvtransfer.data as data

    bars = data.read_intraday_csv(raw / "T.csv")
    bars = data.filter_sessions(bars)
    first = bars[bars["session_date"] == days[0]]
    closes = first["close"].to_numpy()[::5]
    oracle = math.fsum(
        (math.log(b) - math.log(a)) ** 2 for a, b in zip(closes, closes[1:])
    )
    assert records[0].rv_d == pytest.approx(oracle, abs=1e-15)
