"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
status lines and timings.
"""

import hashlib
import math
import time
from pathlib import Path

import numpy as np
import pytest

from rvtransfer.dtw import brute_force_dtw, dtw_distance
from rvtransfer.evaluation import (
    ModelSpec,
    compute_losses,
    dm_test,
    model_confidence_set,
    rolling_evaluate,
    standard_period,
)
from rvtransfer.models import BoostConfig, fit_boosted, fit_har, predict_boosted
from rvtransfer.models.boosting import split_gain
from rvtransfer.models.fnn import loss_and_gradients
from rvtransfer.selection import generate_subsequences
from rvtransfer.synth import generate_panel

from conftest import make_dataset
from test_fnn import central_difference_grads, gradient_check_setup


def report(criterion: str, detail: str) -> None:
    print(f"ACCEPTANCE PASS [{criterion}]: {detail}")


def test_criterion_1_dtw_oracle_equivalence():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    checked = 0
    for _ in range(500):
        p = int(rng.integers(1, 4))
        n = int(rng.integers(1, 7))
        m = int(rng.integers(1, 7))
        t = rng.normal(size=(n, p))
        s = rng.normal(size=(m, p))
        assert n * m <= 36
        assert dtw_distance(t, s) == brute_force_dtw(t, s)
        checked += 1
    elapsed = time.perf_counter() - start
    assert checked >= 500
    assert elapsed < 5.0
    report("1 dtw-oracle", f"{checked} random pairs bitwise-equal in {elapsed:.2f}s")


def test_criterion_2_subsequence_bookkeeping():
    rng = np.random.default_rng(99)
    base = make_dataset(400, seed=0)
    start = time.perf_counter()
    for _ in range(1000):
        n = int(rng.integers(1, 401))
        m = int(rng.integers(1, 61))
        subs = generate_subsequences(base.take(slice(0, n)), m)
        e = n % m
        k = (n - e) // m if n >= m else 0
        assert len(subs) == k
        seen = set()
        for j, sub in enumerate(subs):
            assert sub.start_index == e + j * m
            assert sub.length == m
            rows = set(range(sub.start_index, sub.start_index + m))
            assert not rows & seen
            seen |= rows
        if k:
            assert min(seen) == e and max(seen) == n - 1  # head excess omitted
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0
    report("2 subsequences", f"1000 (N,m) pairs verified in {elapsed:.2f}s")


def test_criterion_3_ols_recovery():
    rng = np.random.default_rng(5)
    feats = rng.uniform(0.1, 2.0, size=(120, 3))
    coefs = np.array([0.1, 0.5, 0.3, 0.2])
    labels = coefs[0] + feats @ coefs[1:]
    model = fit_har(make_dataset(120, features=feats, labels=labels))
    err = np.abs(model.coefficients - coefs).max()
    assert err < 1e-8

    worst = 0.0
    for seed in range(5):
        rng = np.random.default_rng(100 + seed)
        f = rng.normal(size=(200, 3))
        y = np.abs(rng.normal(size=200))
        ds = make_dataset(200, features=np.abs(f), labels=y)
        m = fit_har(ds)
        design = np.column_stack([np.ones(200), ds.features])
        resid = ds.labels - design @ m.coefficients
        for j in range(4):
            col = design[:, j]
            rel = abs(col @ resid) / (np.linalg.norm(col) * max(np.linalg.norm(resid), 1e-30))
            worst = max(worst, rel)
    assert worst < 1e-6
    report("3 ols", f"coef error {err:.2e}, worst orthogonality {worst:.2e}")


def test_criterion_4_fnn_gradient_check():
    start = time.perf_counter()
    x, y, weights, biases = gradient_check_setup(seed=31, n=20, d=3)
    _, gw, gb = loss_and_gradients(weights, biases, x, y)
    num_w, num_b = central_difference_grads(weights, biases, x, y)
    worst = 0.0
    for analytic, numeric in list(zip(gw, num_w)) + list(zip(gb, num_b)):
        rel = np.abs(analytic - numeric) / np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
        worst = max(worst, float(rel.max()))
    elapsed = time.perf_counter() - start
    assert worst < 1e-4
    assert elapsed < 10.0
    report("4 fnn-gradients", f"worst relative error {worst:.2e} in {elapsed:.2f}s")


def test_criterion_5_boosting_hand_oracle():
    ds = make_dataset(4, "STD-1", features=np.ones((4, 1)), labels=np.ones(4))
    model = fit_boosted(ds, BoostConfig(n_rounds=1, subsample=1.0, base_score=0.0))
    assert model.trees[0].is_leaf
    assert model.trees[0].weight == 0.8
    pred = predict_boosted(model, np.array([1.0]))
    assert pred == 0.1 * 0.8 and abs(pred - 0.08) < 1e-15

    hand = 0.5 * (10.0 * 10.0 / 3.0 + 10.0 * 10.0 / 3.0 - 0.0 / 5.0) - 0.1
    got = split_gain(10.0, 2.0, -10.0, 2.0, 1.0, 0.1)
    assert abs(got - hand) < 1e-10
    feats = np.array([[0.0], [0.0], [1.0], [1.0]])
    two = fit_boosted(
        make_dataset(4, "STD-1", features=feats, labels=np.array([0.0, 0.0, 10.0, 10.0])),
        BoostConfig(n_rounds=1, subsample=1.0),
    )
    assert two.trees[0].feature == 0 and two.trees[0].threshold == 0.5
    report("5 boosting", f"stump weight 0.8, prediction {pred!r}, gain matches to 1e-10")


def test_criterion_6_dm_and_mcs_oracles():
    rng = np.random.default_rng(123)
    d = rng.normal(-0.5, 1.0, size=500)
    loss_b = np.abs(rng.normal(size=500)) + 2.0
    loss_a = loss_b + d
    out = dm_test(loss_a, loss_b)
    total = 0.0
    total_sq = 0.0
    for la, lb in zip(loss_a, loss_b):
        diff = float(la) - float(lb)
        total += diff
        total_sq += diff * diff
    dbar = total / 500
    gamma0 = total_sq / 500 - dbar * dbar
    stat = dbar / math.sqrt(gamma0 / 500)
    assert abs(out.statistic - stat) < 1e-12
    assert abs(out.p_value - 0.5 * math.erfc(-stat / math.sqrt(2.0))) < 1e-12

    eliminated = 0
    for seed in range(100):
        r = np.random.default_rng(5000 + seed)
        good_a = np.abs(r.normal(size=100))
        good_b = np.abs(r.normal(size=100))
        dominated = np.abs(r.normal(size=100)) + 2.5
        members = model_confidence_set(
            np.column_stack([good_a, dominated, good_b]), alpha=0.05, n_boot=1000, seed=seed
        )
        if 1 not in members:
            eliminated += 1
    assert eliminated >= 95
    report("6 dm-mcs", f"DM matches oracle to 1e-12; MCS eliminated dominated in {eliminated}/100")


@pytest.fixture(scope="module")
def audit_panel():
    return generate_panel(n_sources=6, source_days=400, target_days=160, n_shared=2, seed=17)


def test_criterion_7_no_lookahead_audit(audit_panel):
    target, sources = audit_panel
    specs = [
        ModelSpec(family="har", mode="TO"),
        ModelSpec(family="har", mode="NP"),
        ModelSpec(family="har", mode="MTL", epsilon=50.0),
        ModelSpec(family="xgb", mode="MTL", epsilon=50.0),
    ]
    scanned = 0
    for label in ("50", "1", "5", "22"):
        period = standard_period(label)
        run_specs = specs if label == "50" else [
            ModelSpec(family="har", mode="MTL", epsilon=50.0, suffix="-1"),
            ModelSpec(family="har", mode="NP", suffix="-1"),
        ]
        run = rolling_evaluate("T", target, sources, run_specs, period, root_seed=9)
        for entry in run.fit_log:
            if entry["status"] != "ok" or not entry["max_label_date"]:
                continue
            assert entry["max_train_date"] <= entry["origin_date"], entry
            assert entry["max_label_date"] <= entry["origin_date"], entry
            scanned += 1
    assert scanned > 0
    report("7 no-lookahead", f"{scanned} fits scanned, zero rows dated after origin")


def test_criterion_8_directional_synthetic_reproduction():
    specs = [
        ModelSpec(family="har", mode="TO"),
        ModelSpec(family="har", mode="NP"),
        ModelSpec(family="har", mode="MTL", epsilon=50.0),
    ]
    period = standard_period("50")
    start = time.perf_counter()
    wins = 0
    for seed in range(10):
        target, sources = generate_panel(seed=seed)
        run = rolling_evaluate("T", target, sources, specs, period, root_seed=seed)
        mse = {}
        for mid in ("TO HAR-STD", "NP HAR-STD", "MTL-50 HAR-STD"):
            mse[mid] = compute_losses([r for r in run.records if r.model_id == mid])[0]
        if mse["MTL-50 HAR-STD"] < mse["TO HAR-STD"] and mse["MTL-50 HAR-STD"] < mse["NP HAR-STD"]:
            wins += 1
    elapsed = time.perf_counter() - start
    assert wins >= 8
    assert elapsed < 300.0
    report("8 directional", f"MTL-50 beat TO and NP in {wins}/10 seeds, {elapsed:.1f}s")


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_criterion_9_end_to_end_determinism(tmp_path):
    from rvtransfer.cli import main

    assert main([
        "synth", "--out", str(tmp_path), "--assets", "6", "--days", "400",
        "--target-days", "160", "--shared", "2", "--impostor-days", "250", "--seed", "3",
    ]) == 0
    config = tmp_path / "config.toml"
    text = config.read_text()
    text = text.replace('periods = ["50"]', 'periods = ["det"]')
    text = text.replace('families = ["har"]', 'families = ["har", "fnn", "xgb"]')
    config.write_text(
        text + '\n[[custom_periods]]\nlabel = "det"\ntrain_end = 50\neval_len = 5\nreestimate_every = 5\n'
    )
    names = ["forecasts.csv", "losses.csv", "relative_nf.csv", "pairwise.csv",
             "mcs.csv", "selection_audit.csv", "fit_log.csv"]
    digests = []
    for out in ("r1", "r2"):
        assert main(["forecast", "--config", str(config), "--out", str(tmp_path / out)]) == 0
        run_digests = {n: _digest(tmp_path / out / n) for n in names}
        for snap in sorted((tmp_path / out / "snapshots").glob("*.json")):
            run_digests[f"snap:{snap.name}"] = _digest(snap)
        digests.append(run_digests)
    assert digests[0] == digests[1]
    report("9 determinism", f"{len(digests[0])} report/snapshot files byte-identical")


def test_criterion_10_scarcity_protocol(audit_panel):
    target, sources = audit_panel
    expected = {"1": 4, "5": 17, "22": 28}
    suffix = {"1": "-1", "5": "-5", "22": ""}
    for label, count in expected.items():
        period = standard_period(label)
        assert period.reestimate_every == 1
        assert period.eval_len == count
        spec = ModelSpec(family="har", mode="MTL", epsilon=50.0, suffix=suffix[label])
        run = rolling_evaluate("T", target, sources, [spec], period, root_seed=4)
        fits = [f for f in run.fit_log if f["status"] == "ok"]
        assert len(run.records) == count, label
        assert len(fits) == count, label
    report("10 scarcity", "record and fit counts 4/17/28 with daily re-estimation")
