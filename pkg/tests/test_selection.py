import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rvtransfer.dtw import brute_force_dtw
from rvtransfer.errors import AlignmentError, ConfigError, ValidationError
from rvtransfer.selection import (
    SelectionConfig,
    build_training_set,
    build_universe,
    generate_subsequences,
    rank_by_similarity,
    select_by_percentile,
    align_to_origin,
)

from conftest import make_dataset


# ---------------------------------------------------------------------------
# subsequence generation
# ---------------------------------------------------------------------------


def test_generate_counts_and_starts():
    ds = make_dataset(100)
    subs = generate_subsequences(ds, 22)
    assert len(subs) == 4  # e = 12, K = 4
    assert [s.start_index for s in subs] == [12, 34, 56, 78]
    assert all(s.length == 22 for s in subs)


def test_generate_exact_fit():
    subs = generate_subsequences(make_dataset(22), 22)
    assert len(subs) == 1 and subs[0].start_index == 0


def test_generate_insufficient_length():
    assert generate_subsequences(make_dataset(21), 22) == []


def test_generate_head_excess_omitted_and_disjoint():
    ds = make_dataset(100)
    subs = generate_subsequences(ds, 22)
    covered = set()
    for s in subs:
        rows = set(range(s.start_index, s.start_index + 22))
        assert not rows & covered
        covered |= rows
    assert covered == set(range(12, 100))  # head rows 0..11 never included


def test_generate_rows_match_source_slices():
    ds = make_dataset(50, seed=3)
    for s in generate_subsequences(ds, 13):
        sl = slice(s.start_index, s.start_index + 13)
        assert np.array_equal(s.rows.features, ds.features[sl])
        assert np.array_equal(s.rows.labels, ds.labels[sl])
        assert np.array_equal(s.dtw_features, ds.features[sl][:, :3])


@given(n=st.integers(1, 400), m=st.integers(1, 60))
@settings(max_examples=200, deadline=None)
def test_generate_bookkeeping_property(n, m):
    subs = generate_subsequences(make_dataset(n, seed=1), m)
    e = n % m
    assert len(subs) == (n - e) // m if n >= m else len(subs) == 0
    if subs:
        assert subs[0].start_index == e
        starts = [s.start_index for s in subs]
        assert starts == sorted(starts)
        assert all(b - a == m for a, b in zip(starts, starts[1:]))
        assert starts[-1] + m == n


# ---------------------------------------------------------------------------
# ranking
# ---------------------------------------------------------------------------


def test_rank_exact_copy_first():
    ds = make_dataset(66, seed=5)
    universe = build_universe({"SRC": ds}, 22)
    window = universe.items[1].dtw_features.copy()
    ranked = rank_by_similarity(window, universe)
    top, dist = ranked[0]
    assert dist == 0.0
    assert top.start_index == universe.items[1].start_index


def test_rank_matches_brute_force_on_toys():
    a = make_dataset(3, "STD-1", asset_id="A", features=[[1.0], [2.0], [3.0]])
    b = make_dataset(3, "STD-1", asset_id="B", features=[[4.0], [5.0], [6.0]])
    universe = build_universe({"A": a, "B": b}, 3)
    window = np.array([[1.0], [2.0], [3.0]])
    ranked = rank_by_similarity(window, universe)
    dists = {s.asset_id: d for s, d in ranked}
    assert dists["A"] == brute_force_dtw(window, a.features[:, :1])
    assert dists["B"] == brute_force_dtw(window, b.features[:, :1])
    assert [s.asset_id for s, _ in ranked] == ["A", "B"]


def test_rank_tie_breaks_lexicographic():
    feats = [[1.0], [1.0], [1.0], [1.0]]
    a = make_dataset(4, "STD-1", asset_id="B2", features=feats)
    b = make_dataset(4, "STD-1", asset_id="A1", features=feats)
    universe = build_universe({"B2": a, "A1": b}, 2)
    ranked = rank_by_similarity(np.array([[1.0], [1.0]]), universe)
    assert [(s.asset_id, s.start_index) for s, _ in ranked] == [
        ("A1", 0), ("A1", 2), ("B2", 0), ("B2", 2)
    ]


def test_rank_dimension_mismatch():
    ds = make_dataset(44)
    universe = build_universe({"SRC": ds}, 22)
    with pytest.raises(ValidationError):
        rank_by_similarity(np.ones((22, 2)), universe)


# ---------------------------------------------------------------------------
# percentile selection
# ---------------------------------------------------------------------------


def ranked_with_distances(dists):
    ds = make_dataset(len(dists) * 2, "STD-1", seed=9)
    subs = generate_subsequences(ds, 2)
    return [(s, d) for s, d in zip(subs, dists)]


def test_percentile_100_distinct_eps25():
    ranked = ranked_with_distances(sorted(float(i) for i in range(100)))
    assert len(select_by_percentile(ranked, 25)) == 25


def test_percentile_200_distinct_eps75():
    ranked = ranked_with_distances(sorted(float(i) for i in range(200)))
    assert len(select_by_percentile(ranked, 75)) == 150


def test_percentile_equal_distances_floor():
    ranked = ranked_with_distances([2.0, 2.0, 2.0, 2.0])
    picked = select_by_percentile(ranked, 50)
    assert len(picked) == 1
    assert picked[0][0].start_index == ranked[0][0].start_index


def test_percentile_monotone_in_epsilon():
    rng = np.random.default_rng(2)
    ranked = ranked_with_distances(sorted(rng.uniform(0, 1, size=37)))
    previous: set = set()
    for eps in (10, 25, 50, 75, 90, 99):
        chosen = {(s.asset_id, s.start_index) for s, _ in select_by_percentile(ranked, eps)}
        assert previous <= chosen
        previous = chosen


def test_selection_config_validation():
    with pytest.raises(ConfigError):
        SelectionConfig(m=0)
    with pytest.raises(ConfigError):
        SelectionConfig(epsilon=100.0, mode="MTL")
    with pytest.raises(ConfigError):
        SelectionConfig(mode="POOL")


# ---------------------------------------------------------------------------
# training-set construction
# ---------------------------------------------------------------------------


def aligned_origin(*datasets):
    return max(ds.label_dates.max() for ds in datasets)


def test_build_to_target_only():
    target = make_dataset(28, asset_id="T")
    sources = {"S1": make_dataset(100, asset_id="S1")}
    origin = aligned_origin(target, *sources.values())
    out, audit = build_training_set(
        "TO", target, sources, SelectionConfig(mode="TO"), origin
    )
    assert out.n_rows == 28
    assert audit == []


def test_build_np_concatenation():
    target = make_dataset(28, asset_id="T")
    sources = {f"S{i}": make_dataset(100, asset_id=f"S{i}", seed=i) for i in range(3)}
    origin = aligned_origin(target, *sources.values())
    out, _ = build_training_set("NP", target, sources, SelectionConfig(mode="NP"), origin)
    assert out.n_rows == 328
    assert set(out.asset_tags) == {"T", "S0", "S1", "S2"}


def test_build_mtl_counts_and_provenance():
    rng = np.random.default_rng(4)
    target = make_dataset(28, asset_id="T", seed=8)
    window = rng.uniform(0, 1e-3, size=(22, 3))
    # one source whose middle subsequence is an exact window copy
    feats = rng.uniform(5.0, 6.0, size=(66, 3))
    feats[22:44] = window
    near = window + rng.normal(0, 1e-6, size=window.shape)
    feats2 = rng.uniform(5.0, 6.0, size=(44, 3))
    feats2[0:22] = near
    sources = {
        "S1": make_dataset(66, asset_id="S1", features=feats),
        "S2": make_dataset(44, asset_id="S2", features=feats2),
    }
    origin = aligned_origin(target, *sources.values())
    out, audit = build_training_set(
        "MTL", target, sources, SelectionConfig(m=22, epsilon=50.0, mode="MTL"),
        origin, target_window=window,
    )
    # 5 subsequences total; eps=50 -> threshold is the 3rd-smallest distance,
    # leaving the two regime-matching windows strictly below it
    assert out.n_rows == 28 + 2 * 22
    assert audit and sum(row["selected"] for row in audit) == 2
    assert set(out.asset_tags) == {"T", "S1", "S2"}


def test_build_mtl_deterministic():
    target = make_dataset(28, asset_id="T")
    sources = {f"S{i}": make_dataset(90, asset_id=f"S{i}", seed=10 + i) for i in range(4)}
    origin = aligned_origin(target, *sources.values())
    window = target.features[-22:, :3]
    cfg = SelectionConfig(m=22, epsilon=50.0, mode="MTL")
    a, audit_a = build_training_set("MTL", target, sources, cfg, origin, target_window=window)
    b, audit_b = build_training_set("MTL", target, sources, cfg, origin, target_window=window)
    assert np.array_equal(a.features, b.features)
    assert audit_a == audit_b


def test_build_rejects_future_rows():
    target = make_dataset(28, asset_id="T")
    sources = {"S1": make_dataset(500, asset_id="S1")}
    origin = target.label_dates.max()  # source runs far past the target
    with pytest.raises(AlignmentError):
        build_training_set("NP", target, sources, SelectionConfig(mode="NP"), origin)


def test_align_to_origin_trims_label_dates():
    ds = make_dataset(50)
    origin = ds.dates[30]
    trimmed = align_to_origin(ds, origin)
    assert trimmed.n_rows == 30  # row 30's label day is origin+1
    assert (trimmed.label_dates <= origin).all()


def test_mtl_never_includes_head_excess():
    target = make_dataset(28, asset_id="T")
    src = make_dataset(100, asset_id="S1", seed=6)
    origin = aligned_origin(target, src)
    window = target.features[-22:, :3]
    out, _ = build_training_set(
        "MTL", target, {"S1": src}, SelectionConfig(m=22, epsilon=99.0, mode="MTL"),
        origin, target_window=window,
    )
    head_dates = set(str(d) for d in src.dates[:12])  # e = 12 excess head rows
    assert not head_dates & {str(d) for d in out.dates[out.asset_tags == "S1"]}
    # near eps -> 100 all but at most one subsequence of the universe pools in
    assert out.n_rows >= 28 + 3 * 22


def test_mtl_window_shrinks_below_m():
    target = make_dataset(6, asset_id="T")
    src = make_dataset(40, asset_id="S1", seed=2)
    origin = aligned_origin(target, src)
    window = target.features[:, :3]  # only 6 feature rows exist
    out, audit = build_training_set(
        "MTL", target, {"S1": src}, SelectionConfig(m=22, epsilon=50.0, mode="MTL"),
        origin, target_window=window,
    )
    # subsequence length matches the 6-row window: source rows pool in blocks of 6
    src_rows = int((out.asset_tags == "S1").sum())
    assert src_rows > 0 and src_rows % 6 == 0
