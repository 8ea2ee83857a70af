"""Diversifier tests: bounds pipeline, synthesis, redundancy, validation."""

import json
import math

import numpy as np
import pytest

from biasdiv.data import SYNTHETIC, Dataset, make_toy_blobs, segment_by_class
from biasdiv.diversify import (
    ClassBounds,
    DiversifyConfig,
    ValidationReport,
    bounds_to_json,
    diversify,
    final_bounds,
    global_extremum,
    minimize_redundancy,
    sample_synthetic,
    save_diversify_report,
    suggest_threshold,
    synth_counts,
    tighten_overlaps,
    top_k_features,
    validate_synthetic,
)
from biasdiv.errors import GenerationError
from biasdiv.numerics import Interval, IntervalSet, interiors_disjoint, substream
from biasdiv.probe import ProbeReport


def fake_probe(mu, delta_x_max=0.0):
    mu = np.asarray(mu, dtype=float)
    L = len(mu)
    return ProbeReport(
        delta_x_max=delta_x_max,
        R=mu / 100.0,
        mu=mu,
        b_r=0.0,
        counterexamples=[],
        per_level_misclassification={},
        probed_per_class=np.full(L, 10),
        variants_per_class=np.full(L, 100),
    )


def single_interval_bounds(per_class):
    """Build ClassBounds from [[(lo, hi) per feature] per class]."""
    return ClassBounds(tuple(
        tuple(IntervalSet.single(lo, hi) for lo, hi in sets)
        for sets in per_class
    ))


# -- global_extremum -----------------------------------------------------------

def test_global_extremum_relaxes_extrema():
    ds = Dataset(np.array([[2.0], [5.0], [8.0]]), np.array([0, 0, 0]),
                 ("a",), ("f0",))
    part = segment_by_class(ds)
    bounds = global_extremum(part, 1.0, scales=np.array([1.0]))
    assert bounds.get(0, 0) == IntervalSet.single(1.0, 9.0)


def test_global_extremum_zero_delta_exact():
    ds = make_toy_blobs(per_class=10, centers=[[0.0, 5.0], [9.0, -2.0]],
                        spread=1.0, seed=1)
    part = segment_by_class(ds)
    bounds = global_extremum(part, 0.0, scales=np.ones(2))
    for c in range(2):
        for f in range(2):
            col = part.parts[c].features[:, f]
            assert bounds.get(c, f) == IntervalSet.single(col.min(), col.max())


def test_global_extremum_single_row_point_interval():
    ds = Dataset(np.array([[3.5, -1.0]]), np.array([0]), ("a",), ("f0", "f1"))
    bounds = global_extremum(segment_by_class(ds), 0.0, scales=np.ones(2))
    assert bounds.get(0, 0) == IntervalSet.single(3.5, 3.5)


def test_global_extremum_scales_per_feature():
    ds = Dataset(np.array([[2.0, 2.0], [8.0, 8.0]]), np.array([0, 0]),
                 ("a",), ("f0", "f1"))
    bounds = global_extremum(segment_by_class(ds), 0.1, scales=np.array([10.0, 50.0]))
    assert bounds.get(0, 0) == IntervalSet.single(1.0, 9.0)     # delta 1
    assert bounds.get(0, 1) == IntervalSet.single(-3.0, 13.0)   # delta 5


def test_global_extremum_monotone_in_delta():
    ds = make_toy_blobs(per_class=6, centers=[[0.0], [4.0], [9.0]], spread=1.0, seed=2)
    part = segment_by_class(ds)
    small = global_extremum(part, 0.05, scales=np.array([2.0]))
    large = global_extremum(part, 0.2, scales=np.array([2.0]))
    for c in range(3):
        assert small.get(c, 0).is_subset_of(large.get(c, 0))


# -- tighten_overlaps ------------------------------------------------------------

def test_tighten_partial_overlap():
    bounds = single_interval_bounds([[(2.0, 8.0)], [(7.0, 10.0)]])
    out = tighten_overlaps(bounds)
    assert out.get(0, 0) == IntervalSet.single(2.0, 7.0)
    assert out.get(1, 0) == IntervalSet.single(8.0, 10.0)


def test_tighten_complete_overlap_splits_outer():
    bounds = single_interval_bounds([[(0.0, 10.0)], [(4.0, 6.0)]])
    out = tighten_overlaps(bounds)
    assert out.get(0, 0) == IntervalSet((Interval(0.0, 4.0), Interval(6.0, 10.0)))
    assert out.get(1, 0) == IntervalSet.single(4.0, 6.0)


def test_tighten_disjoint_unchanged():
    bounds = single_interval_bounds([[(0.0, 2.0)], [(5.0, 9.0)]])
    out = tighten_overlaps(bounds)
    assert out.get(0, 0) == bounds.get(0, 0)
    assert out.get(1, 0) == bounds.get(1, 0)


def test_tighten_mirrored_roles():
    # the lower-starting interval plays the "i" role regardless of class order
    bounds = single_interval_bounds([[(7.0, 10.0)], [(2.0, 8.0)]])
    out = tighten_overlaps(bounds)
    assert out.get(1, 0) == IntervalSet.single(2.0, 7.0)
    assert out.get(0, 0) == IntervalSet.single(8.0, 10.0)


def test_tighten_shared_endpoints_fire_nothing():
    for a, b in [((2.0, 8.0), (2.0, 10.0)),   # equal lo
                 ((2.0, 8.0), (8.0, 10.0)),   # touching
                 ((2.0, 8.0), (2.0, 8.0)),    # identical
                 ((2.0, 8.0), (3.0, 8.0))]:   # equal hi
        bounds = single_interval_bounds([[a], [b]])
        out = tighten_overlaps(bounds)
        assert out.get(0, 0) == bounds.get(0, 0)
        assert out.get(1, 0) == bounds.get(1, 0)


def test_tighten_soundness_and_disjointness_random():
    # outputs always stay inside inputs; wherever a rule actually fired,
    # the two classes end up with disjoint interiors (pairs left untouched
    # by the strict rules, e.g. shared-endpoint layouts, carry no claim)
    rng = substream(61, "tighten")
    for _ in range(300):
        L = int(rng.integers(2, 5))
        raw = []
        for _ in range(L):
            lo = float(rng.uniform(-10, 10))
            hi = lo + float(rng.uniform(0.01, 8))
            raw.append([(lo, hi)])
        bounds = single_interval_bounds(raw)
        out = tighten_overlaps(bounds)
        for c in range(L):
            assert out.get(c, 0).is_subset_of(bounds.get(c, 0))
        for note in out.notes:
            if note.startswith("tightened classes"):
                pair = note.split("tightened classes ")[1].split(" on ")[0]
                a, b = (int(v) for v in pair.split(","))
                assert interiors_disjoint(out.get(a, 0), out.get(b, 0))


def test_tighten_two_overlapping_classes_end_disjoint():
    rng = substream(62, "pairwise")
    for _ in range(200):
        lo_a = float(rng.uniform(-5, 5))
        hi_a = lo_a + float(rng.uniform(0.05, 6))
        lo_b = float(rng.uniform(-5, 5))
        hi_b = lo_b + float(rng.uniform(0.05, 6))
        bounds = single_interval_bounds([[(lo_a, hi_a)], [(lo_b, hi_b)]])
        out = tighten_overlaps(bounds)
        assert interiors_disjoint(out.get(0, 0), out.get(1, 0))


def test_tighten_three_class_chain():
    bounds = single_interval_bounds([[(0.0, 6.0)], [(4.0, 10.0)], [(5.0, 5.5)]])
    out = tighten_overlaps(bounds)
    for a in range(3):
        assert out.get(a, 0).is_subset_of(bounds.get(a, 0))
        for b in range(a + 1, 3):
            assert interiors_disjoint(out.get(a, 0), out.get(b, 0))


# -- top_k_features ------------------------------------------------------------

def tight_loose_ds():
    rng = substream(67, "tl")
    n = 20
    tight = rng.uniform(-0.05, 0.05, size=n)      # spread ~0.1
    loose = rng.uniform(-5.0, 5.0, size=n)        # spread ~10
    feats = np.column_stack([loose, tight])
    return Dataset(feats, np.array([0, 1] * (n // 2)), ("a", "b"), ("loose", "tight"))


def test_top_k_prefers_tight_feature():
    ds = tight_loose_ds()
    part = segment_by_class(ds)
    assert top_k_features(part, k=1, c=2, seed=0) == [1]


def test_top_k_constant_feature_wins():
    feats = np.column_stack([
        substream(71, "x").uniform(-3, 3, size=12),
        np.full(12, 4.2),
    ])
    ds = Dataset(feats, np.array([0, 1] * 6), ("a", "b"), ("f0", "f1"))
    part = segment_by_class(ds)
    assert top_k_features(part, k=1, c=2, seed=3) == [1]


def test_top_k_select_all_and_bounds_check():
    ds = tight_loose_ds()
    part = segment_by_class(ds)
    assert top_k_features(part, k=2, c=2, seed=1) == [0, 1]
    with pytest.raises(ValueError):
        top_k_features(part, k=3, c=2, seed=1)
    with pytest.raises(ValueError):
        top_k_features(part, k=0, c=2, seed=1)


def test_top_k_deterministic():
    ds = make_toy_blobs(per_class=15, centers=[[0.0, 1.0, 2.0], [5.0, 1.5, -2.0]],
                        spread=1.0, seed=4)
    part = segment_by_class(ds)
    assert (top_k_features(part, 2, 2, seed=9)
            == top_k_features(part, 2, 2, seed=9))


# -- final_bounds ----------------------------------------------------------------

def test_final_bounds_dominant_cluster_window():
    ds = Dataset(np.array([[1.0], [1.1], [1.2], [9.0]]),
                 np.zeros(4, dtype=int), ("a",), ("f0",))
    part = segment_by_class(ds)
    bounds = global_extremum(part, 0.0, scales=np.ones(1))
    assert bounds.get(0, 0) == IntervalSet.single(1.0, 9.0)
    out = final_bounds(bounds, [0], part, c=2, seed=0)
    assert out.get(0, 0) == IntervalSet.single(1.0, 1.2)


def test_final_bounds_untouched_off_top():
    ds = Dataset(np.array([[1.0, 1.0], [1.1, 9.0], [1.2, 1.1], [9.0, 9.1]]),
                 np.zeros(4, dtype=int), ("a",), ("f0", "f1"))
    part = segment_by_class(ds)
    bounds = global_extremum(part, 0.0, scales=np.ones(2))
    out = final_bounds(bounds, [0], part, c=2, seed=0)
    assert out.get(0, 1) == bounds.get(0, 1)


def test_final_bounds_single_cluster_keeps_extrema():
    ds = Dataset(np.array([[1.0], [1.5], [2.0]]), np.zeros(3, dtype=int),
                 ("a",), ("f0",))
    part = segment_by_class(ds)
    bounds = global_extremum(part, 0.0, scales=np.ones(1))
    out = final_bounds(bounds, [0], part, c=1, seed=0)
    assert out.get(0, 0) == IntervalSet.single(1.0, 2.0)


def test_final_bounds_empty_intersection_reverts_with_note():
    ds = Dataset(np.array([[1.0], [1.1], [1.2], [9.0]]),
                 np.zeros(4, dtype=int), ("a",), ("f0",))
    part = segment_by_class(ds)
    shifted = single_interval_bounds([[(5.0, 6.0)]])   # disjoint from the data
    out = final_bounds(shifted, [0], part, c=2, seed=0)
    assert out.get(0, 0) == shifted.get(0, 0)
    assert any("reverted" in note for note in out.notes)


# -- synth_counts ----------------------------------------------------------------

@pytest.mark.parametrize("mu,base,expected", [
    ((10.0, 5.0), 10, [20, 10]),
    ((5.0, 5.0), 7, [7, 7]),
    ((0.0, 0.0), 5, [0, 0]),
    ((0.0, 5.0), 3, [3, 3]),          # clean class floors at the base count
    ((7.5, 5.0), 2, [3, 2]),          # 2 * 1.5 rounds half up
    ((20.0, 10.0, 5.0), 4, [16, 8, 4]),
])
def test_synth_counts(mu, base, expected):
    assert synth_counts(mu, base).tolist() == expected


def test_synth_counts_validation():
    with pytest.raises(ValueError):
        synth_counts([-1.0, 2.0], 5)
    with pytest.raises(ValueError):
        synth_counts([1.0], 0)


# -- sample_synthetic -------------------------------------------------------------

def test_sample_synthetic_point_intervals():
    sets = [IntervalSet.single(2.0, 2.0), IntervalSet.single(-1.0, -1.0)]
    rows = sample_synthetic(sets, 5, substream(0, "s"))
    assert np.array_equal(rows, np.tile([2.0, -1.0], (5, 1)))


def test_sample_synthetic_length_weighted_union():
    sets = [IntervalSet((Interval(0.0, 1.0), Interval(9.0, 10.0)))]
    rows = sample_synthetic(sets, 10_000, substream(1, "u"))
    frac_low = float(np.mean(rows[:, 0] <= 1.0))
    assert 0.45 < frac_low < 0.55


def test_sample_synthetic_containment():
    sets = [IntervalSet((Interval(0.0, 1.0), Interval(4.0, 6.0))),
            IntervalSet.single(-2.0, -1.0)]
    rows = sample_synthetic(sets, 500, substream(2, "c"))
    assert all(sets[0].contains(v) for v in rows[:, 0])
    assert all(sets[1].contains(v) for v in rows[:, 1])


def test_sample_synthetic_empty_region_error():
    with pytest.raises(GenerationError):
        sample_synthetic([IntervalSet.single(0.0, 1.0), None], 3, substream(3, "e"))


# -- minimize_redundancy -----------------------------------------------------------

def test_minimize_redundancy_halves_eight_rows():
    rng = substream(73, "m")
    rows = rng.uniform(-5, 5, size=(8, 2))
    kept = minimize_redundancy(rows, 0.5, seed=0)
    assert len(kept) == 4
    assert np.array_equal(kept, np.unique(kept))


def test_minimize_redundancy_zero_fraction_identity():
    rows = substream(74, "m0").uniform(size=(6, 2))
    assert minimize_redundancy(rows, 0.0, seed=0).tolist() == [0, 1, 2, 3, 4, 5]


def test_minimize_redundancy_separated_pairs():
    rows = np.array([[0.0, 0.0], [0.01, 0.0], [10.0, 10.0], [10.01, 10.0]])
    kept = minimize_redundancy(rows, 0.5, seed=1)
    assert len(kept) == 2
    assert {rows[i][0] < 5 for i in kept} == {True, False}


def test_minimize_redundancy_count_law():
    rng = substream(75, "law")
    for _ in range(30):
        m = int(rng.integers(1, 30))
        x = float(rng.uniform(0, 0.95))
        rows = rng.uniform(size=(m, 3))
        kept = minimize_redundancy(rows, x, seed=int(rng.integers(1000)))
        expected = max(1, int(np.floor(m * (1 - x) + 0.5)))
        assert len(kept) == expected
        assert set(kept.tolist()) <= set(range(m))


# -- validate_synthetic -------------------------------------------------------------

def test_validate_copy_passes():
    rows = substream(77, "v").normal(size=(30, 3))
    report = validate_synthetic(rows.copy(), rows, t=1.0)
    assert report.passed and report.corr_diff == pytest.approx(0.0)


def test_validate_decorrelated_fails():
    rng = substream(78, "vd")
    x = rng.normal(size=50)
    original = np.column_stack([x, 2 * x])                     # rho = 1
    synth = np.column_stack([rng.normal(size=50), rng.normal(size=50)])
    report = validate_synthetic(synth, original, t=50.0)
    assert not report.passed
    assert report.corr_diff > 50.0


def test_validate_flagged_columns_excluded():
    rng = substream(79, "vf")
    x = rng.normal(size=40)
    original = np.column_stack([x, x * 0.5, np.full(40, 3.0)])
    synth = np.column_stack([rng.normal(size=40) * 0 + original[:, 0],
                             original[:, 1],
                             rng.normal(size=40)])   # constant column replaced
    report = validate_synthetic(synth, original, t=5.0)
    # only the (0,1) pair is comparable; it is identical
    assert report.passed and report.corr_diff == pytest.approx(0.0)


def test_validate_too_few_rows_auto_fails():
    original = substream(80, "vr").normal(size=(20, 2))
    report = validate_synthetic(original[:1], original, t=99.0)
    assert not report.passed
    assert math.isinf(report.corr_diff)
    assert "need >= 2" in report.diagnostic


# -- suggest_threshold --------------------------------------------------------------

def test_suggest_threshold_identity_zero():
    rows = substream(81, "st").normal(size=(25, 3))
    assert suggest_threshold(rows, rows.copy()) == pytest.approx(0.0)


def test_suggest_threshold_similar_halves_small():
    rng = substream(82, "sh")
    base = rng.normal(size=(400, 1))
    data = np.column_stack([base[:, 0], base[:, 0] * 0.8 + rng.normal(size=400) * 0.1])
    t = suggest_threshold(data[:200], data[200:])
    assert t < 25.0


def test_suggest_threshold_warns_when_uninformative():
    rng = substream(83, "sw")
    x = rng.normal(size=60)
    train = np.column_stack([x, x])            # rho = 1
    test = np.column_stack([x, -x])            # rho = -1: difference 200%
    with pytest.warns(UserWarning, match="independent"):
        t = suggest_threshold(train, test)
    assert t > 100.0


# -- diversify pipeline --------------------------------------------------------------

def blobs():
    return make_toy_blobs(per_class=12, centers=[[0.0, 0.0], [8.0, 8.0]],
                          spread=1.0, seed=21)


def test_diversify_delete_only_halves_classes():
    ds = blobs()
    cfg = DiversifyConfig(top_k=1, removal_fraction=0.5, mode="delete_only")
    out = diversify(ds, fake_probe([10.0, 5.0]), cfg, seed=0)
    assert out.dataset.class_counts().tolist() == [6, 6]
    assert not (out.dataset.provenance == SYNTHETIC).any()
    assert out.chi.tolist() == [0, 0]
    assert out.validation.passed


def test_diversify_synth_only_appends_planned_counts():
    ds = blobs()
    cfg = DiversifyConfig(top_k=1, corr_threshold=1e6, synth_base=10,
                          mode="synth_only")
    out = diversify(ds, fake_probe([10.0, 5.0]), cfg, seed=0)
    assert out.chi.tolist() == [20, 10]
    synth_mask = out.dataset.provenance == SYNTHETIC
    assert synth_mask.sum() == 30
    counts = np.bincount(out.dataset.labels[synth_mask], minlength=2)
    assert counts.tolist() == [20, 10]
    # originals all retained in synth_only mode
    assert (~synth_mask).sum() == ds.n


def test_diversify_full_mode_count_law():
    ds = blobs()
    cfg = DiversifyConfig(top_k=1, removal_fraction=0.25, corr_threshold=1e6,
                          synth_base=4)
    probe = fake_probe([10.0, 5.0])
    out = diversify(ds, probe, cfg, seed=5)
    chi = out.chi
    for c in range(2):
        combined = 12 + chi[c]
        expected = max(1, int(np.floor(combined * 0.75 + 0.5)))
        assert out.dataset.class_counts()[c] == expected
        assert out.removed_per_class[c] == combined - expected


def test_diversify_synthetics_inside_final_bounds():
    ds = blobs()
    cfg = DiversifyConfig(top_k=2, corr_threshold=1e6, synth_base=8,
                          mode="synth_only")
    out = diversify(ds, fake_probe([20.0, 10.0], delta_x_max=0.05), cfg, seed=9)
    synth_mask = out.dataset.provenance == SYNTHETIC
    for row, label in zip(out.dataset.features[synth_mask],
                          out.dataset.labels[synth_mask]):
        for f, v in enumerate(row):
            assert out.bounds.get(int(label), f).contains(v, tol=1e-12)


def test_diversify_no_misclassification_no_synthesis():
    ds = blobs()
    cfg = DiversifyConfig(top_k=1, corr_threshold=10.0, mode="synth_only")
    out = diversify(ds, fake_probe([0.0, 0.0]), cfg, seed=0)
    assert out.chi.tolist() == [0, 0]
    assert out.dataset.n == ds.n
    assert out.validation.passed and out.validation.attempts == 0


def test_diversify_deterministic():
    ds = blobs()
    cfg = DiversifyConfig(top_k=1, removal_fraction=0.3, corr_threshold=200.0,
                          synth_base=6)
    a = diversify(ds, fake_probe([12.0, 6.0], 0.02), cfg, seed=11)
    b = diversify(ds, fake_probe([12.0, 6.0], 0.02), cfg, seed=11)
    assert np.array_equal(a.dataset.features, b.dataset.features)
    assert np.array_equal(a.dataset.labels, b.dataset.labels)
    assert np.array_equal(a.dataset.provenance, b.dataset.provenance)
    assert a.validation.corr_diff == b.validation.corr_diff
    assert a.validation.attempts == b.validation.attempts


def test_diversify_retry_exhaustion_reports_best_attempt():
    ds = blobs()
    cfg = DiversifyConfig(top_k=1, corr_threshold=0.001, synth_base=6,
                          max_retries=3, mode="synth_only")
    out = diversify(ds, fake_probe([10.0, 10.0]), cfg, seed=2)
    assert not out.validation.passed
    assert out.validation.attempts <= 3
    assert math.isfinite(out.validation.corr_diff)
    assert (out.dataset.provenance == SYNTHETIC).sum() == out.chi.sum()


def test_diversify_validation_report_is_truthful():
    ds = blobs()
    cfg = DiversifyConfig(top_k=1, corr_threshold=1e6, synth_base=10,
                          mode="synth_only")
    out = diversify(ds, fake_probe([10.0, 5.0]), cfg, seed=3)
    synth_mask = out.dataset.provenance == SYNTHETIC
    recheck = validate_synthetic(out.dataset.features[synth_mask], ds.features,
                                 cfg.corr_threshold)
    assert recheck.corr_diff == pytest.approx(out.validation.corr_diff)
    assert recheck.passed == out.validation.passed


def test_diversify_top_k_exceeding_features():
    ds = blobs()
    cfg = DiversifyConfig(top_k=5)
    with pytest.raises(ValueError, match="top_k"):
        diversify(ds, fake_probe([1.0, 1.0]), cfg, seed=0)


def test_config_validation():
    with pytest.raises(ValueError):
        DiversifyConfig(top_k=0)
    with pytest.raises(ValueError):
        DiversifyConfig(top_k=1, removal_fraction=1.0)
    with pytest.raises(ValueError):
        DiversifyConfig(top_k=1, corr_threshold=0.0)
    with pytest.raises(ValueError):
        DiversifyConfig(top_k=1, synth_base=0)
    with pytest.raises(ValueError):
        DiversifyConfig(top_k=1, mode="everything")


def test_diversify_report_serialization(tmp_path):
    ds = blobs()
    cfg = DiversifyConfig(top_k=1, corr_threshold=1e6, synth_base=5)
    out = diversify(ds, fake_probe([10.0, 5.0], 0.03), cfg, seed=7)
    path = tmp_path / "report.json"
    save_diversify_report(out, path)
    doc = json.loads(path.read_text())
    assert doc["chi"] == out.chi.tolist()
    assert doc["validation"]["passed"] == out.validation.passed
    assert len(doc["bounds"]["per_class"]) == 2
    round_tripped = doc["bounds"]["per_class"][0][0]
    assert round_tripped == out.bounds.get(0, 0).to_json()


def test_bounds_json_includes_names():
    bounds = single_interval_bounds([[(0.0, 1.0)], [(2.0, 3.0)]])
    doc = bounds_to_json(bounds, class_names=["a", "b"], feature_names=["f0"])
    assert doc["class_names"] == ["a", "b"]
    assert doc["per_class"][1][0] == [[2.0, 3.0]]
