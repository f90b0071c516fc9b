import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selective_tkg.data import ENTITY, Query
from selective_tkg.errors import CalibrationError, ValidationError
from selective_tkg.estimators import (CEHisConfig, ConfidenceReport, ablation_configs,
                                      baseline_reports, calibrate_beta, certainty_score,
                                      default_grid, entropy_confidence, estimate_confidences,
                                      rank_scores, with_beta)
from selective_tkg.history import accuracy_store_from_records
from selective_tkg.metrics import risk_coverage_curve
from selective_tkg.reasoner import PredictionRecord, record_from_scores
from selective_tkg.synthetic import planted_signal_case

from oracles import strictly_smaller_counts


def record_of(probs, gt=0):
    return record_from_scores(Query(ENTITY, 0, 0, None, 1, gt), np.asarray(probs, dtype=float))


def test_certainty_examples():
    assert certainty_score(record_of([0.7, 0.2, 0.1])) == pytest.approx(0.7)
    assert certainty_score(record_of([1.0, 0.0, 0.0])) == 1.0
    assert certainty_score(record_of([1.0] * 8)) == pytest.approx(1 / 8)


def test_certainty_out_of_range():
    bad = PredictionRecord(Query(ENTITY, 0, 0, None, 1, 0), 1, 0.0, 0.0, 0.0)
    with pytest.raises(ValidationError):
        certainty_score(bad)


def test_entropy_examples():
    assert entropy_confidence(record_of([1.0, 0.0])) == 0.0
    assert entropy_confidence(record_of([1.0] * 4)) == pytest.approx(-math.log(4))
    assert entropy_confidence(record_of([0.5, 0.5])) < entropy_confidence(record_of([0.9, 0.1]))
    with pytest.raises(ValidationError):
        entropy_confidence(PredictionRecord(Query(ENTITY, 0, 0, None, 1, 0), 1, 1.0, 1.0, -0.1))


def test_rank_score_examples():
    assert rank_scores([0.9, 0.5, 0.7]).tolist() == [2, 0, 1]
    assert rank_scores([0.3] * 4).tolist() == [0, 0, 0, 0]
    assert rank_scores([5.0]).tolist() == [0]


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), max_size=60))
def test_rank_scores_match_brute_force(values):
    assert rank_scores(values).tolist() == strictly_smaller_counts(values)


def _reports(certainty, historical, ranks=None):
    ranks = ranks or [1] * len(certainty)
    return [ConfidenceReport(Query(ENTITY, i, 0, None, 1, 0), ranks[i], 0.0, c, h)
            for i, (c, h) in enumerate(zip(certainty, historical))]


def test_half_blend_tie_resolved_by_certainty():
    reps = with_beta(_reports([0.9, 0.5, 0.7], [0.1, 0.9, 0.5]), CEHisConfig(beta=0.5))
    assert [r.rank_c for r in reps] == [2, 0, 1]
    assert [r.rank_a for r in reps] == [0, 2, 1]
    assert [r.confidence for r in reps] == [1.0, 1.0, 1.0]
    curve = risk_coverage_curve(reps)
    assert curve.order.tolist() == [0, 2, 1]  # higher certainty first


def _order(reports):
    return risk_coverage_curve(reports).order.tolist()


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0.01, 1.0), st.floats(0.0, 6.0)), min_size=1, max_size=40))
def test_degenerate_weights(pairs):
    cert, hist = zip(*pairs)
    base = _reports(cert, hist)
    by_cert = with_beta(base, CEHisConfig(beta=1.0))
    assert [r.confidence for r in by_cert] == rank_scores(cert).tolist()
    by_hist = with_beta(base, CEHisConfig(beta=0.0))
    assert [r.confidence for r in by_hist] == rank_scores(hist).tolist()


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0.01, 1.0), st.floats(0.0, 6.0)), min_size=2, max_size=40),
       st.floats(0.0, 1.0), st.floats(0.1, 5.0))
def test_increasing_transform_of_certainty_changes_nothing(pairs, beta, power):
    cert, hist = zip(*pairs)
    cfg = CEHisConfig(beta=beta)
    a = with_beta(_reports(cert, hist), cfg)
    b = with_beta(_reports([c ** power for c in cert], hist), cfg)
    assert [r.rank_c for r in a] == [r.rank_c for r in b]
    assert [r.confidence for r in a] == [r.confidence for r in b]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0.01, 1.0), st.floats(0.0, 6.0)), min_size=2, max_size=30),
       st.floats(0.0, 1.0))
def test_dominance_is_respected(pairs, beta):
    cert, hist = zip(*pairs)
    reps = with_beta(_reports(cert, hist), CEHisConfig(beta=beta))
    for a in reps:
        assert 0 <= a.confidence <= len(reps) - 1
        for b in reps:
            if a.rank_c >= b.rank_c and a.rank_a >= b.rank_a:
                assert a.confidence >= b.confidence


def test_history_disabled_matches_softmax_response():
    dataset, records = planted_signal_case("certainty", 3)
    lo, hi = dataset.splits["test"]
    test = [r for r in records if lo <= r.query.timestamp <= hi]
    cehis = estimate_confidences(test, None, CEHisConfig(beta=0.3, disable_history=True))
    sr = baseline_reports(test, "sr")
    c1, c2 = risk_coverage_curve(cehis), risk_coverage_curve(sr)
    np.testing.assert_array_equal(c1.coverages, c2.coverages)
    for k in range(len(c1.cuts)):
        assert set(c1.accepted(k)) == set(c2.accepted(k))


def test_ablation_variants_differ_by_one_switch():
    base = CEHisConfig(beta=0.4)
    variants = ablation_configs(base, ENTITY)
    assert set(variants) == {"full", "-SR", "-His", "-HA", "-RA", "-SQ", "-RQ", "-SRQ"}
    assert variants["-HA"] == CEHisConfig(beta=0.4, disable_hawkes=True)
    assert variants["-SRQ"].masked_kinds == {"subject-relation"}
    assert ablation_configs(base, "relation")["-RQ"].masked_kinds == {"object"}


def test_rolling_store_is_required_to_be_causal():
    recs = [PredictionRecord(Query(ENTITY, 0, 0, None, t, 0), 1, 0.5, 0.5, 1.0) for t in (1, 2)]
    store = accuracy_store_from_records(recs, (1, 2), ENTITY)
    out = estimate_confidences(recs, store, CEHisConfig())
    assert out[0].historical == 0.0 and out[1].historical > 0.0
    from selective_tkg.errors import TemporalLeakError
    with pytest.raises(TemporalLeakError):
        estimate_confidences(recs, store, CEHisConfig(), rolling=False)


def test_config_validation():
    with pytest.raises(ValidationError):
        CEHisConfig(beta=1.5)
    with pytest.raises(ValidationError):
        CEHisConfig(disable_certainty=True, disable_history=True)


def _planted_calibration(signal):
    dataset, records = planted_signal_case(signal, 7)
    lo, hi = dataset.splits["valid"]
    store = accuracy_store_from_records(records, (0, hi), ENTITY)
    valid = [r for r in records if lo <= r.query.timestamp <= hi]
    base = estimate_confidences(valid, store, CEHisConfig())
    return calibrate_beta(lambda b: with_beta(base, CEHisConfig(beta=b)), default_grid(0.1))


def test_calibration_prefers_the_informative_signal():
    hist = _planted_calibration("history")
    cert = _planted_calibration("certainty")
    assert hist.beta == 0.0
    assert cert.beta == 1.0
    # the choice agrees with an exhaustive look at the table
    assert hist.beta == min(hist.table, key=lambda row: (row[1], row[0]))[0]


def test_singleton_grid_and_errors():
    reps = _reports([0.2, 0.3], [0.0, 1.0], ranks=[1, 3])
    assert calibrate_beta(lambda b: with_beta(reps, CEHisConfig(beta=b)), [0.5]).beta == 0.5
    with pytest.raises(CalibrationError):
        calibrate_beta(lambda b: [], [0.5])
    with pytest.raises(CalibrationError):
        calibrate_beta(lambda b: reps, [])


def test_calibration_ties_go_to_smallest_beta():
    reps = _reports([0.2, 0.3], [0.0, 1.0], ranks=[1, 1])
    assert calibrate_beta(lambda b: with_beta(reps, CEHisConfig(beta=b)), default_grid(0.25)).beta == 0.0


def test_baselines():
    recs = [PredictionRecord(Query(ENTITY, i, 0, None, 1, 0), rank, 0.1, 0.5, 1.0)
            for i, rank in enumerate([1, 4, 2])]
    assert [r.confidence for r in baseline_reports(recs, "oracle")] == [1.0, 0.25, 0.5]
    a, b = baseline_reports(recs, "random", seed=3), baseline_reports(recs, "random", seed=3)
    assert a == b
    with pytest.raises(ValidationError):
        baseline_reports(recs, "cehis")
