from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selective_tkg.errors import UndefinedMetricError, ValidationError
from selective_tkg.metrics import (ERConfig, RiskConfig, SelectivePolicy, best_effective_reliability,
                                   coverage, coverage_at_risk, effective_reliability,
                                   mean_effective_reliability, prediction_risk, risk_coverage_curve,
                                   selective_risk, summarize)

import oracles


def rep(confidence, rank, tiebreak=0.0):
    return SimpleNamespace(confidence=confidence, gt_rank=rank, tiebreak=tiebreak)


def batch(confs, ranks):
    return [rep(c, r) for c, r in zip(confs, ranks)]


def three():
    return batch([0.9, 0.6, 0.2], [1, 2, 4])


def test_policy_is_strict():
    assert SelectivePolicy(0.5).accepts(0.6) and not SelectivePolicy(0.5).accepts(0.5)


def test_coverage_examples():
    reports = batch([0.9, 0.2, 0.6], [1, 1, 1])
    assert coverage(reports, 0.5) == pytest.approx(2 / 3)
    assert coverage(reports, 1.0) == 0.0
    assert coverage(reports, 0.0) == 1.0
    with pytest.raises(UndefinedMetricError):
        coverage([], 0.5)


def test_risk_examples():
    assert prediction_risk(1) == 0.0
    assert prediction_risk(4, 1.0) == 0.75
    assert prediction_risk(2, 2.0) == 1.0
    with pytest.raises(ValidationError):
        prediction_risk(0)
    with pytest.raises(ValidationError):
        RiskConfig(0.5)


def test_selective_risk_examples():
    assert selective_risk(batch([1, 1], [1, 2]), 0.0) == 0.25
    assert selective_risk(batch([1, 1], [1, 1]), 0.0) == 0.0
    assert selective_risk(three(), 0.0) == pytest.approx(5 / 12)
    with pytest.raises(UndefinedMetricError):
        selective_risk(three(), 5.0)


def test_three_report_curve():
    curve = risk_coverage_curve(three())
    np.testing.assert_allclose(curve.coverages, [1 / 3, 2 / 3, 1])
    np.testing.assert_allclose(curve.risks, [0, 0.25, 5 / 12])
    # full-axis area: zero below 1/3, then two trapezoids
    assert curve.auc == pytest.approx(100 * (0.25 / 2 / 3 + (0.25 + 5 / 12) / 2 / 3))
    assert coverage_at_risk(curve, 0.3) == pytest.approx(2 / 3)
    assert coverage_at_risk(curve, 0.5) == 1.0


def test_coverage_at_risk_none_qualifies():
    curve = risk_coverage_curve(batch([0.9, 0.1], [3, 1]))
    assert coverage_at_risk(curve, 0.1) == 0.0


@pytest.mark.parametrize("rank, alpha", [(1, 1.0), (3, 1.0), (5, 2.0)])
def test_constant_risk_curve(rank, alpha):
    curve = risk_coverage_curve(batch(np.linspace(0, 1, 7), [rank] * 7), alpha)
    assert np.allclose(curve.risks, alpha * (1 - 1 / rank))
    assert curve.auc == pytest.approx(100 * alpha * (1 - 1 / rank))


def test_oracle_curve_is_non_decreasing():
    rng = np.random.default_rng(1)
    ranks = rng.integers(1, 30, size=200)
    curve = risk_coverage_curve(batch(1.0 / ranks, ranks))
    assert np.all(np.diff(curve.risks) >= -1e-15)


def test_equal_confidences_form_one_point():
    curve = risk_coverage_curve(batch([0.5, 0.5, 0.2], [1, 3, 1]))
    np.testing.assert_allclose(curve.coverages, [2 / 3, 1])
    assert curve.coverages[-1] == 1.0


def test_effective_reliability_examples():
    cfg = ERConfig(c=2, N=5)
    assert effective_reliability(rep(0.1, 1), cfg, 0.5) == 0.0
    assert effective_reliability(rep(0.9, 3), cfg, 0.5) == pytest.approx(1 / 3)
    assert effective_reliability(rep(0.9, 5), cfg, 0.5) == -2.0
    with pytest.raises(ValidationError):
        ERConfig(c=0)


def test_mean_effective_reliability_examples():
    cfg = ERConfig(c=1, N=5)
    assert mean_effective_reliability(batch([0.1, 0.2], [1, 1]), cfg, 0.5) == 0.0
    assert mean_effective_reliability(batch([0.9, 0.9, 0.1], [1, 7, 1]), cfg, 0.5) == 0.0
    assert mean_effective_reliability(batch([0.9, 0.9], [1, 1]), cfg, 0.5) == 1.0


def test_summary_columns():
    summary = summarize(three())
    expected = {"n", "auc", "coverage@0.1", "coverage@0.3", "coverage@0.5"}
    expected |= {f"phi_c{c}_n{n}" for c in range(1, 6) for n in (5, 10)}
    assert set(summary) == expected


@st.composite
def report_batches(draw, max_size=200):
    n = draw(st.integers(1, max_size))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    levels = draw(st.integers(1, 12))  # few levels -> many ties
    conf = rng.integers(levels, size=n) / levels
    tb = rng.integers(3, size=n) / 3 if draw(st.booleans()) else np.zeros(n)
    ranks = rng.integers(1, 25, size=n)
    return [rep(float(c), int(r), float(t)) for c, r, t in zip(conf, ranks, tb)]


@settings(max_examples=60, deadline=None)
@given(report_batches(), st.sampled_from([1.0, 2.0]), st.sampled_from([0.1, 0.3, 0.5]))
def test_matches_exhaustive_sweep(reports, alpha, target):
    items = [(r.confidence, r.tiebreak, r.gt_rank) for r in reports]
    points = oracles.threshold_sweep(items, alpha)
    curve = risk_coverage_curve(reports, alpha)
    assert len(points) == len(curve.coverages)
    for k, (cov, risk, acc) in enumerate(points):
        assert abs(cov - curve.coverages[k]) <= 1e-12
        assert abs(risk - curve.risks[k]) <= 1e-12
        assert set(curve.accepted(k).tolist()) == acc
    assert abs(oracles.sweep_auc(points) - curve.auc) <= 1e-12 * 100
    assert coverage_at_risk(curve, target) == oracles.sweep_coverage_at_risk(points, target)
    for c, N in [(1, 5), (3, 10)]:
        phi, _ = best_effective_reliability(reports, ERConfig(c, N), curve)
        assert abs(phi - oracles.sweep_best_phi(items, c, N)) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(report_batches(60), st.floats(-0.1, 1.1))
def test_threshold_quantities(reports, gamma):
    items = [(r.confidence, r.tiebreak, r.gt_rank) for r in reports]
    accepted = [i for i, (c, _, _) in enumerate(items) if c > gamma]
    assert coverage(reports, gamma) == len(accepted) / len(items)
    assert coverage(reports, gamma + 0.05) <= coverage(reports, gamma)
    if accepted:
        risk = sum(oracles.rank_risk(items[i][2]) for i in accepted) / len(accepted)
        assert abs(selective_risk(reports, gamma) - risk) <= 1e-12
        assert 0 <= risk < 1
    cfg = ERConfig(2, 5)
    phi = sum(oracles.phi(r, i in accepted, 2, 5) for i, (_, _, r) in enumerate(items)) / len(items)
    got = mean_effective_reliability(reports, cfg, gamma)
    assert abs(got - phi) <= 1e-12
    assert -2 <= got <= 1


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 20), min_size=2, max_size=40), st.randoms(use_true_random=False))
def test_oracle_confidence_minimizes_auc(ranks, rnd):
    conf = [1.0 / r for r in ranks]
    shuffled = conf[:]
    rnd.shuffle(shuffled)
    oracle = risk_coverage_curve(batch(conf, ranks)).auc
    assert oracle <= risk_coverage_curve(batch(shuffled, ranks)).auc + 1e-9
