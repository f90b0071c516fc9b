"""Selective prediction policy and its evaluation: coverage, rank-based risk,
risk-coverage curves and effective reliability.

Reports are any objects exposing ``confidence``, ``gt_rank`` and optionally
``tiebreak``. Ordering is by confidence, then tiebreak, both descending;
reports equal on both are accepted or abstained together, so every curve
point is realizable by a threshold.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import UndefinedMetricError, ValidationError

RISK_LEVELS = (0.1, 0.3, 0.5)
PENALTIES = (1, 2, 3, 4, 5)
TOLERANCES = (5, 10)


@dataclass(frozen=True)
class SelectivePolicy:
    gamma: float

    def accepts(self, confidence: float) -> bool:
        return confidence > self.gamma


@dataclass(frozen=True)
class RiskConfig:
    alpha: float = 1.0

    def __post_init__(self):
        if not self.alpha >= 1.0:
            raise ValidationError(f"risk parameter alpha must be >= 1, got {self.alpha}")


@dataclass(frozen=True)
class ERConfig:
    c: float = 1.0
    N: int = 5

    def __post_init__(self):
        if not self.c > 0:
            raise ValidationError("penalty c must be positive")
        if int(self.N) != self.N or self.N < 1:
            raise ValidationError("tolerance N must be a positive integer")


def _arrays(reports):
    if len(reports) == 0:
        raise UndefinedMetricError("metric undefined on an empty batch")
    conf = np.array([r.confidence for r in reports], dtype=np.float64)
    ranks = np.array([r.gt_rank for r in reports], dtype=np.int64)
    tb = np.array([getattr(r, "tiebreak", 0.0) for r in reports], dtype=np.float64)
    return conf, ranks, tb


def coverage(reports: Sequence, gamma: float) -> float:
    conf, _, _ = _arrays(reports)
    return float(np.count_nonzero(conf > gamma)) / len(conf)


def prediction_risk(gt_rank, alpha: float = 1.0):
    """``alpha * (1 - 1/rank)``; vectorizes over an array of ranks."""
    ranks = np.asarray(gt_rank)
    if np.any(ranks < 1):
        raise ValidationError("ground-truth rank must be >= 1")
    RiskConfig(alpha)
    risk = alpha * (1.0 - 1.0 / ranks)
    return float(risk) if risk.ndim == 0 else risk


def selective_risk(reports: Sequence, gamma: float, alpha: float = 1.0) -> float:
    """Mean rank risk over the accepted reports."""
    conf, ranks, _ = _arrays(reports)
    accepted = conf > gamma
    if not accepted.any():
        raise UndefinedMetricError(f"no prediction accepted at gamma={gamma}")
    return float(prediction_risk(ranks[accepted], alpha).mean())


def selection_order(reports: Sequence) -> np.ndarray:
    """Indices sorted by descending confidence, then descending tiebreak, then input order."""
    conf, _, tb = _arrays(reports)
    return np.lexsort((np.arange(len(conf)), -tb, -conf))


@dataclass(frozen=True)
class RiskCoverageCurve:
    coverages: np.ndarray
    risks: np.ndarray
    auc: float
    order: np.ndarray
    cuts: np.ndarray

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.coverages.tolist(), self.risks.tolist()))

    def accepted(self, point: int) -> np.ndarray:
        """Report indices accepted at the ``point``-th curve point."""
        return np.sort(self.order[: self.cuts[point]])


def curve_auc(coverages: np.ndarray, risks: np.ndarray) -> float:
    """Area under risk-coverage over the whole [0, 1] coverage axis, times 100.

    Points are joined by trapezoids; below the first realizable coverage the
    risk of the first point is held constant.
    """
    area = float(coverages[0] * risks[0])
    area += float(np.sum(np.diff(coverages) * (risks[1:] + risks[:-1]) / 2.0))
    return 100.0 * area


def risk_coverage_curve(reports: Sequence, alpha: float = 1.0) -> RiskCoverageCurve:
    conf, ranks, tb = _arrays(reports)
    n = len(conf)
    order = np.lexsort((np.arange(n), -tb, -conf))
    risk = prediction_risk(ranks[order], alpha)
    c_sorted, t_sorted = conf[order], tb[order]
    # a cut after position k-1 exists where the composite key changes
    boundary = np.flatnonzero((c_sorted[1:] != c_sorted[:-1]) | (t_sorted[1:] != t_sorted[:-1])) + 1
    cuts = np.append(boundary, n)
    cum = np.cumsum(risk)
    coverages = cuts / n
    risks = cum[cuts - 1] / cuts
    return RiskCoverageCurve(coverages, risks, curve_auc(coverages, risks), order, cuts)


def coverage_at_risk(curve: RiskCoverageCurve, target_risk: float) -> float:
    ok = curve.risks <= target_risk
    return float(curve.coverages[ok].max()) if ok.any() else 0.0


def reliability_values(ranks: np.ndarray, config: ERConfig) -> np.ndarray:
    """Per-query reward if accepted: ``1/rank`` when rank < N, else ``-c``."""
    ranks = np.asarray(ranks)
    return np.where(ranks < config.N, 1.0 / ranks, -float(config.c))


def effective_reliability(report, config: ERConfig, gamma: float) -> float:
    if not report.confidence > gamma:
        return 0.0
    return float(reliability_values(np.array([report.gt_rank]), config)[0])


def mean_effective_reliability(reports: Sequence, config: ERConfig, gamma: float) -> float:
    conf, ranks, _ = _arrays(reports)
    phi = np.where(conf > gamma, reliability_values(ranks, config), 0.0)
    return float(phi.sum() / len(phi))


def best_effective_reliability(reports: Sequence, config: ERConfig,
                               curve: RiskCoverageCurve | None = None) -> tuple[float, float]:
    """Highest mean effective reliability over all realizable thresholds.

    Returns ``(phi, coverage)``; abstaining on everything (phi 0, coverage 0)
    is always available.
    """
    _, ranks, _ = _arrays(reports)
    curve = curve or risk_coverage_curve(reports)
    n = len(ranks)
    cum = np.cumsum(reliability_values(ranks[curve.order], config))
    phis = cum[curve.cuts - 1] / n
    best = int(np.argmax(phis))
    if phis[best] <= 0.0:
        return 0.0, 0.0
    return float(phis[best]), float(curve.coverages[best])


def summarize(reports: Sequence, alpha: float = 1.0, risk_levels=RISK_LEVELS,
              penalties=PENALTIES, tolerances=TOLERANCES) -> dict[str, float]:
    """Flat metric table: AUC, coverage at each risk level, best effective reliability per (c, N)."""
    curve = risk_coverage_curve(reports, alpha)
    out = {"n": len(reports), "auc": curve.auc}
    for level in risk_levels:
        out[f"coverage@{level}"] = coverage_at_risk(curve, level)
    for c in penalties:
        for N in tolerances:
            out[f"phi_c{c}_n{N}"] = best_effective_reliability(reports, ERConfig(c, N), curve)[0]
    return out
