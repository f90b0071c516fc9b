"""Confidence estimators: softmax response, entropy, and the history-aware
ranking aggregation (CEHis) with its ablation switches."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .data import Query
from .errors import CalibrationError, UndefinedMetricError, ValidationError
from .history import KINDS, AccuracyStore, HawkesConfig, historical_score
from .metrics import risk_coverage_curve
from .reasoner import PredictionRecord

ESTIMATORS = ("cehis", "sr", "entropy", "oracle", "random")


@dataclass(frozen=True)
class ConfidenceReport:
    query: Query
    gt_rank: int
    confidence: float
    certainty: float
    historical: float | None = None
    rank_c: int | None = None
    rank_a: int | None = None
    tiebreak: float = 0.0


@dataclass(frozen=True)
class CEHisConfig:
    beta: float = 0.5
    hawkes: HawkesConfig = field(default_factory=HawkesConfig)
    disable_certainty: bool = False
    disable_history: bool = False
    disable_hawkes: bool = False
    absolute_value_aggregation: bool = False
    masked_kinds: frozenset = frozenset()

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValidationError(f"beta must lie in [0, 1], got {self.beta}")
        if self.disable_certainty and self.disable_history:
            raise ValidationError("cannot disable both the certainty and the history signal")
        object.__setattr__(self, "masked_kinds", frozenset(self.masked_kinds))

    @property
    def effective_beta(self) -> float:
        if self.disable_certainty:
            return 0.0
        if self.disable_history:
            return 1.0
        return self.beta


def certainty_score(record: PredictionRecord) -> float:
    """Softmax response: the largest candidate probability."""
    p = record.max_prob
    if not 0.0 < p <= 1.0:
        raise ValidationError(f"max_prob {p} outside (0, 1]")
    return float(p)


def entropy_confidence(record: PredictionRecord) -> float:
    if record.entropy < 0:
        raise ValidationError(f"negative entropy {record.entropy}")
    return -float(record.entropy)


def rank_scores(values: Sequence[float]) -> np.ndarray:
    """For each value, how many values in the batch are strictly smaller."""
    v = np.asarray(values, dtype=np.float64)
    return np.searchsorted(np.sort(v), v, side="left").astype(np.int64)


def _historical_scores(records, store, config: CEHisConfig, rolling: bool) -> list[float]:
    views: dict[int, AccuracyStore] = {}
    out = []
    for rec in records:
        t = rec.query.timestamp
        view = store
        if rolling:
            view = views.get(t)
            if view is None:
                view = views[t] = store.as_of(t)
        out.append(historical_score(view, rec.query, config.hawkes,
                                    use_hawkes=not config.disable_hawkes,
                                    masked_kinds=config.masked_kinds))
    return out


def _aggregate(certainty, historical, config: CEHisConfig):
    beta = config.effective_beta
    rank_c, rank_a = rank_scores(certainty), rank_scores(historical)
    if config.absolute_value_aggregation:
        g = beta * np.asarray(certainty) + (1.0 - beta) * np.asarray(historical)
    else:
        g = beta * rank_c + (1.0 - beta) * rank_a
        # a convex blend lies between its endpoints; clipping only removes rounding spill
        g = np.clip(g, np.minimum(rank_c, rank_a), np.maximum(rank_c, rank_a))
    return rank_c, rank_a, g


def estimate_confidences(records: Sequence[PredictionRecord], store: AccuracyStore | None,
                         config: CEHisConfig, rolling: bool = True) -> list[ConfidenceReport]:
    """Score a whole evaluation batch.

    Ranks are taken over the full batch. With ``rolling`` each query sees the
    store only up to (excluding) its own timestamp; otherwise the store must
    already end before every query.
    """
    certainty = [certainty_score(r) for r in records]
    if store is None:
        if not config.disable_history:
            raise ValidationError("an accuracy store is required unless history is disabled")
        historical = [0.0] * len(records)
    else:
        historical = _historical_scores(records, store, config, rolling)
    rank_c, rank_a, g = _aggregate(certainty, historical, config)
    return [
        ConfidenceReport(rec.query, rec.gt_rank, float(g[i]), certainty[i], historical[i],
                         int(rank_c[i]), int(rank_a[i]), tiebreak=certainty[i])
        for i, rec in enumerate(records)
    ]


def with_beta(reports: Sequence[ConfidenceReport], config: CEHisConfig) -> list[ConfidenceReport]:
    """Re-aggregate existing reports under another config's weighting, reusing both signals."""
    certainty = [r.certainty for r in reports]
    historical = [r.historical for r in reports]
    rank_c, rank_a, g = _aggregate(certainty, historical, config)
    return [replace(r, confidence=float(g[i]), rank_c=int(rank_c[i]), rank_a=int(rank_a[i]),
                    tiebreak=r.certainty)
            for i, r in enumerate(reports)]


def baseline_reports(records: Sequence[PredictionRecord], estimator: str,
                     seed: int = 0) -> list[ConfidenceReport]:
    """Reports for the single-signal estimators: ``sr``, ``entropy``, ``oracle`` (1/rank), ``random``."""
    if estimator == "sr":
        conf = [certainty_score(r) for r in records]
    elif estimator == "entropy":
        conf = [entropy_confidence(r) for r in records]
    elif estimator == "oracle":
        conf = [1.0 / r.gt_rank for r in records]
    elif estimator == "random":
        conf = np.random.default_rng(seed).random(len(records)).tolist()
    else:
        raise ValidationError(f"unknown baseline estimator {estimator!r}")
    return [ConfidenceReport(r.query, r.gt_rank, float(c), r.max_prob) for r, c in zip(records, conf)]


@dataclass(frozen=True)
class Calibration:
    beta: float
    table: tuple[tuple[float, float], ...]


def calibrate_beta(build_reports: Callable[[float], Sequence], grid: Iterable[float],
                   alpha: float = 1.0) -> Calibration:
    """Pick the grid value whose validation reports give the lowest risk-coverage AUC.

    Ties go to the smallest beta.
    """
    grid = sorted(set(float(b) for b in grid))
    if not grid:
        raise CalibrationError("empty beta grid")
    if grid[0] < 0 or grid[-1] > 1:
        raise CalibrationError("beta grid must lie within [0, 1]")
    table = []
    for beta in grid:
        reports = build_reports(beta)
        try:
            table.append((beta, risk_coverage_curve(reports, alpha).auc))
        except UndefinedMetricError:
            raise CalibrationError("validation set is empty") from None
    best = min(table, key=lambda row: (row[1], row[0]))
    return Calibration(best[0], tuple(table))


def default_grid(step: float = 0.1) -> list[float]:
    n = int(round(1 / step))
    return [round(i * step, 10) for i in range(n + 1)]


def ablation_configs(base: CEHisConfig, mode: str) -> dict[str, CEHisConfig]:
    """Variants of the full estimator, each removing one ingredient."""
    subj, second, pair = KINDS[mode]
    return {
        "full": base,
        "-SR": replace(base, disable_certainty=True),
        "-His": replace(base, disable_history=True),
        "-HA": replace(base, disable_hawkes=True),
        "-RA": replace(base, absolute_value_aggregation=True),
        "-SQ": replace(base, masked_kinds={subj}),
        "-RQ": replace(base, masked_kinds={second}),
        "-SRQ": replace(base, masked_kinds={pair}),
    }
