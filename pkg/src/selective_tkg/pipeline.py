"""End-to-end orchestration shared by the command line and the acceptance suite."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import __version__
from .data import ENTITY, MODES, TemporalDataset, load_dataset, queries_in_range
from .errors import ValidationError
from .estimators import (ESTIMATORS, CEHisConfig, ConfidenceReport, ablation_configs,
                         baseline_reports, calibrate_beta, default_grid, estimate_confidences,
                         with_beta)
from .history import ABSOLUTE, AccuracyStore, HawkesConfig, accuracy_store_from_records
from .metrics import PENALTIES, RISK_LEVELS, TOLERANCES, RiskConfig, risk_coverage_curve, summarize
from .reasoner import (FrequencyReasoner, PredictionRecord, Reasoner, ReasonerConfig, batch_predict,
                       history_before, load_external_dump)
from .synthetic import SyntheticParams, generate_synthetic


@dataclass
class RunConfig:
    """Everything needed to reproduce a run. ``dataset=None`` means the bundled synthetic corpus."""

    dataset: str | None = None
    synthetic: dict = field(default_factory=dict)
    mode: str = ENTITY
    inverse_augment: bool | None = None
    reasoner: str = "frequency"
    dump_path: str | None = None
    decay_lambda: float = 0.1
    smoothing: float = 0.01
    backoff_weight: float = 0.3
    filtered_ranks: bool = False
    estimator: str = "cehis"
    beta: float | None = None
    beta_grid_step: float = 0.1
    delta: float = 0.5
    short_window: int = 3
    long_window: int = 10
    time_mode: str = ABSOLUTE
    alpha: float = 1.0
    penalties: list = field(default_factory=lambda: list(PENALTIES))
    tolerances: list = field(default_factory=lambda: list(TOLERANCES))
    warmup: int | None = None
    output_dir: str = "runs/latest"
    seed: int = 7
    workers: int = 1

    def validate(self) -> "RunConfig":
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}")
        if self.reasoner not in ("frequency", "dump"):
            raise ValidationError("reasoner must be 'frequency' or 'dump'")
        if self.reasoner == "dump" and not self.dump_path:
            raise ValidationError("reasoner 'dump' needs dump_path")
        if self.estimator not in ESTIMATORS:
            raise ValidationError(f"estimator must be one of {ESTIMATORS}")
        if not 0 < self.beta_grid_step <= 1:
            raise ValidationError("beta_grid_step must lie in (0, 1]")
        if self.warmup is not None and self.warmup < 0:
            raise ValidationError("warmup must be non-negative")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")
        RiskConfig(self.alpha)
        self.reasoner_config()
        self.cehis_config(self.beta if self.beta is not None else 0.5)
        SyntheticParams(**{**SyntheticParams().to_dict(), **self.synthetic}).validate()
        return self

    @property
    def augment(self) -> bool:
        return self.mode == ENTITY if self.inverse_augment is None else self.inverse_augment

    def reasoner_config(self) -> ReasonerConfig:
        return ReasonerConfig(self.decay_lambda, self.smoothing, self.backoff_weight, self.filtered_ranks)

    def hawkes_config(self) -> HawkesConfig:
        return HawkesConfig(self.delta, self.short_window, self.long_window, self.time_mode)

    def cehis_config(self, beta: float) -> CEHisConfig:
        return CEHisConfig(beta=beta, hawkes=self.hawkes_config())

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def load_run_dataset(config: RunConfig) -> TemporalDataset:
    if config.dataset is None:
        data = generate_synthetic(config.seed, SyntheticParams(**{**SyntheticParams().to_dict(),
                                                                   **config.synthetic}))
        return data.with_inverse(config.augment)
    return load_dataset(config.dataset, inverse_augment=config.augment)


def build_reasoner(config: RunConfig) -> Reasoner:
    if config.reasoner == "dump":
        return load_external_dump(config.dump_path)
    return FrequencyReasoner(config.reasoner_config())


@dataclass
class SplitData:
    """Predictions for one evaluated split plus the rolling accuracy store behind them."""

    records: list[PredictionRecord]
    store: AccuracyStore


def store_range(dataset: TemporalDataset, split: str, warmup: int | None) -> tuple[int, int]:
    """Timestamps whose predictions feed the accuracy store for ``split``.

    By default the store reaches back over the preceding split when
    evaluating ``test`` and over an equally long tail of ``train`` when
    evaluating ``valid``.
    """
    lo, hi = dataset.splits[split]
    if warmup is None:
        if split == "test" and "valid" in dataset.splits:
            return dataset.splits["valid"][0], hi
        warmup = hi - lo + 1
    return max(0, lo - warmup), hi


def predict_split(dataset: TemporalDataset, reasoner: Reasoner, split: str, mode: str,
                  warmup: int | None = None, workers: int = 1) -> SplitData:
    t_lo, t_hi = store_range(dataset, split, warmup)
    queries = queries_in_range(dataset, t_lo, t_hi, mode)
    records = batch_predict(reasoner, queries, history_before(dataset), workers=workers)
    store = accuracy_store_from_records(records, (t_lo, t_hi), mode)
    s_lo, s_hi = dataset.splits[split]
    return SplitData([r for r in records if s_lo <= r.query.timestamp <= s_hi], store)


def reports_for(split_data: SplitData, estimator: str, cehis: CEHisConfig, seed: int) -> list[ConfidenceReport]:
    if estimator == "cehis":
        return estimate_confidences(split_data.records, split_data.store, cehis)
    return baseline_reports(split_data.records, estimator, seed)


def calibrate(valid: SplitData, config: RunConfig):
    base = estimate_confidences(valid.records, valid.store, config.cehis_config(0.5))
    return calibrate_beta(lambda b: with_beta(base, config.cehis_config(b)),
                          default_grid(config.beta_grid_step), config.alpha)


@dataclass
class Evaluation:
    beta: float | None
    calibration: object | None
    reports: list[ConfidenceReport]
    summary: dict
    curve: object


class Session:
    """Caches the dataset, reasoner and per-split predictions of one run."""

    def __init__(self, config: RunConfig):
        self.config = config.validate()
        self.dataset = load_run_dataset(config)
        self.reasoner = build_reasoner(config)
        self._splits: dict[str, SplitData] = {}

    def split(self, name: str) -> SplitData:
        if name not in self._splits:
            if name not in self.dataset.splits:
                raise ValidationError(f"dataset has no {name!r} split")
            self._splits[name] = predict_split(self.dataset, self.reasoner, name, self.config.mode,
                                               self.config.warmup, self.config.workers)
        return self._splits[name]

    def calibrate(self):
        return calibrate(self.split("valid"), self.config)

    def beta(self):
        if self.config.beta is not None:
            return self.config.beta, None
        cal = self.calibrate()
        return cal.beta, cal

    def evaluate(self, estimator: str | None = None, split: str = "test") -> Evaluation:
        cfg = self.config
        estimator = estimator or cfg.estimator
        beta, cal = self.beta() if estimator == "cehis" else (None, None)
        reports = reports_for(self.split(split), estimator, cfg.cehis_config(beta or 0.0), cfg.seed)
        curve = risk_coverage_curve(reports, cfg.alpha)
        summary = summarize(reports, cfg.alpha, RISK_LEVELS, cfg.penalties, cfg.tolerances)
        return Evaluation(beta, cal, reports, summary, curve)

    def ablate(self, split: str = "test") -> dict[str, float]:
        beta, _ = self.beta()
        data = self.split(split)
        rows = {}
        for name, variant in ablation_configs(self.config.cehis_config(beta), self.config.mode).items():
            reports = estimate_confidences(data.records, data.store, variant)
            rows[name] = risk_coverage_curve(reports, self.config.alpha).auc
        rows["SR"] = risk_coverage_curve(baseline_reports(data.records, "sr"), self.config.alpha).auc
        return rows


def conventions(config: RunConfig) -> dict:
    return {
        "rank": "time-aware filtered" if config.filtered_ranks else "raw (optimistic on ties)",
        "risk": "mean alpha*(1-1/rank) over accepted predictions",
        "auc": "trapezoid over the full coverage axis, first-point risk held below its coverage, x100",
        "tie_break": "confidence desc, then certainty desc (CEHis only); equal keys share a threshold",
        "effective_reliability": "maximum over realizable thresholds, abstain-all included",
        "history_windows": "latest entries of each key's sparse series",
    }


def run_metadata(config: RunConfig, dataset: TemporalDataset, extra: dict) -> dict:
    return {
        "package_version": __version__,
        "config": config.to_dict(),
        "dataset_counts": dataset.counts(),
        "conventions": conventions(config),
        **extra,
    }


def write_json(path: Path, data) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")

