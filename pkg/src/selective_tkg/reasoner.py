"""Base reasoning models: a common prediction interface, a recency-weighted
frequency baseline and a replay adapter for prediction dumps of external models."""
from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .data import ENTITY, MODES, Query, TemporalDataset
from .errors import (BatchPredictionError, DumpLookupError, FormatError,
                     TemporalLeakError, ValidationError)

PROB_TOL = 1e-9


@dataclass(frozen=True)
class PredictionRecord:
    query: Query
    gt_rank: int
    gt_prob: float
    max_prob: float
    entropy: float
    topk: tuple[tuple[int, float], ...] = ()
    filtered: bool = False

    @property
    def reciprocal_rank(self) -> float:
        return 1.0 / self.gt_rank

    def validate(self) -> "PredictionRecord":
        if int(self.gt_rank) != self.gt_rank or self.gt_rank < 1:
            raise ValidationError(f"{self.query}: gt_rank must be a positive integer, got {self.gt_rank}")
        for name in ("gt_prob", "max_prob"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"{self.query}: {name}={value} outside [0, 1]")
        if self.gt_prob > self.max_prob + PROB_TOL:
            raise ValidationError(f"{self.query}: gt_prob exceeds max_prob")
        if not self.filtered and self.gt_rank == 1 and abs(self.gt_prob - self.max_prob) > PROB_TOL:
            raise ValidationError(f"{self.query}: rank-1 answer must carry the maximum probability")
        if not self.entropy >= 0.0:
            raise ValidationError(f"{self.query}: entropy must be non-negative, got {self.entropy}")
        probs = [p for _, p in self.topk]
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ValidationError(f"{self.query}: top-k probability outside [0, 1]")
        if any(a < b for a, b in zip(probs, probs[1:])):
            raise ValidationError(f"{self.query}: top-k probabilities must be descending")
        if sum(probs) > 1.0 + 1e-6:
            raise ValidationError(f"{self.query}: top-k probabilities sum above 1")
        return self


@dataclass(frozen=True)
class History:
    """Everything a reasoner may see for a query: the snapshots of ``dataset`` strictly before ``end``."""

    dataset: TemporalDataset
    end: int

    def facts(self) -> np.ndarray:
        return self.dataset.facts_before(self.end)


def history_before(dataset: TemporalDataset) -> Callable[[Query], History]:
    """History provider giving each query all snapshots before its own timestamp."""
    return lambda query: History(dataset, query.timestamp)


def check_causal(query: Query, history: History | None) -> None:
    if history is not None and history.end > query.timestamp:
        raise TemporalLeakError(
            f"history up to t={history.end - 1} reaches the query timestamp t={query.timestamp}"
        )


class Reasoner:
    """Interface of a base TKG model ``f``."""

    name = "reasoner"

    def predict(self, query: Query, history: History | None) -> PredictionRecord:
        raise NotImplementedError


def record_from_scores(query: Query, scores: np.ndarray, topk: int = 0,
                       exclude: Iterable[int] = ()) -> PredictionRecord:
    """Summarize a positive candidate score vector into a :class:`PredictionRecord`.

    The rank is optimistic and raw: one plus the number of candidates scored
    strictly higher than the ground truth. Candidates in ``exclude`` (other
    true answers, for time-aware filtering) are left out of that count.
    """
    scores = np.asarray(scores, dtype=np.float64)
    gt = query.answer
    gt_score = scores[gt]
    higher = scores > gt_score
    excluded = [c for c in exclude if c != gt]
    if excluded:
        higher[excluded] = False
    probs = scores / scores.sum()
    nz = probs[probs > 0]
    top = ()
    if topk:
        order = np.lexsort((np.arange(len(probs)), -probs))[:topk]
        top = tuple((int(i), float(probs[i])) for i in order)
    return PredictionRecord(
        query=query,
        gt_rank=int(higher.sum()) + 1,
        gt_prob=float(probs[gt]),
        max_prob=float(probs.max()),
        entropy=float(max(0.0, -(nz * np.log(nz)).sum())),
        topk=top,
        filtered=bool(excluded),
    )


@dataclass(frozen=True)
class ReasonerConfig:
    decay_lambda: float = 0.1
    smoothing: float = 0.01
    backoff_weight: float = 0.3
    filtered: bool = False
    topk: int = 0

    def __post_init__(self):
        if self.decay_lambda < 0:
            raise ValidationError("decay_lambda must be non-negative")
        if not self.smoothing > 0:
            raise ValidationError("smoothing must be positive")
        if not 0.0 <= self.backoff_weight <= 1.0:
            raise ValidationError("backoff_weight must lie in [0, 1]")


class _GroupIndex:
    """Facts grouped by an integer key, each group sorted by time."""

    def __init__(self, keys: np.ndarray, times: np.ndarray, cands: np.ndarray):
        order = np.lexsort((times, keys))
        self.times = times[order]
        self.cands = cands[order]
        sorted_keys = keys[order]
        uniq, starts = np.unique(sorted_keys, return_index=True)
        ends = np.append(starts[1:], len(sorted_keys))
        self.groups = dict(zip(uniq.tolist(), zip(starts.tolist(), ends.tolist())))

    def before(self, key: int, end: int) -> tuple[np.ndarray, np.ndarray]:
        span = self.groups.get(key)
        if span is None:
            return self.times[:0], self.cands[:0]
        a, b = span
        k = a + int(np.searchsorted(self.times[a:b], end, side="left"))
        return self.times[a:k], self.cands[a:k]


class FrequencyReasoner(Reasoner):
    """Recency-weighted copy baseline.

    A candidate's score is the exponentially time-decayed number of past facts
    sharing the query's (subject, relation) [entity mode] or (subject, object)
    [relation mode] that point to it, mixed with the subject-only count
    through ``backoff_weight``, plus ``smoothing``.
    """

    name = "frequency"

    def __init__(self, config: ReasonerConfig | None = None):
        self.config = config or ReasonerConfig()
        self._indexes: dict[tuple[int, str], tuple[TemporalDataset, _GroupIndex, _GroupIndex]] = {}
        self._lock = threading.Lock()

    def _index(self, dataset: TemporalDataset, mode: str):
        key = (id(dataset), mode)
        cached = self._indexes.get(key)
        if cached is None:
            with self._lock:
                cached = self._indexes.get(key)
                if cached is None:
                    facts = dataset._all_facts
                    s, r, o, t = facts.T
                    if mode == ENTITY:
                        pair = _GroupIndex(s * dataset.n_relations + r, t, o)
                    else:
                        pair = _GroupIndex(s * dataset.n_entities + o, t, r)
                    subj = _GroupIndex(s, t, o if mode == ENTITY else r)
                    cached = (dataset, pair, subj)
                    self._indexes[key] = cached
        return cached[1], cached[2]

    def scores(self, query: Query, history: History) -> np.ndarray:
        check_causal(query, history)
        cfg = self.config
        dataset = history.dataset
        n = dataset.answer_space(query.mode)
        pair_idx, subj_idx = self._index(dataset, query.mode)
        if query.mode == ENTITY:
            pair_key = query.subject * dataset.n_relations + query.relation
        else:
            pair_key = query.subject * dataset.n_entities + query.object
        scores = np.full(n, cfg.smoothing)
        for weight, index, key in ((1.0 - cfg.backoff_weight, pair_idx, pair_key),
                                   (cfg.backoff_weight, subj_idx, query.subject)):
            if weight == 0.0:
                continue
            times, cands = index.before(key, history.end)
            if len(times):
                decay = np.exp(-cfg.decay_lambda * (query.timestamp - times))
                scores += weight * np.bincount(cands, weights=decay, minlength=n)
        return scores

    def predict(self, query: Query, history: History | None) -> PredictionRecord:
        if history is None:
            raise ValidationError("the frequency baseline needs a history")
        scores = self.scores(query, history)
        exclude = self._true_answers(query, history.dataset) if self.config.filtered else ()
        return record_from_scores(query, scores, self.config.topk, exclude)

    @staticmethod
    def _true_answers(query: Query, dataset: TemporalDataset) -> list[int]:
        # time-aware filter: other answers that are true at the query timestamp
        snap = dataset.snapshot(query.timestamp)
        if query.mode == ENTITY:
            hit = (snap[:, 0] == query.subject) & (snap[:, 1] == query.relation)
            return snap[hit, 2].tolist()
        hit = (snap[:, 0] == query.subject) & (snap[:, 2] == query.object)
        return snap[hit, 1].tolist()


DUMP_COLUMNS = ("mode", "subject", "relation", "object", "timestamp",
                "gt_rank", "gt_prob", "max_prob", "entropy", "topk")


class DumpReasoner(Reasoner):
    """Replays predictions exported from an external model, keyed by query fact."""

    name = "dump"

    def __init__(self, records: Iterable[PredictionRecord]):
        self.records: dict[tuple, PredictionRecord] = {}
        for rec in records:
            key = rec.query.key
            if key in self.records:
                raise FormatError(f"duplicate prediction for query {key}")
            self.records[key] = rec.validate()

    def __len__(self):
        return len(self.records)

    def __contains__(self, query: Query) -> bool:
        return query.key in self.records

    def predict(self, query: Query, history: History | None = None) -> PredictionRecord:
        check_causal(query, history)
        try:
            rec = self.records[query.key]
        except KeyError:
            raise DumpLookupError(f"no stored prediction for query {query.key}") from None
        return rec if rec.query == query else replace(rec, query=query)


def _format_float(x: float) -> str:
    return repr(float(x))


def write_dump(records: Iterable[PredictionRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(DUMP_COLUMNS) + "\n")
        for rec in records:
            s, r, o, t = rec.query.fact
            topk = ";".join(f"{i}:{_format_float(p)}" for i, p in rec.topk)
            fh.write("\t".join([rec.query.mode, str(s), str(r), str(o), str(t), str(rec.gt_rank),
                                _format_float(rec.gt_prob), _format_float(rec.max_prob),
                                _format_float(rec.entropy), topk]) + "\n")


def read_dump(path) -> list[PredictionRecord]:
    path = Path(path)
    records = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n\r").split("\t")
        if tuple(header[: len(DUMP_COLUMNS) - 1]) != DUMP_COLUMNS[:-1]:
            raise FormatError(f"{path}: header must be {' '.join(DUMP_COLUMNS)}")
        for line_no, line in enumerate(fh, 2):
            line = line.rstrip("\n\r")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) == len(DUMP_COLUMNS) - 1:
                cols.append("")
            if len(cols) != len(DUMP_COLUMNS):
                raise FormatError(f"{path}:{line_no}: expected {len(DUMP_COLUMNS)} columns")
            mode = cols[0]
            if mode not in MODES:
                raise FormatError(f"{path}:{line_no}: unknown mode {mode!r}")
            try:
                s, r, o, t, rank = (int(c) for c in cols[1:6])
                gt_prob, max_prob, entropy = (float(c) for c in cols[6:9])
                topk = tuple((int(i), float(p)) for i, p in
                             (item.split(":") for item in cols[9].split(";") if item))
            except ValueError as exc:
                raise FormatError(f"{path}:{line_no}: {exc}") from None
            if mode == ENTITY:
                query = Query(mode, s, r, None, t, o)
            else:
                query = Query(mode, s, None, o, t, r)
            records.append(PredictionRecord(query, rank, gt_prob, max_prob, entropy, topk))
    return records


def load_external_dump(path) -> DumpReasoner:
    return DumpReasoner(read_dump(path))


def batch_predict(reasoner: Reasoner, queries: Sequence[Query],
                  history_provider: Callable[[Query], History | None],
                  workers: int = 1) -> list[PredictionRecord]:
    """Predict every query; output order always equals input order."""

    def one(item):
        i, query = item
        try:
            return reasoner.predict(query, history_provider(query))
        except Exception as exc:
            raise BatchPredictionError(i, exc) from exc

    items = list(enumerate(queries))
    if workers <= 1 or len(items) < 2:
        return [one(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, items, chunksize=max(1, len(items) // (4 * workers))))
