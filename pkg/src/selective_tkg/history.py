"""Historical prediction accuracy per related-query key and its Hawkes-decayed score."""
from __future__ import annotations

import math
from bisect import bisect_left
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

from .data import ENTITY, MODES, Query, TemporalDataset, queries_in_range
from .errors import FormatError, TemporalLeakError, ValidationError
from .reasoner import PredictionRecord, Reasoner, batch_predict, history_before

KINDS = {
    ENTITY: ("subject", "relation", "subject-relation"),
    "relation": ("subject", "object", "subject-object"),
}
ABSOLUTE, RELATIVE = "absolute", "relative"


class RelatedKey(NamedTuple):
    kind: str
    ids: tuple[int, ...]


def related_keys(query: Query) -> tuple[RelatedKey, RelatedKey, RelatedKey]:
    """The three related-query keys of a query, in :data:`KINDS` order."""
    s = query.subject
    if query.mode == ENTITY:
        r = query.relation
        return (RelatedKey("subject", (s,)), RelatedKey("relation", (r,)),
                RelatedKey("subject-relation", (s, r)))
    o = query.object
    return (RelatedKey("subject", (s,)), RelatedKey("object", (o,)),
            RelatedKey("subject-object", (s, o)))


@dataclass(frozen=True)
class HawkesConfig:
    delta: float = 0.5
    short_window: int = 3
    long_window: int = 10
    time_mode: str = ABSOLUTE

    def __post_init__(self):
        if not self.delta >= 0:
            raise ValidationError("decay rate delta must be non-negative")
        if self.short_window < 1 or self.long_window < 1:
            raise ValidationError("window lengths must be positive")
        if self.time_mode not in (ABSOLUTE, RELATIVE):
            raise ValidationError(f"time_mode must be {ABSOLUTE!r} or {RELATIVE!r}")


class Series(NamedTuple):
    times: tuple[int, ...]
    accs: tuple[float, ...]
    counts: tuple[int, ...]


@dataclass(frozen=True)
class AccuracyStore:
    """Sparse per-key series of mean reciprocal-rank accuracy per timestamp.

    ``horizon`` is the exclusive upper bound on timestamps a scorer may see;
    :meth:`as_of` gives the rolling view used for a query at a given time.
    """

    mode: str
    built_range: tuple[int, int]
    series: dict[RelatedKey, Series] = field(repr=False)
    horizon: int | None = None

    def __post_init__(self):
        if self.horizon is None:
            object.__setattr__(self, "horizon", self.built_range[1] + 1)

    def __len__(self):
        return len(self.series)

    def as_of(self, t: int) -> "AccuracyStore":
        return replace(self, horizon=min(self.horizon, int(t)))

    def entries(self, key: RelatedKey) -> list[tuple[int, float]]:
        ser = self.series.get(key)
        if ser is None:
            return []
        k = bisect_left(ser.times, self.horizon)
        return list(zip(ser.times[:k], ser.accs[:k]))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# mode={self.mode}\tbuilt_range={self.built_range[0]},{self.built_range[1]}\n")
            fh.write("kind\tids\ttimestamp\tacc\tcount\n")
            for key in sorted(self.series):
                ser = self.series[key]
                ids = ",".join(map(str, key.ids))
                for t, acc, n in zip(*ser):
                    fh.write(f"{key.kind}\t{ids}\t{t}\t{acc!r}\t{n}\n")

    @classmethod
    def load(cls, path) -> "AccuracyStore":
        path = Path(path)
        rows: dict[RelatedKey, list] = defaultdict(list)
        with open(path, encoding="utf-8") as fh:
            meta = dict(item.split("=", 1) for item in fh.readline().lstrip("# ").strip().split("\t"))
            if fh.readline().strip().split("\t") != ["kind", "ids", "timestamp", "acc", "count"]:
                raise FormatError(f"{path}: unexpected store header")
            for line_no, line in enumerate(fh, 3):
                try:
                    kind, ids, t, acc, n = line.rstrip("\n").split("\t")
                    rows[RelatedKey(kind, tuple(int(i) for i in ids.split(",")))].append(
                        (int(t), float(acc), int(n)))
                except ValueError as exc:
                    raise FormatError(f"{path}:{line_no}: {exc}") from None
        lo, hi = (int(x) for x in meta["built_range"].split(","))
        series = {key: Series(*map(tuple, zip(*vals))) for key, vals in rows.items()}
        return cls(meta["mode"], (lo, hi), series)


def accuracy_store_from_records(records: Iterable[PredictionRecord], t_range: tuple[int, int],
                                mode: str) -> AccuracyStore:
    """Aggregate reciprocal ranks of predictions in ``t_range`` into per-key accuracy series."""
    if mode not in MODES:
        raise ValidationError(f"unknown mode {mode!r}")
    lo, hi = t_range
    sums: dict[RelatedKey, dict[int, list]] = defaultdict(dict)
    for rec in records:
        q = rec.query
        if q.mode != mode or not lo <= q.timestamp <= hi:
            continue
        rr = 1.0 / rec.gt_rank
        for key in related_keys(q):
            cell = sums[key].setdefault(q.timestamp, [0.0, 0])
            cell[0] += rr
            cell[1] += 1
    series = {}
    for key in sorted(sums):
        by_t = sums[key]
        times = tuple(sorted(by_t))
        series[key] = Series(times, tuple(by_t[t][0] / by_t[t][1] for t in times),
                             tuple(by_t[t][1] for t in times))
    return AccuracyStore(mode, (int(lo), int(hi)), series)


def build_accuracy_store(reasoner: Reasoner, dataset: TemporalDataset, t_range: tuple[int, int],
                         mode: str, workers: int = 1) -> AccuracyStore:
    """Roll forward over ``t_range``, predicting each query from strictly earlier history."""
    queries = queries_in_range(dataset, t_range[0], t_range[1], mode)
    records = batch_predict(reasoner, queries, history_before(dataset), workers=workers)
    return accuracy_store_from_records(records, t_range, mode)


def hawkes_score(series: Sequence[tuple[int, float]], t_q: int, config: HawkesConfig) -> float:
    """Base rate (mean of the latest ``long_window`` accuracies) plus the
    exponentially decayed latest ``short_window`` accuracies.

    In relative mode the elapsed time of an entry is its position counted
    back from the query (1 for the most recent entry). An empty series
    scores 0.
    """
    if not series:
        return 0.0
    if max(t for t, _ in series) >= t_q:
        raise TemporalLeakError(f"accuracy series reaches the query timestamp t={t_q}")
    excitation = 0.0
    for h, (t, acc) in enumerate(reversed(series[-config.short_window:])):
        elapsed = (t_q - t) if config.time_mode == ABSOLUTE else h + 1
        excitation += math.exp(-config.delta * elapsed) * acc
    return mean_score(series, config) + excitation


def mean_score(series: Sequence[tuple[int, float]], config: HawkesConfig) -> float:
    """Undecayed alternative: mean of the latest ``long_window`` accuracies (0 if empty)."""
    if not series:
        return 0.0
    long_part = series[-config.long_window:]
    return sum(acc for _, acc in long_part) / len(long_part)


def historical_score(store: AccuracyStore, query: Query, config: HawkesConfig,
                     use_hawkes: bool = True, masked_kinds: Iterable[str] = ()) -> float:
    """Sum of the per-key scores over the query's three related keys; missing keys add 0."""
    if store.horizon > query.timestamp:
        raise TemporalLeakError(
            f"accuracy store visible up to t={store.horizon - 1}, query at t={query.timestamp}"
        )
    if store.mode != query.mode:
        raise ValidationError(f"store built for {store.mode!r} mode, query is {query.mode!r}")
    masked = set(masked_kinds)
    total = 0.0
    for key in related_keys(query):
        if key.kind in masked:
            continue
        entries = store.entries(key)
        total += hawkes_score(entries, query.timestamp, config) if use_hawkes else mean_score(entries, config)
    return total
