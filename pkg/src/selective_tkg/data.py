"""Temporal knowledge graph corpora: loading, indexing, query derivation, synthesis."""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ParseError, ValidationError

SPLITS = ("train", "valid", "test")
ENTITY, RELATION = "entity", "relation"
MODES = (ENTITY, RELATION)


class Quadruple(NamedTuple):
    subject: int
    relation: int
    object: int
    timestamp: int


class Query(NamedTuple):
    """One prediction task derived from a fact.

    In entity mode ``object`` is hidden (None) and ``answer`` is the object id;
    in relation mode ``relation`` is hidden and ``answer`` is the relation id.
    """

    mode: str
    subject: int
    relation: int | None
    object: int | None
    timestamp: int
    answer: int

    @property
    def fact(self) -> tuple[int, int, int, int]:
        if self.mode == ENTITY:
            return (self.subject, self.relation, self.answer, self.timestamp)
        return (self.subject, self.answer, self.object, self.timestamp)

    @property
    def key(self) -> tuple:
        """Lookup key shared with prediction dumps: (mode, s, r, o, t) with the answer filled in."""
        return (self.mode, *self.fact)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TemporalDataset:
    """Immutable, time-ordered collection of fact snapshots.

    ``split_facts`` keeps the original (non-inverse) facts of each split in file
    order with normalized timestamps; ``snapshots`` maps each normalized
    timestamp to an ``(n, 3)`` array of ``(s, r, o)`` rows, inverse facts
    appended after the originals when the dataset is augmented.
    """

    entities: tuple[str, ...]
    relations: tuple[str, ...]
    split_facts: dict[str, np.ndarray]
    granularity: int = 1
    origin: int = 0
    inverse_augmented: bool = False
    snapshots: dict[int, np.ndarray] = field(init=False)
    splits: dict[str, tuple[int, int]] = field(init=False)

    def __post_init__(self):
        n_ent, n_rel = len(self.entities), len(self.relations)
        if n_ent == 0 or n_rel == 0:
            raise ValidationError("dataset needs at least one entity and one relation")
        unknown = set(self.split_facts) - set(SPLITS)
        if unknown or "train" not in self.split_facts:
            raise ValidationError(f"splits must include 'train' and be among {SPLITS}")
        bounds = {}
        for name in self.split_names:
            facts = self.split_facts[name]
            if len(facts) == 0:
                raise ValidationError(f"split {name!r} is empty")
            if facts.ndim != 2 or facts.shape[1] != 4:
                raise ValidationError(f"split {name!r} must be an (n, 4) array")
            s, r, o, t = facts.T
            if s.min() < 0 or o.min() < 0 or max(s.max(), o.max()) >= n_ent:
                raise ValidationError(f"split {name!r}: entity id outside [0, {n_ent})")
            if r.min() < 0 or r.max() >= n_rel:
                raise ValidationError(f"split {name!r}: relation id outside [0, {n_rel})")
            if t.min() < 0:
                raise ValidationError(f"split {name!r}: negative timestamp")
            bounds[name] = (int(t.min()), int(t.max()))
        present = self.split_names
        for earlier, later in zip(present, present[1:]):
            if bounds[earlier][1] >= bounds[later][0]:
                raise ValidationError(
                    f"split {earlier!r} (ends at t={bounds[earlier][1]}) overlaps "
                    f"split {later!r} (starts at t={bounds[later][0]})"
                )

        snapshots = {}
        for name in present:
            facts = self.split_facts[name]
            order = np.argsort(facts[:, 3], kind="stable")
            ordered = facts[order]
            ts, starts = np.unique(ordered[:, 3], return_index=True)
            for t, chunk in zip(ts, np.split(ordered[:, :3], starts[1:])):
                if self.inverse_augmented:
                    inv = np.stack([chunk[:, 2], chunk[:, 1] + n_rel, chunk[:, 0]], axis=1)
                    chunk = np.concatenate([chunk, inv])
                snapshots[int(t)] = _freeze(np.ascontiguousarray(chunk, dtype=np.int64))
        for facts in self.split_facts.values():
            _freeze(facts)
        object.__setattr__(self, "snapshots", snapshots)
        object.__setattr__(self, "splits", bounds)

    @property
    def split_names(self) -> tuple[str, ...]:
        return tuple(name for name in SPLITS if name in self.split_facts)

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        """Number of relations in the answer space (doubled under inverse augmentation)."""
        return len(self.relations) * (2 if self.inverse_augmented else 1)

    @property
    def n_base_relations(self) -> int:
        return len(self.relations)

    @cached_property
    def timestamps(self) -> np.ndarray:
        return _freeze(np.array(sorted(self.snapshots), dtype=np.int64))

    def answer_space(self, mode: str) -> int:
        return self.n_entities if mode == ENTITY else self.n_relations

    def split_timestamps(self, name: str) -> np.ndarray:
        lo, hi = self.splits[name]
        ts = self.timestamps
        return ts[(ts >= lo) & (ts <= hi)]

    def counts(self) -> dict[str, int]:
        out = {f"n_{name}": len(self.split_facts.get(name, ())) for name in SPLITS}
        out["n_entities"] = self.n_entities
        out["n_relations"] = self.n_base_relations
        out["n_timestamps"] = len(self.snapshots)
        return out

    def snapshot(self, t: int) -> np.ndarray:
        return self.snapshots.get(int(t), _EMPTY)

    def with_inverse(self, enabled: bool = True) -> "TemporalDataset":
        if enabled == self.inverse_augmented:
            return self
        return TemporalDataset(
            self.entities, self.relations, dict(self.split_facts),
            granularity=self.granularity, origin=self.origin, inverse_augmented=enabled,
        )

    def replace_split(self, name: str, facts: np.ndarray) -> "TemporalDataset":
        split_facts = dict(self.split_facts)
        split_facts[name] = np.asarray(facts, dtype=np.int64)
        return TemporalDataset(
            self.entities, self.relations, split_facts,
            granularity=self.granularity, origin=self.origin,
            inverse_augmented=self.inverse_augmented,
        )

    @cached_property
    def _all_facts(self) -> np.ndarray:
        """All snapshot rows as ``(s, r, o, t)``, sorted by time (stable)."""
        chunks = [np.column_stack([self.snapshots[t], np.full(len(self.snapshots[t]), t)])
                  for t in self.timestamps]
        return _freeze(np.concatenate(chunks).astype(np.int64))

    def facts_before(self, t: int) -> np.ndarray:
        facts = self._all_facts
        return facts[: np.searchsorted(facts[:, 3], t, side="left")]


_EMPTY = _freeze(np.zeros((0, 3), dtype=np.int64))


def _read_id_map(path: Path) -> tuple[str, ...]:
    names: dict[int, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.rstrip("\n\r")
            if not line.strip():
                continue
            parts = line.rsplit("\t", 1)
            if len(parts) != 2:
                # OpenKE-style files start with a bare count line
                if line_no == 1 and line.strip().isdigit():
                    continue
                raise ParseError(path, line_no, "expected 'name<TAB>id'")
            name, raw_id = parts
            try:
                idx = int(raw_id)
            except ValueError:
                raise ParseError(path, line_no, f"non-integer id {raw_id!r}") from None
            if idx < 0 or idx in names:
                raise ParseError(path, line_no, f"negative or duplicate id {idx}")
            names[idx] = name
    if not names:
        raise ValidationError(f"{path}: empty id map")
    if sorted(names) != list(range(len(names))):
        raise ValidationError(f"{path}: ids are not contiguous from 0")
    return tuple(names[i] for i in range(len(names)))


def _read_facts(path: Path) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.split()
            # some TKG releases carry a fifth, unused column
            if len(parts) not in (4, 5):
                raise ParseError(path, line_no, f"expected 4 columns (s r o t), got {len(parts)}")
            try:
                rows.append([int(p) for p in parts[:4]])
            except ValueError:
                raise ParseError(path, line_no, "non-integer field") from None
    return np.array(rows, dtype=np.int64).reshape(-1, 4)


def infer_granularity(raw_times: np.ndarray) -> int:
    uniq = np.unique(raw_times)
    if len(uniq) < 2:
        return 1
    return int(np.diff(uniq).min())


def load_dataset(dir_path, inverse_augment: bool = False, granularity: int | None = None) -> TemporalDataset:
    """Load ``train/valid/test.txt`` (valid/test may be absent) plus ``entity2id.txt``/``relation2id.txt`` from a directory.

    Raw timestamps are mapped to dense indices ``(t - t_min) // granularity``,
    where the granularity defaults to the smallest positive gap between
    distinct timestamps.
    """
    root = Path(dir_path)
    entities = _read_id_map(root / "entity2id.txt")
    relations = _read_id_map(root / "relation2id.txt")
    if not (root / "train.txt").exists():
        raise ValidationError(f"{root}: missing train.txt")
    raw = {name: _read_facts(root / f"{name}.txt") for name in SPLITS
           if (root / f"{name}.txt").exists()}
    for name, facts in raw.items():
        if len(facts) == 0:
            raise ValidationError(f"split {name!r} is empty")

    all_times = np.concatenate([f[:, 3] for f in raw.values()])
    origin = int(all_times.min())
    gran = granularity or infer_granularity(all_times)
    if np.any((all_times - origin) % gran):
        raise ValidationError(f"timestamps are not multiples of the granularity {gran}")
    split_facts = {}
    for name, facts in raw.items():
        facts = facts.copy()
        facts[:, 3] = (facts[:, 3] - origin) // gran
        split_facts[name] = facts
    return TemporalDataset(entities, relations, split_facts,
                           granularity=gran, origin=origin, inverse_augmented=inverse_augment)


def write_dataset(dataset: TemporalDataset, dir_path) -> None:
    """Write the original facts and id maps in the on-disk format read by :func:`load_dataset`."""
    root = Path(dir_path)
    root.mkdir(parents=True, exist_ok=True)
    for fname, names in (("entity2id.txt", dataset.entities), ("relation2id.txt", dataset.relations)):
        with open(root / fname, "w", encoding="utf-8") as fh:
            fh.writelines(f"{name}\t{i}\n" for i, name in enumerate(names))
    for name in dataset.split_names:
        facts = dataset.split_facts[name]
        with open(root / f"{name}.txt", "w", encoding="utf-8") as fh:
            for s, r, o, t in facts.tolist():
                fh.write(f"{s}\t{r}\t{o}\t{t * dataset.granularity + dataset.origin}\n")


def queries_at(dataset: TemporalDataset, t: int, mode: str) -> list[Query]:
    """All queries whose facts occur at snapshot ``t``, in snapshot order."""
    if mode not in MODES:
        raise ValidationError(f"unknown mode {mode!r}")
    t = int(t)
    rows = dataset.snapshot(t).tolist()
    if mode == ENTITY:
        return [Query(ENTITY, s, r, None, t, o) for s, r, o in rows]
    return [Query(RELATION, s, None, o, t, r) for s, r, o in rows]


def queries_in_range(dataset: TemporalDataset, t_start: int, t_end: int, mode: str) -> list[Query]:
    out: list[Query] = []
    for t in dataset.timestamps:
        if t_start <= t <= t_end:
            out.extend(queries_at(dataset, int(t), mode))
    return out


def split_queries(dataset: TemporalDataset, split: str, mode: str) -> list[Query]:
    return queries_in_range(dataset, *dataset.splits[split], mode)


def load_dataset_env(name: str) -> Path | None:
    """Directory of a real benchmark corpus if ``SELECTIVE_TKG_DATA`` (or ./data) provides it."""
    for base in (os.environ.get("SELECTIVE_TKG_DATA"), "data"):
        if base and (Path(base) / name / "train.txt").exists():
            return Path(base) / name
    return None
