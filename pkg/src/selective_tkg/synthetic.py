"""Seeded synthetic corpora with planted recurring facts."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .data import ENTITY, Query, TemporalDataset
from .errors import ValidationError
from .reasoner import PredictionRecord


@dataclass(frozen=True)
class SyntheticParams:
    """Generator knobs.

    Every pattern ``(s, r, o)`` is re-emitted at each timestamp with
    probability ``recurrence_prob``; otherwise, with probability
    ``noise_prob``, a noise fact keeps the pattern's subject and relation
    but points to a uniformly drawn object. Independently, a pattern's
    object is replaced by a fresh random entity with a pattern-specific
    probability drawn uniformly from ``[0, 2 * drift_prob]``, so keys differ
    in how stable (and therefore how predictable) their history is.
    """

    n_entities: int = 300
    n_relations: int = 4
    n_timestamps: int = 60
    recurrence_prob: float = 0.8
    noise_prob: float = 0.2
    n_patterns: int = 1200
    drift_prob: float = 0.1
    valid_fraction: float = 0.15
    test_fraction: float = 0.15
    granularity: int = 24

    def validate(self) -> None:
        for name in ("n_entities", "n_relations", "n_timestamps", "n_patterns", "granularity"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        for name in ("recurrence_prob", "noise_prob", "drift_prob", "valid_fraction", "test_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1]")
        if self.valid_fraction + self.test_fraction >= 1.0:
            raise ValidationError("valid_fraction + test_fraction must leave room for training")

    def to_dict(self) -> dict:
        return asdict(self)


def _split_bounds(n_timestamps: int, valid_fraction: float, test_fraction: float) -> dict[str, range]:
    n_test = max(1, round(n_timestamps * test_fraction))
    n_valid = max(1, round(n_timestamps * valid_fraction))
    n_train = n_timestamps - n_valid - n_test
    if n_train < 1:
        raise ValidationError("too few timestamps for three non-empty splits")
    return {
        "train": range(0, n_train),
        "valid": range(n_train, n_train + n_valid),
        "test": range(n_train + n_valid, n_timestamps),
    }


def generate_synthetic(seed: int, params: SyntheticParams | None = None, **overrides) -> TemporalDataset:
    """Deterministic planted-recurrence corpus for a given seed."""
    params = params or SyntheticParams()
    if overrides:
        params = SyntheticParams(**{**params.to_dict(), **overrides})
    params.validate()
    rng = np.random.default_rng(seed)
    n_ent, n_pat = params.n_entities, params.n_patterns
    subj = rng.integers(n_ent, size=n_pat)
    rel = rng.integers(params.n_relations, size=n_pat)
    obj = rng.integers(n_ent, size=n_pat)
    drift = np.minimum(1.0, 2.0 * params.drift_prob * rng.random(n_pat))

    rows = []
    for t in range(params.n_timestamps):
        # fixed number of draws per step keeps streams aligned across parameter values
        u_rec, u_noise, u_drift = rng.random(n_pat), rng.random(n_pat), rng.random(n_pat)
        noise_obj = rng.integers(n_ent, size=n_pat)
        new_obj = rng.integers(n_ent, size=n_pat)
        emit = u_rec < params.recurrence_prob
        noise = ~emit & (u_noise < params.noise_prob)
        keep = emit | noise
        objects = np.where(emit, obj, noise_obj)
        rows.append(np.column_stack([subj[keep], rel[keep], objects[keep],
                                     np.full(int(keep.sum()), t)]))
        switch = u_drift < drift
        obj = np.where(switch, new_obj, obj)
    facts = np.concatenate(rows).astype(np.int64)

    split_facts = {}
    for name, span in _split_bounds(params.n_timestamps, params.valid_fraction,
                                    params.test_fraction).items():
        part = facts[(facts[:, 3] >= span.start) & (facts[:, 3] < span.stop)]
        if len(part) == 0:
            raise ValidationError(f"generated split {name!r} is empty; raise recurrence_prob or n_patterns")
        split_facts[name] = part
    entities = tuple(f"e{i}" for i in range(n_ent))
    relations = tuple(f"r{i}" for i in range(params.n_relations))
    return TemporalDataset(entities, relations, split_facts, granularity=params.granularity)


def planted_signal_case(signal: str, seed: int, n_subjects: int = 60, n_timestamps: int = 30,
                        max_rank: int = 20):
    """Corpus plus replayable predictions in which exactly one confidence signal is informative.

    Every subject appears once per timestamp under a single relation. With
    ``signal="history"`` each subject has a fixed ground-truth rank over time
    (so its historical accuracy predicts the current rank) while the maximum
    probability is uniform noise. With ``signal="certainty"`` ranks are drawn
    independently per query and the maximum probability is a strictly
    decreasing function of the rank.

    Returns ``(dataset, records)`` for entity mode without inverse facts.
    """
    if signal not in ("history", "certainty"):
        raise ValidationError(f"signal must be 'history' or 'certainty', got {signal!r}")
    rng = np.random.default_rng(seed)
    n_ent = n_subjects + max_rank
    subject_rank = rng.integers(1, max_rank + 1, size=n_subjects)
    facts, records = [], []
    for t in range(n_timestamps):
        objects = rng.integers(n_ent, size=n_subjects)
        u = rng.random((n_subjects, 3))
        fresh_rank = rng.integers(1, max_rank + 1, size=n_subjects)
        for s in range(n_subjects):
            o = int(objects[s])
            facts.append((s, 0, o, t))
            if signal == "history":
                rank = int(subject_rank[s])
                max_prob = 0.05 + 0.95 * u[s, 0]
            else:
                rank = int(fresh_rank[s])
                max_prob = 1.0 / (rank + 0.5 * u[s, 0])
            gt_prob = max_prob if rank == 1 else max_prob * (0.1 + 0.8 * u[s, 1])
            entropy = 0.1 + 3.0 * u[s, 2]
            records.append(PredictionRecord(Query(ENTITY, s, 0, None, t, o),
                                            rank, gt_prob, max_prob, entropy))
    facts = np.array(facts, dtype=np.int64)
    split_facts = {name: facts[(facts[:, 3] >= span.start) & (facts[:, 3] < span.stop)]
                   for name, span in _split_bounds(n_timestamps, 0.3, 0.3).items()}
    dataset = TemporalDataset(tuple(f"e{i}" for i in range(n_ent)), ("r0",), split_facts)
    return dataset, records
