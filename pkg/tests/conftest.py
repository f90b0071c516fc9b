import numpy as np
import pytest

from selective_tkg.data import TemporalDataset
from selective_tkg.synthetic import generate_synthetic


def make_dataset(facts, n_entities, n_relations, splits=None, augment=False):
    """Dataset from ``(s, r, o, t)`` rows; ``splits`` maps split name to a timestamp predicate."""
    facts = np.asarray(facts, dtype=np.int64).reshape(-1, 4)
    if splits is None:
        split_facts = {"train": facts}
    else:
        split_facts = {name: facts[[pred(t) for t in facts[:, 3]]] for name, pred in splits.items()}
    return TemporalDataset(tuple(f"e{i}" for i in range(n_entities)),
                           tuple(f"r{i}" for i in range(n_relations)),
                           split_facts, inverse_augmented=augment)


@pytest.fixture(scope="session")
def small_synthetic():
    return generate_synthetic(3, n_entities=40, n_relations=3, n_timestamps=24, n_patterns=80)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL/SKIP line for an acceptance criterion."""

    def record(number, status, detail):
        ACCEPTANCE_LINES.append(f"criterion {number}: {status} - {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
