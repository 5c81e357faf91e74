import numpy as np
import pytest

from lhvtele.lhv import LhvRecord


class ScriptedStream:
    """Stand-in for ``LhvStream`` that serves hand-written records."""

    def __init__(self, records, seed=0):
        self.records = list(records)
        self.seed = seed
        self.cursor = 1

    def record(self, k):
        return self.records[k - 1]

    def next_record(self):
        rec = self.record(self.cursor)
        self.cursor += 1
        return rec


def rec(triplet, u):
    return LhvRecord(triplet=np.asarray(triplet, dtype=float), u=float(u))


X, Y, Z = np.eye(3)


@pytest.fixture
def rng():
    return np.random.default_rng(20260418)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
