import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mcsched.core import SystemState  # noqa: E402


def random_state(rng, n, L=1, slots=4, p=0.5, max_backlog=None):
    """A state reached by random arrivals with no service."""
    s = SystemState(n, L)
    for _ in range(slots):
        counts = np.where(rng.random(n) < p, rng.integers(1, L + 1, n), 0)
        if max_backlog is not None:
            room = max_backlog - s.backlog
            for i in range(n):
                c = min(int(counts[i]), max(room, 0))
                counts[i] = c
                room -= c
        s.apply_arrivals(counts)
        s.advance_slot()
    return s


def random_conn(rng, n, q=0.5):
    return rng.random((n, n)) < q


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    def check(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, detail
    return check


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
