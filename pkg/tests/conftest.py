import numpy as np
import pytest

from ncmcast.model import Packet, QueueSystem

ACCEPTANCE_LINES = []


def make_state(Q, n=3, ages=None, slot=0):
    """QueueSystem with Q[i] packets in sub-queue i; the head of i has age ages[i]."""
    q = QueueSystem(n)
    pid = 0
    for i, k in enumerate(Q):
        for r in range(k):
            pid += 1
            arrival = slot - (ages[i] if ages is not None and r == 0 else 0)
            q.enqueue(Packet(pid, arrival), i)
    return q


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
