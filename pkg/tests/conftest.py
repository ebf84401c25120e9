import time
from contextlib import contextmanager

import pytest

# criterion number -> (title, passed, seconds, note)
ACCEPTANCE = {}


@contextmanager
def criterion(number, title, budget):
    """Time one acceptance criterion and record its PASS/FAIL line."""
    start = time.perf_counter()
    notes = []
    try:
        yield notes
    except BaseException:
        ACCEPTANCE[number] = (title, False, time.perf_counter() - start, "; ".join(notes) or "assertion failed")
        raise
    elapsed = time.perf_counter() - start
    ok = elapsed < budget
    note = "; ".join(notes)
    if not ok:
        note = (note + "; " if note else "") + f"over budget {budget:g} s"
    ACCEPTANCE[number] = (title, ok, elapsed, note)
    assert ok, f"criterion {number} took {elapsed:.2f} s (budget {budget:g} s)"


@pytest.fixture
def acceptance():
    return criterion


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, elapsed, note = ACCEPTANCE[number]
        line = f"{'PASS' if ok else 'FAIL'}  [{number}] {title} ({elapsed:.2f} s)"
        if note:
            line += f"  {note}"
        tr.write_line(line)
