import contextlib
import time

import pytest

_acceptance_key = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_acceptance_key] = []


@pytest.fixture
def criterion(request):
    """Context manager recording one acceptance criterion as PASS/FAIL."""
    log = request.config.stash[_acceptance_key]

    @contextlib.contextmanager
    def run(number, title):
        t0 = time.perf_counter()
        notes = []
        try:
            yield notes
        except BaseException:
            log.append((number, title, False, time.perf_counter() - t0, notes))
            raise
        log.append((number, title, True, time.perf_counter() - t0, notes))

    return run


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(_acceptance_key, [])
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, secs, notes in sorted(log, key=lambda r: r[0]):
        detail = "; ".join(notes)
        terminalreporter.write_line(
            f"[{'PASS' if ok else 'FAIL'}] {number}. {title} ({secs:.1f}s)"
            + (f" -- {detail}" if detail else ""))
