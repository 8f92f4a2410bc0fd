from pathlib import Path

import pytest

FIXTURES = Path(__file__).resolve().parent / "fixtures"


@pytest.fixture
def fixtures():
    return FIXTURES


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion; see the terminal summary."""
    log = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        log.append((number, line))
        print(line)
        return ok

    return record


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(_ACCEPTANCE, [])
    if log:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(log):
            terminalreporter.write_line(line)
