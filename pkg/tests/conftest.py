import pytest

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def verdict(request):
    """Record and print one PASS/FAIL line, then assert it passed."""

    def record(name, ok, detail, elapsed, limit):
        ok = bool(ok) and elapsed < limit
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail} [{elapsed:.2f} s, limit {limit:g} s]"
        request.config.stash[_LINES].append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash[_LINES]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
