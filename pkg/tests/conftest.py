import pytest

_RESULTS = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def criterion(request):
    """Record one acceptance line; repeated at the end of the run."""
    lines = request.config.stash.setdefault(_RESULTS, [])

    def record(name: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
        print(line)
        lines.append(line)

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_RESULTS, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
