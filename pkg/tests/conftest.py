import pytest

_LINES = pytest.StashKey[dict]()


@pytest.fixture
def report(request):
    """Record the one-line verdict for an acceptance criterion."""
    lines = request.config.stash.setdefault(_LINES, {})

    def record(key, passed: bool, detail: str):
        lines[key] = f"criterion {key}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(lines[key])
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines, key=lambda k: (int(str(k).rstrip("ab")), str(k))):
            terminalreporter.write_line(lines[key])
