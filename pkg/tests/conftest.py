import pytest

_ACCEPTANCE = []


@pytest.fixture
def acceptance_log():
    """Record one pass/fail line per acceptance criterion."""
    def log(number, title, ok, detail):
        line = f"ACCEPTANCE {number:>2} {title}: {'PASS' if ok else 'FAIL'} ({detail})"
        _ACCEPTANCE.append((number, line))
        print(line)
        return ok
    return log


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)
