import pytest

_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion and fail the test on FAIL."""

    def record(number, title, passed, detail):
        line = f"criterion {number:>3} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        _VERDICTS.append(line)
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: (int(s.split()[1].rstrip("abc")), s)):
            terminalreporter.write_line(line)
