import pytest

# (criterion number, passed, detail) recorded by tests/test_acceptance.py
CRITERIA = []


@pytest.fixture
def criterion():
    """Record one acceptance criterion outcome; the summary prints one line per call."""

    def record(number: int, passed: bool, detail: str):
        CRITERIA.append((number, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(CRITERIA, key=lambda c: c[0]):
        terminalreporter.write_line(
            f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
