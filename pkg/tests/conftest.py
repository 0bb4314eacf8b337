import pytest

ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def acceptance():
    """report(n, passed, detail) records one summary line per acceptance criterion."""

    def report(n: int, passed: bool, detail: str) -> bool:
        ACCEPTANCE[n] = f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(ACCEPTANCE[n])
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
