import pytest

_RESULTS = {}


@pytest.fixture
def record():
    """Store a one-line PASS/FAIL verdict for an acceptance criterion."""
    def _record(key: str, passed: bool, detail: str) -> bool:
        _RESULTS[key] = (passed, detail)
        return passed
    return _record


def _order(key: str):
    num = "".join(ch for ch in key if ch.isdigit())
    return int(num or 0), key


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_RESULTS, key=_order):
        passed, detail = _RESULTS[key]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  criterion {key}: {detail}")
