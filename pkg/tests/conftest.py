import pytest

_VERDICTS: dict[int, str] = {}


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion."""
    def record(n: int, ok: bool, detail: str, soft: bool = False) -> None:
        tag = "PASS" if ok else ("FAIL (soft)" if soft else "FAIL")
        line = f"criterion {n:2d}: {tag}  {detail}"
        _VERDICTS[n] = line
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[n])
