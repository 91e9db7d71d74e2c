import pytest

_VERDICTS: list[tuple[str, bool, str]] = []


class Verdicts:
    """Records one pass/fail line per acceptance criterion."""

    def record(self, name: str, ok: bool, detail: str = "") -> bool:
        _VERDICTS.append((name, ok, detail))
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        return ok


@pytest.fixture(scope="session")
def verdicts():
    return Verdicts()


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _VERDICTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
