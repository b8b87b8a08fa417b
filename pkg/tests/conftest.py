import pytest

_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record ``CRITERION n: PASS|FAIL`` for the terminal summary and return the flag."""

    def record(number: int, title: str, passed: bool, detail: str = "") -> bool:
        line = f"CRITERION {number:>2} {'PASS' if passed else 'FAIL'}  {title}"
        if detail:
            line += f"  [{detail}]"
        _VERDICTS.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_VERDICTS, key=lambda s: int(s.split()[1])):
        terminalreporter.write_line(line)
