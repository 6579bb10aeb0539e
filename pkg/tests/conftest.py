import pytest

_CRITERIA: dict = {}


class CriterionLog:
    """Collects one verdict line per acceptance criterion for the terminal summary."""

    def record(self, number: int, title: str, passed: bool, detail: str = ""):
        previous = _CRITERIA.get(number)
        if previous is not None and not previous[1]:
            return
        _CRITERIA[number] = (title, passed, detail)


@pytest.fixture(scope="session")
def criteria():
    return CriterionLog()


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, passed, detail = _CRITERIA[number]
        line = f"[{'PASS' if passed else 'FAIL'}] {number:2d}. {title}"
        terminalreporter.write_line(line + (f"  ({detail})" if detail else ""))
