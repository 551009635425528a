import pytest

_ACCEPTANCE: list[tuple[tuple, str]] = []


@pytest.fixture
def criterion():
    """Record one acceptance line: call with (number or label, title, passed, detail)."""

    def record(key, title: str, passed: bool, detail: str) -> bool:
        name = f"criterion {key:>2}" if isinstance(key, int) else key
        line = f"[{'PASS' if passed else 'FAIL'}] {name}: {title} ({detail})"
        order = (0, key) if isinstance(key, int) else (1, 0)
        _ACCEPTANCE.append((order, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
