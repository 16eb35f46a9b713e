from __future__ import annotations

import pytest

_RESULTS: list[str] = []


class Recorder:
    def __call__(self, criterion: int, ok: bool, detail: str) -> None:
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
        _RESULTS.append(line)
        print(line)
        assert ok, line


@pytest.fixture
def acceptance() -> Recorder:
    return Recorder()


def pytest_terminal_summary(terminalreporter):
    if _RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in _RESULTS:
            terminalreporter.write_line(line)
