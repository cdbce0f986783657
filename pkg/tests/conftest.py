import numpy as np
import pytest

_CRITERIA: dict[str, tuple[bool, str]] = {}


def record_criterion(number, passed: bool, detail: str) -> None:
    _CRITERIA[str(number)] = (bool(passed), detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")


@pytest.fixture
def criterion():
    return record_criterion


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        passed, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def unit_circle(count: int) -> np.ndarray:
    t = 2 * np.pi * np.arange(count) / count
    return np.column_stack([np.cos(t), np.sin(t)])
