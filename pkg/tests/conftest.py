from __future__ import annotations

import pytest

from noisyosc.calibration import calibrate
from noisyosc.scenario import builtin


@pytest.fixture(scope="session")
def calibration_record():
    return calibrate([builtin("noisy_default")])


_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record and print one pass/fail line for an acceptance criterion."""

    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
        print(line)
        _VERDICTS.append(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
