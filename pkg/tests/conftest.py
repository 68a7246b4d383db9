from pathlib import Path

import numpy as np
import pytest

FIXTURES = Path(__file__).parent / "fixtures"

_acceptance_lines = []


def record_acceptance(label: str, passed: bool, detail: str = "") -> None:
    status = "PASS" if passed else "FAIL"
    _acceptance_lines.append(f"[{status}] {label}" + (f" -- {detail}" if detail else ""))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def fixtures_dir():
    return FIXTURES


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)
