from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dynregime.generators.synthetic import SyntheticConfig, gen_synthetic  # noqa: E402


@pytest.fixture(scope="session")
def synthetic_ds():
    return gen_synthetic(SyntheticConfig())


@pytest.fixture(scope="session")
def small_synthetic_ds():
    return gen_synthetic(SyntheticConfig(nx=32, ny=32))


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import summary_lines

    lines = summary_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
