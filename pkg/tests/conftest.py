from __future__ import annotations

import math

import pytest

from leorelay.geometry import GeometryConfig, RelayScenario

# Reference constellation: 550 km shell over a 6371 km Earth.
REFERENCE_GEOMETRY = GeometryConfig.from_altitude(550.0)


def reference_scenario(**changes) -> RelayScenario:
    base = RelayScenario(REFERENCE_GEOMETRY, math.pi / 4, math.pi / 4, 3000.0, 3000)
    return base.replace(**changes) if changes else base


@pytest.fixture
def geometry() -> GeometryConfig:
    return REFERENCE_GEOMETRY


@pytest.fixture
def scenario() -> RelayScenario:
    return reference_scenario()


_ACCEPTANCE: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
