from pathlib import Path

import pytest

from softlev.scenario import load_scenario, scenario_from_dict
from softlev.trap import TrapModel, characterize

# criterion number -> list of (passed, detail), filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE.setdefault(criterion, []).append((bool(passed), detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[n]
        ok = all(p for p, _ in checks)
        detail = "; ".join(f"{'ok' if p else 'FAILED'}: {d}" for p, d in checks)
        terminalreporter.write_line(f"ACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}")


@pytest.fixture(scope="session")
def small_scenario():
    """Design-point geometry on a coarse grid for quick solver tests."""
    return scenario_from_dict({"grid": {"cells": [40, 40, 40]}})


@pytest.fixture(scope="session")
def small_model(small_scenario):
    return TrapModel(small_scenario)


CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture(scope="session")
def design_scenario():
    return load_scenario(CONFIG_DIR / "design_point.yaml")


@pytest.fixture(scope="session")
def design_model(design_scenario):
    return TrapModel(design_scenario)


@pytest.fixture(scope="session")
def design_characterization(design_scenario, design_model):
    return characterize(design_scenario, model=design_model)
