import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from splitreg.simulate import SimConfig, generate
from splitreg.tabular import Dataset, RoleAssignment, Schema

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def sim_config():
    return SimConfig()


@pytest.fixture
def sim_roles():
    return RoleAssignment.from_names(["L"], ["X", "G"])


@pytest.fixture
def sim_data(sim_config):
    return generate(sim_config, 2000, seed=123)


@pytest.fixture
def binary_schema():
    return Schema.from_dict({
        "outcome": "Y", "treatment": "T", "outcome_kind": "binary", "higher_is_better": True,
        "names_influencing_treatment": ["L"], "names_influencing_rule": ["X", "G"],
    })


# acceptance criteria report: one line per criterion in the terminal summary
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    def record(number: int, passed: bool, detail: str):
        ACCEPTANCE[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")
        assert passed, detail
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}")
