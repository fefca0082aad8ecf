import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from mensa_sim.accel import builtin_platforms  # noqa: E402


@pytest.fixture(scope="session")
def platforms():
    return builtin_platforms()


@pytest.fixture(scope="session")
def mensa(platforms):
    return platforms["mensa"]


@pytest.fixture(scope="session")
def baseline(platforms):
    return platforms["baseline"]


@pytest.fixture(autouse=True)
def _manifest_in_tmp(tmp_path, monkeypatch):
    monkeypatch.setenv("MENSA_SIM_MANIFEST", str(tmp_path / "runs.jsonl"))


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
