import functools
import time

import pytest

from quantid.simulation import ExperimentConfig, run_experiment

# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[str, tuple[bool, str]] = {}
SWEEP_SECONDS: dict[str, float] = {}


@functools.lru_cache(maxsize=None)
def full_experiment(preset: str):
    """The default 50-repetition sweep, shared by every acceptance check."""
    start = time.perf_counter()
    results = run_experiment(ExperimentConfig(preset=preset, seed=0))
    SWEEP_SECONDS[preset] = time.perf_counter() - start
    return results


@pytest.fixture(scope="session")
def dc_results():
    return full_experiment("dc_motor")


@pytest.fixture(scope="session")
def msd_results():
    return full_experiment("mass_spring_damper")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.split(".")[0]), k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {key}: {detail}")
