"""Session-scoped replicate suites shared between the benchmark property
tests and the acceptance gate, so the expensive 20-seed runs execute once.

Each fixture returns (records, build_seconds); the acceptance suite asserts
its runtime budgets against the recorded build time.
"""

import os
import time

import pytest

from robust_sbl.benchmark import SCENARIOS, run_scenario


def _workers():
    raw = os.environ.get("ROBUST_SBL_THREADS")
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError:
        return 1


def _timed_run(name, estimators=None):
    start = time.perf_counter()
    records = run_scenario(SCENARIOS[name], estimators=estimators, max_workers=_workers())
    return records, time.perf_counter() - start


@pytest.fixture(scope="session")
def clean_regression_suite():
    return _timed_run("clean-regression", estimators=("sbl-mee",))


@pytest.fixture(scope="session")
def robust_regression_suite():
    return _timed_run("robust-regression")


@pytest.fixture(scope="session")
def robust_regression_large_records():
    return _timed_run("robust-regression-large")[0]


@pytest.fixture(scope="session")
def robust_classification_suite():
    return _timed_run("robust-classification")


@pytest.fixture(scope="session")
def robust_classification_records(robust_classification_suite):
    return robust_classification_suite[0]
