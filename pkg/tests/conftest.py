"""Shared fixtures and the acceptance summary printed at the end of a run."""

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

_acceptance = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    for key, value in report.user_properties:
        if key == "criterion":
            number, title = value
            prev = _acceptance.get(number)
            passed = report.passed and (prev is None or prev[1])
            detail = dict(report.user_properties).get("measured", "")
            if prev and prev[2]:
                detail = f"{prev[2]}; {detail}" if detail else prev[2]
            _acceptance[number] = (title, passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance):
        title, passed, detail = _acceptance[number]
        line = f"criterion {number} {'PASS' if passed else 'FAIL'}: {title}"
        if detail:
            line += f" [{detail}]"
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
