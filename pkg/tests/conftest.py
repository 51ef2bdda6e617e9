import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from subgradfed import GenConfig, generate  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): one acceptance criterion")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    _ACCEPTANCE[props["criterion"]] = (props.get("title", ""), report.outcome, props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        title, outcome, detail = _ACCEPTANCE[num]
        status = "PASS" if outcome == "passed" else "FAIL"
        line = f"[{status}] criterion {num:>2}: {title}"
        if detail:
            line += f" | {detail}"
        terminalreporter.write_line(line)


@pytest.fixture
def criterion(request):
    """Tag the test with its criterion; returns a callable that records details."""
    marker = request.node.get_closest_marker("acceptance")
    num, title = marker.args
    request.node.user_properties.append(("criterion", num))
    request.node.user_properties.append(("title", title))

    def detail(text):
        request.node.user_properties.append(("detail", text))
        print(f"criterion {num}: {text}")

    return detail


@pytest.fixture(scope="session")
def small_problem():
    return generate(GenConfig(n=5, d=50, noise_scale=1.0, seed=3))


@pytest.fixture(scope="session")
def tiny_problem():
    return generate(GenConfig(n=3, d=12, noise_scale=0.5, seed=11))


@pytest.fixture
def rng_np():
    return np.random.default_rng(12345)
