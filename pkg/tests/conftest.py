import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from snnforge.autodiff import precision

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def f64():
    with precision(64):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, in criterion order."""
    lines = []
    for outcome in ("passed", "failed"):
        for report in terminalreporter.stats.get(outcome, []):
            if report.when != "call":
                continue
            props = dict(report.user_properties)
            if "criterion" in props:
                lines.append((props["criterion"], outcome.upper()[:4], props.get("detail", "")))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), status, detail in sorted(lines):
        terminalreporter.write_line(f"C{number:<2} {status}  {title}  {detail}".rstrip())
