import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# acceptance criteria append (label, ok, detail) here; printed at the end of the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in sorted(ACCEPTANCE, key=lambda r: int(r[0].split()[1].rstrip(":"))):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label} {detail}")


@pytest.fixture
def rng():
    from lrwsde.core import RngStream
    return RngStream(12345)
