import pytest
from hypothesis import HealthCheck, settings

from cbrscoex.scenario import Region, Scenario, generate_deployment

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# acceptance verdicts, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def deployment30():
    """Default geometry at R_min = 30 km, deployment seed 0."""
    return generate_deployment(Scenario(region=Region(protection_distance_km=30.0)), seed=0)
