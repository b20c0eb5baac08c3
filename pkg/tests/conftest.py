import numpy as np
import pytest

from surgeid.config import EngineConfig
from surgeid.missions import NoiseModel, VehicleSpec, make_fleet, patrol_mission, simulate
from surgeid.surge import SurgeParams


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def noisy_vehicle():
    return make_fleet(2, seed=7)[1]


@pytest.fixture(scope="session")
def short_log(noisy_vehicle):
    """A 5-minute noisy patrol log, shared read-only."""
    return simulate(noisy_vehicle, patrol_mission(300, seed=4), run_id="p300", seed=4).log


@pytest.fixture(scope="session")
def quiet_vehicle():
    return VehicleSpec("quiet", SurgeParams(), noise=NoiseModel())


@pytest.fixture
def engine_cfg():
    return EngineConfig()


_REPORT = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(num, title, ok, detail, seconds, limit)``."""
    lines = request.config.stash.setdefault(_REPORT, [])

    def record(num, title, ok, detail, seconds, limit):
        line = (f"[{num:2d}] {'PASS' if ok else 'FAIL'}  {title}: {detail} "
                f"({seconds:.1f} s, limit {limit:g} s)")
        lines.append((num, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_REPORT, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
