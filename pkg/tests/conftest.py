import functools

import pytest

from hrp.association import associate, rate_matrix
from hrp.channel import build_channels
from hrp.config import NetworkConfig
from hrp.scenario import build_topology

# criterion number -> (passed, one-line measurement), filled by test_acceptance
ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    def record(number: int, passed: bool, detail: str):
        ACCEPTANCE[number] = (bool(passed), detail)
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def default_config():
    return NetworkConfig()


@functools.lru_cache(maxsize=None)
def default_scenario(seed: int):
    """Topology, channels and partition at the default configuration."""
    cfg = NetworkConfig()
    topo = build_topology(cfg, seed)
    ch = build_channels(topo, cfg, seed)
    part = associate(rate_matrix(ch.gains, cfg), ch.gains, cfg)
    return topo, ch, part
