import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from flexnum.channel import ChannelRealization, MultipathProfile

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=400, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def flat_channel(n_freq: int, gain: float = 1.0, unit_bw_khz: float = 180.0, profile=None) -> ChannelRealization:
    """A frequency-flat realization; handy for closed-form rate checks."""
    profile = profile or MultipathProfile((0.0,), (0.0,))
    return ChannelRealization(np.full(n_freq, gain), 0, profile, unit_bw_khz)


@pytest.fixture
def table_instance():
    from flexnum.instance import SimulationConfig, random_instance

    return random_instance(SimulationConfig(), seed=3)


def line_instance(rates, services):
    """1 x n grid of single-unit blocks with an explicit rate matrix."""
    from flexnum.grid import SHAPE_3, ResourceGrid, enumerate_blocks
    from flexnum.instance import Instance

    rates = np.asarray(rates, dtype=float).reshape(-1, len(services))
    grid = ResourceGrid.of_size(1, rates.shape[0])
    blocks = enumerate_blocks(grid, [SHAPE_3], subcarriers_per_block=3)
    return Instance(grid, [SHAPE_3], blocks, list(services), rates, 3)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
