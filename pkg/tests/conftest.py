import numpy as np
import pytest

from pneunet_topopt import RunConfig, build_model


def small_config(**changes) -> RunConfig:
    """A 6 x 9 version of the benchmark with a shorter filter radius."""
    base = dict(nex=6, ney=9, filter_radius_factor=1.5, max_iters=5)
    base.update(changes)
    return RunConfig(**base)


@pytest.fixture
def small_model():
    return build_model(small_config())


@pytest.fixture
def medium_model():
    return build_model(RunConfig(nex=20, ney=30, filter_radius_factor=2.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
