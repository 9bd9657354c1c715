import numpy as np
import pytest

from relaykey import ChannelParams
from relaykey.experiments import consensus_curve

BETAS = [round(0.1 * i, 1) for i in range(1, 10)]


def fitted(snr_db, c, seed=5, stderr_cap=2e-3):
    channel = ChannelParams.from_snr_db(snr_db, c)
    _, model = consensus_curve(channel, BETAS, 1e-3,
                               lambda i: np.random.default_rng([seed, i]),
                               stderr_cap=stderr_cap)
    return channel, model


@pytest.fixture(scope="session")
def model_20_05():
    return fitted(20.0, 0.5)


@pytest.fixture(scope="session")
def model_20_09():
    return fitted(20.0, 0.9)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in mod.LINES:
            terminalreporter.write_line(line)
