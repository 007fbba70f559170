import numpy as np
import pytest

from qbattery.experiment import calibration_discriminator
from qbattery.pulses import ARMONK
from qbattery.readout import ReadoutModel


@pytest.fixture(scope="session")
def dev():
    return ARMONK


@pytest.fixture(scope="session")
def ideal_model():
    return ReadoutModel.ideal(10.0)


@pytest.fixture(scope="session")
def ideal_disc(ideal_model):
    disc, _, _ = calibration_discriminator(ideal_model, ARMONK, 1024, seed=11)
    return disc


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def record(request):
    """Record one acceptance verdict; printed in the terminal summary."""
    store = request.config.stash.setdefault(_ACCEPTANCE, {})

    def _record(name, ok, detail=""):
        store[name] = (bool(ok), detail)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_ACCEPTANCE, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(store):
        ok, detail = store[name]
        terminalreporter.write_line(f"{name}: {'PASS' if ok else 'FAIL'}  {detail}")
