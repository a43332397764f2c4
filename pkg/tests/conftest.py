import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from spde_lab.drift import DriftSpec, PotentialSpec
from spde_lab.model import SPDEModel
from spde_lab.spectrum import ModeSpectrum, build_example_dirichlet

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=300)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

CONFIGS = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs")

GIBBS_A = [0.5, 1.0, 1.5, 2.0]
GIBBS_LAM = [1.0, 1 / 2, 1 / 3, 1 / 4]


@pytest.fixture(scope="session")
def ou_spec():
    return build_example_dirichlet(8, 1.0, 1.0)


@pytest.fixture(scope="session")
def ou_model(ou_spec):
    return SPDEModel(ou_spec)


@pytest.fixture(scope="session")
def unit_spec():
    """Single mode with a = 1 and lambda^{2 alpha} = 1."""
    return ModeSpectrum([1.0], [1.0], 0.0)


@pytest.fixture(scope="session")
def gibbs_spec():
    return ModeSpectrum(GIBBS_A, GIBBS_LAM, 0.5)


@pytest.fixture(scope="session")
def gibbs_drift():
    return DriftSpec("gradient", potential=PotentialSpec(w=0.5, c=1.0))


@pytest.fixture(scope="session")
def gibbs_model(gibbs_spec, gibbs_drift):
    return SPDEModel(gibbs_spec, gibbs_drift)


@pytest.fixture(scope="session")
def cubic_model():
    return SPDEModel(build_example_dirichlet(8, 0.0, 1.0), DriftSpec("cubic_diagonal", c=1.0))


def config_path(name):
    return os.path.join(CONFIGS, name)


def rng(seed=0):
    return np.random.default_rng(seed)


# acceptance verdicts, echoed in the terminal summary (one line per criterion)
ACCEPTANCE_LINES = {}


@pytest.fixture
def criterion():
    def record(number, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
