import numpy as np
import pytest

from pnk.catalog import (StraightenedSpec, make_hopf, make_straightened,
                         make_uncoupled_oscillators)

A1 = np.diag([-0.3, 0.2])
A2 = np.diag([0.1, -0.4])
C = np.array([[0.5], [0.25]])


@pytest.fixture(scope="session")
def straight_spec():
    return StraightenedSpec((A1, A2), C)


@pytest.fixture(scope="session")
def straight_sys(straight_spec):
    return make_straightened(straight_spec)


@pytest.fixture(scope="session")
def straight_cubic_sys():
    return make_straightened(StraightenedSpec((A1, A2), C, cubic=1.0),
                             name="straightened-cubic")


@pytest.fixture(scope="session")
def hopf_sys():
    return make_hopf(omega=1.0, eps0=0.1)


@pytest.fixture(scope="session")
def osc_sys():
    return make_uncoupled_oscillators()


@pytest.fixture()
def rng():
    return np.random.default_rng(20240811)
