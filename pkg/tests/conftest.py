import numpy as np
import pytest
from hypothesis import settings

from ltcnet.cells import CellParams

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def scalar_params(tau=1.0, gamma=1.0, gamma_r=0.0, mu=0.0, a=1.0, activation="tanh"):
    """One neuron with one input, every parameter given as a plain float."""
    return CellParams(
        tau=np.array([tau]), gamma=np.array([[gamma]]), gamma_r=np.array([[gamma_r]]),
        mu=np.array([mu]), a_vec=np.array([a]), activation=activation,
    )


def random_params(rng, n=4, m=2, activation="sigmoid", scale=1.0):
    return CellParams(
        tau=rng.uniform(0.3, 3.0, n),
        gamma=rng.normal(0, scale, (m, n)),
        gamma_r=rng.normal(0, scale, (n, n)),
        mu=rng.normal(0, 1, n),
        a_vec=rng.normal(0, 1, n),
        activation=activation,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# (number, title, passed, detail) rows filled in by test_acceptance.py
ACCEPTANCE = []


def record_criterion(number, title, passed, detail):
    ACCEPTANCE.append((number, title, bool(passed), detail))
    print(f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}")
