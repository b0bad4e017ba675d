import numpy as np
import pytest

from nonlinbandit import MnlLink, find_hard_instance


@pytest.fixture(scope="session")
def mnl_link():
    return MnlLink()


@pytest.fixture(scope="session")
def mnl_hard_m2(mnl_link):
    """MNL hard instance with two exchangeable coordinates (action size 2)."""
    return find_hard_instance(mnl_link, m=2, b=2, grid_step=1 / 50)


@pytest.fixture(scope="session")
def mnl_hard_m3(mnl_link):
    """MNL hard instance with three exchangeable coordinates (action size 3)."""
    return find_hard_instance(mnl_link, m=3, b=3, grid_step=1 / 50)


@pytest.fixture(scope="session")
def quadratic_hard_m2():
    """Hard instance for a degree-2 polynomial link with planted pairs inside
    size-3 actions (m=2 < b=3)."""
    from nonlinbandit import PolynomialLink

    link = PolynomialLink([0.0, 0.0, 1.0 / 9.0])  # (x/3)**2 on [0, 3]
    return link, find_hard_instance(link, m=2, b=3, grid_step=1 / 50)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
