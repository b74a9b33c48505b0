import numpy as np
import pytest

from lanemden.core import ProblemParams, build_sphere_quadrature, derive_constants


@pytest.fixture
def critical4():
    return derive_constants(ProblemParams.critical(4))


@pytest.fixture
def sub5():
    return derive_constants(ProblemParams(5, 1, 2.0))


@pytest.fixture
def e1():
    return np.array([1.0])


@pytest.fixture(scope="session")
def q4():
    return build_sphere_quadrature(4, 8)


@pytest.fixture(scope="session")
def q5():
    return build_sphere_quadrature(5, 4)


def pytest_pycollect_makeitem(collector, name, obj):
    # fastcore's assertion helpers (test_eq, test_close, ...) are imported into
    # test modules; keep pytest from collecting them as tests.
    if callable(obj) and getattr(obj, "__module__", "") == "fastcore.test":
        return []
    return None
