import numpy as np
import pytest

from subsense import _kernels
from subsense.models import get_model
from subsense.sampling import ParameterSpace


@pytest.fixture
def numpy_backend(monkeypatch):
    """Force the pure-numpy kernel implementations for the duration of a test."""
    monkeypatch.setattr(_kernels, "USE_NUMBA", False)
    yield


@pytest.fixture
def lv():
    return get_model("lotka-volterra")


@pytest.fixture
def f1():
    return get_model("f1")


@pytest.fixture
def f3():
    return get_model("f3")


def unit_box(m: int) -> ParameterSpace:
    return ParameterSpace(
        names=tuple(f"p{i}" for i in range(m)), lower=np.zeros(m), upper=np.ones(m)
    )
