import numpy as np
import pytest

from equiheat.groups import SO3, SU2, Torus


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=["u1", "t2", "su2", "so3"])
def model(request):
    return {"u1": Torus(1), "t2": Torus(2), "su2": SU2(), "so3": SO3()}[request.param]
