import numpy as np
import pytest

from singflow.fields import LinearField, PolynomialRemainder, PolyTerm, SmoothField, center_plane_field


@pytest.fixture
def saddle():
    return LinearField([([[-1.0]], "cs"), ([[1.0]], "cu")])


@pytest.fixture
def saddle_xy():
    """``diag(-1, 1)`` plus ``f(x) = (x1 x2, 0)``."""
    lin = LinearField([([[-1.0]], "cs"), ([[1.0]], "cu")])
    return SmoothField(lin, PolynomialRemainder(2, [PolyTerm(1.0, (1, 1), 0)]))


@pytest.fixture
def center4():
    return center_plane_field()


@pytest.fixture
def smooth4():
    rem = PolynomialRemainder(4, [PolyTerm(1.0, (0, 1, 1, 0), 0), PolyTerm(0.5, (0, 2, 0, 0), 3),
                                  PolyTerm(-0.7, (0, 1, 1, 0), 2), PolyTerm(0.3, (0, 0, 2, 0), 1)])
    return SmoothField(center_plane_field(), rem)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
