import numpy as np
import pytest

from shinzettl.cauchy import make_cauchy_data
from shinzettl.potential import constant, make_matrix_function, make_potential, step


@pytest.fixture
def free():
    return make_potential(constant(1, 0.0))


@pytest.fixture
def free_m2():
    return make_potential(constant(2, 0.0))


@pytest.fixture
def delta_minus2():
    return make_potential(step(1, 0.0, 0.0, -2.0))


@pytest.fixture
def delta_plus1():
    return make_potential(step(1, 0.0, 0.0, 1.0))


@pytest.fixture
def complex_delta():
    return make_potential(step(1, 0.0, 0.0, 1j))


@pytest.fixture
def nonsymmetric():
    return make_potential(step(2, 0.0, np.zeros((2, 2)), np.array([[0.0, 1.0], [-1.0, 0.0]])))


@pytest.fixture
def harmonic():
    """s = x^2 - 1: ground state exp(-x^2/2) at 0, first excited x exp(-x^2/2) at 2."""
    return make_potential(constant(1, 0.0), make_matrix_function(1, [], [[-1.0, 0.0, 1.0]]))


@pytest.fixture
def rich():
    """m = 2 with jumps, a sloped piece, complex entries and a nonzero s."""
    Q = make_matrix_function(2, [-1.0, 0.5], [
        np.zeros((2, 2)),
        [[[0.3, 0.1j], [0.2, -0.4]], [[0.5, 0.0], [0.0, 0.2]]],
        [[1.0, 0.5], [0.0, 1j]],
    ])
    s = make_matrix_function(2, [0.0], [[[0.1, 0.0], [0.0, 0.2]], [[0.0, 0.3j], [0.3j, -0.5]]])
    return make_potential(Q, s)


def unit_data(m, x0=0.0, k=0):
    """u(x0) = e_k, u^[1](x0) = 0."""
    c0 = np.zeros(m, dtype=complex)
    c0[k] = 1.0
    return make_cauchy_data(x0, c0, np.zeros(m))
