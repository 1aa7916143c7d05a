import numpy as np
import pytest
import hypothesis.strategies as st
from hypothesis import given, settings

from conftest import unit_data
from shinzettl.cauchy import (Forcing, fundamental_matrix, make_cauchy_data, mollify_to_domain, propagate_scaled,
                              quasiderivatives, solve_cauchy, system_residual, wronskian)
from shinzettl.exceptions import BlowUpError, ValidationError
from shinzettl.potential import make_matrix_function, make_potential, step
from shinzettl.testfunctions import CutoffFamily


def test_free_particle_matches_cosh_sinh(free):
    sol = solve_cauchy(free, lam=-1.0, data=unit_data(1), interval=(-5.0, 5.0))
    xs = np.linspace(-5.0, 5.0, 101)
    for x in xs:
        assert abs(sol(x)[0] - np.cosh(x)) <= 1e-8 * np.cosh(x)
        assert abs(sol.quasi(x)[0] - np.sinh(x)) <= 1e-8 * np.cosh(x)


def test_quasiderivatives_of_cosh(free):
    sol = solve_cauchy(free, lam=-1.0, data=unit_data(1), interval=(-5.0, 5.0))
    values = quasiderivatives(sol, 1.0)
    assert values.u[0] == pytest.approx(np.cosh(1.0), rel=1e-8)
    assert values.u_prime[0] == pytest.approx(np.sinh(1.0), rel=1e-8)
    assert values.l_value[0] == pytest.approx(-np.cosh(1.0), rel=1e-8)
    assert values.u2[0] == pytest.approx(np.cosh(1.0), rel=1e-8)


def test_default_data_starts_at_left_end(free):
    sol = solve_cauchy(free, lam=0.0, interval=(-2.0, 3.0))
    assert sol.data.x0 == -2.0
    assert sol(3.0)[0] == pytest.approx(1.0, abs=1e-9)


def test_delta_jump_law(delta_minus2):
    sol = solve_cauchy(delta_minus2, lam=-0.5, data=make_cauchy_data(-2.0, [1.0], [0.3]), interval=(-2.0, 2.0))
    u0 = sol(0.0)
    assert abs(sol.quasi(0.0, "right")[0] - sol.quasi(0.0, "left")[0]) <= 1e-8
    jump = sol.derivative(0.0, "right") - sol.derivative(0.0, "left")
    assert abs(jump[0] - (-2.0) * u0[0]) <= 1e-7


@st.composite
def jumpy_potentials(draw):
    m = draw(st.integers(min_value=1, max_value=2))
    n = draw(st.integers(min_value=1, max_value=3))
    points = sorted(draw(st.lists(st.floats(min_value=-1.8, max_value=1.8), min_size=n, max_size=n,
                                  unique=True)))
    if any(b - a < 0.05 for a, b in zip(points[:-1], points[1:])):
        points = list(np.linspace(-1.5, 1.5, n))
    values = st.floats(min_value=-2.0, max_value=2.0)
    pieces = [np.array([[draw(values) for _ in range(m)] for _ in range(m)]) for _ in range(n + 1)]
    return make_potential(make_matrix_function(m, points, pieces))


@settings(max_examples=20, deadline=None)
@given(p=jumpy_potentials(), lam=st.floats(min_value=-2.0, max_value=2.0))
def test_quasiderivative_continuity_and_jump_law(p, lam):
    data = make_cauchy_data(-2.0, np.ones(p.m), np.linspace(-1.0, 1.0, p.m))
    sol = solve_cauchy(p, lam=lam, data=data, interval=(-2.0, 2.0))
    for x, delta in p.Q.jumps():
        gap = sol.quasi(x, "right") - sol.quasi(x, "left")
        assert np.linalg.norm(gap) <= 1e-8 * max(1.0, np.linalg.norm(sol.state(x)))
        jump = sol.derivative(x, "right") - sol.derivative(x, "left")
        np.testing.assert_allclose(jump, delta @ sol(x), atol=1e-7 * max(1.0, np.linalg.norm(sol.state(x))))


def test_superposition(rich):
    a = make_cauchy_data(0.0, [1.0, 0.5j], [0.0, 1.0])
    b = make_cauchy_data(0.0, [-0.3, 2.0], [1j, 0.0])
    both = make_cauchy_data(0.0, a.c0 + b.c0, a.c1 + b.c1)
    lam = 0.7 - 0.2j
    solutions = [solve_cauchy(rich, lam=lam, data=d, interval=(-2.0, 2.0)) for d in (a, b, both)]
    for x in np.linspace(-2.0, 2.0, 17):
        np.testing.assert_allclose(solutions[2].state(x), solutions[0].state(x) + solutions[1].state(x),
                                   atol=1e-7)


def test_bracket_is_constant_for_eigen_pair(rich):
    lam = 0.4 + 0.3j
    u = solve_cauchy(rich, False, lam, make_cauchy_data(0.0, [1.0, 0.0], [0.0, 1.0]), interval=(-2.0, 2.0))
    v = solve_cauchy(rich, True, np.conj(lam), make_cauchy_data(0.0, [0.5, 1j], [1.0, 0.0]), interval=(-2.0, 2.0))
    reference = wronskian(u, v, 0.0)
    for t in (-1.9, -1.0, -0.2, 0.5, 1.7):
        assert abs(wronskian(u, v, t) - reference) <= 1e-7 * max(1.0, abs(reference))


def test_fundamental_matrix_determinant_is_one(rich):
    M = fundamental_matrix(rich, lam=0.3 + 0.1j, x0=-1.5, x1=1.5)
    assert abs(np.linalg.det(M) - 1.0) <= 1e-7


def test_fundamental_matrix_at_start_is_identity(rich):
    np.testing.assert_allclose(fundamental_matrix(rich, lam=0.3, x0=-0.7, x1=-0.7), np.eye(4), atol=1e-14)


@pytest.mark.parametrize("adjoint", [False, True])
def test_fundamental_matrix_composes(rich, adjoint):
    lam = 0.3 + 0.1j
    whole = fundamental_matrix(rich, adjoint, lam, x0=-1.5, x1=1.5)
    first = fundamental_matrix(rich, adjoint, lam, x0=-1.5, x1=0.2)
    second = fundamental_matrix(rich, adjoint, lam, x0=0.2, x1=1.5)
    np.testing.assert_allclose(second @ first, whole, atol=1e-8 * np.abs(whole).max())


def test_fundamental_matrix_free_closed_forms(free):
    t = 2.5
    np.testing.assert_allclose(fundamental_matrix(free, lam=0.0, x0=-1.0, x1=-1.0 + t),
                               [[1.0, t], [0.0, 1.0]], atol=1e-9)
    np.testing.assert_allclose(fundamental_matrix(free, lam=-1.0, x0=-1.0, x1=-1.0 + t),
                               [[np.cosh(t), np.sinh(t)], [np.sinh(t), np.cosh(t)]], atol=1e-9 * np.cosh(t))


def test_forcing(free):
    # u = x^2 solves -u'' = -u + (x^2 - 2)
    forcing = Forcing(lambda x: np.array([x**2 - 2.0]))
    sol = solve_cauchy(free, lam=-1.0, data=make_cauchy_data(0.0, [0.0], [0.0]), forcing=forcing,
                       interval=(-1.0, 1.0))
    for x in (-0.8, 0.3, 1.0):
        assert sol(x)[0] == pytest.approx(x**2, abs=1e-8)
        assert sol.l_values(x)[0] == pytest.approx(-2.0, abs=1e-8)


def test_system_residual_is_small(rich):
    sol = solve_cauchy(rich, lam=0.2, data=make_cauchy_data(0.0, [1.0, 1.0], [0.0, 0.0]), interval=(-2.0, 2.0))
    assert system_residual(sol) <= 1e-5


def test_blow_up_reports_last_good_point(free):
    with pytest.raises(BlowUpError) as info:
        solve_cauchy(free, lam=-1.0, data=unit_data(1), interval=(0.0, 10.0), blowup_threshold=10.0)
    assert 0.0 < info.value.last_x < np.arccosh(10.0) + 1e-9


@pytest.mark.parametrize(("kwargs", "match"), [
    ({"interval": (1.0, 1.0)}, "a < b"),
    ({"interval": (0.0, 1.0), "data": make_cauchy_data(2.0, [1.0], [0.0])}, "outside"),
    ({"rtol": -1.0}, "positive"),
    ({"data": make_cauchy_data(0.0, [1.0, 0.0], [0.0, 0.0])}, "m=1"),
])
def test_solve_cauchy_rejects(free, kwargs, match):
    with pytest.raises(ValidationError, match=match):
        solve_cauchy(free, **kwargs)


def test_cauchy_data_lengths():
    with pytest.raises(ValidationError, match="differ in length"):
        make_cauchy_data(0.0, [1.0, 2.0], [1.0])


def test_evaluation_outside_interval(free):
    sol = solve_cauchy(free, interval=(-1.0, 1.0))
    with pytest.raises(ValidationError, match="outside"):
        sol(1.5)


def test_to_frame_columns(free_m2):
    sol = solve_cauchy(free_m2, lam=-1.0, data=unit_data(2), interval=(-1.0, 1.0))
    frame = sol.to_frame(np.linspace(-1.0, 1.0, 5))
    assert list(frame.columns) == ["x", "u_0_re", "u_0_im", "u_1_re", "u_1_im",
                                   "u1_0_re", "u1_0_im", "u1_1_re", "u1_1_im"]
    assert frame["u_0_re"].iloc[2] == pytest.approx(1.0)
    assert sol.n_steps > 0


def test_propagate_scaled_tracks_growth(free):
    block = np.array([[0.0], [1.0]], dtype=complex)
    scaled = propagate_scaled(free, lam=-1.0, x_from=0.0, x_to=40.0, block=block)
    log_u = np.log(abs(scaled.columns[0, 0])) + scaled.log_scale
    assert log_u == pytest.approx(np.log(np.sinh(40.0)), abs=1e-7)
    assert scaled.max_log_scale >= scaled.log_scale - 1e-12


def test_mollified_solution_carries_l_values(delta_plus1):
    family = CutoffFamily(1)
    sol = solve_cauchy(delta_plus1, lam=-1.0, data=unit_data(1), interval=family.support)
    w = mollify_to_domain(sol, family)
    assert w.support == family.support
    assert w(0.5)[0] == pytest.approx(sol(0.5)[0])
    assert w.l(0.5)[0] == pytest.approx(-sol(0.5)[0])
    assert w(10.0)[0] == 0.0


def test_mollify_needs_covering_interval(free):
    sol = solve_cauchy(free, interval=(-1.0, 1.0))
    with pytest.raises(ValidationError, match="not inside"):
        mollify_to_domain(sol, CutoffFamily(1))


def test_step_potential_solution_at_jump_is_continuous():
    p = make_potential(step(1, 0.3, 0.5, -1.5))
    sol = solve_cauchy(p, lam=0.1, data=unit_data(1, x0=0.3), interval=(-1.0, 1.0))
    np.testing.assert_allclose(sol(0.3, "left"), sol(0.3, "right"), atol=1e-12)
