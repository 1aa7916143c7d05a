import numpy as np
import pytest

from shinzettl.cauchy import make_cauchy_data
from shinzettl.exceptions import SymmetryClassError, ValidationError
from shinzettl.potential import make_potential, step
from shinzettl.spectral import (TruncatedProblem, contraction_test, discretize_fd, fd_eigenvalues, fd_symmetry_defect,
                                grid_nodes, initial_vector, j_symmetry_residual, miss_distance, radius_stability,
                                richardson, truncated_eigenvalues)


def test_attractive_delta_bound_state(delta_minus2):
    tp = TruncatedProblem(delta_minus2, 10.0, (-2.0, -0.05))
    report = truncated_eigenvalues(tp)
    assert report.path == "real"
    assert len(report.eigenvalues) == 1
    eigenvalue = report.eigenvalues[0]
    assert eigenvalue.value.real == pytest.approx(-1.0, abs=1e-6)
    assert eigenvalue.multiplicity == 1
    assert eigenvalue.residual <= 1e-9


def test_free_dirichlet_spectrum(free):
    # Dirichlet on [-pi/2, pi/2]: lam_n = n^2.
    tp = TruncatedProblem(free, np.pi / 2, (0.5, 9.5))
    values = sorted(v.real for v in truncated_eigenvalues(tp).values)
    np.testing.assert_allclose(values, [1.0, 4.0, 9.0], atol=1e-6)


@pytest.mark.slow
def test_free_m2_has_double_eigenvalue(free_m2):
    tp = TruncatedProblem(free_m2, np.pi / 2, (0.5, 1.5))
    report = truncated_eigenvalues(tp)
    assert len(report.eigenvalues) == 1
    assert report.eigenvalues[0].value.real == pytest.approx(1.0, abs=1e-5)
    assert report.eigenvalues[0].multiplicity == 2


def test_miss_distance_of_free_particle(free):
    # u(-R) = 0, u^[1](-R) = 1 at lam = -1 gives u(R) = sinh(2R).
    d = miss_distance(TruncatedProblem(free, 2.0), -1.0)
    assert d.value.real == pytest.approx(np.sinh(4.0), rel=1e-8)
    assert abs(d.value.imag) <= 1e-8
    assert d.max_log_scale >= d.log_scale - 1e-12


def test_empty_window_leaves_a_note(delta_plus1):
    report = truncated_eigenvalues(TruncatedProblem(delta_plus1, 5.0, (-2.0, -0.5)))
    assert report.eigenvalues == ()
    assert report.notes


@pytest.mark.slow
def test_complex_path_finds_odd_mode(complex_delta):
    # Odd Dirichlet modes vanish at the delta, so n^2 survives for R = pi.
    tp = TruncatedProblem(complex_delta, np.pi, (0.5, 1.5, -0.3, 0.3), grid=15)
    report = truncated_eigenvalues(tp)
    assert report.path == "complex"
    assert len(report.eigenvalues) == 1
    assert abs(report.eigenvalues[0].value - 1.0) <= 1e-6


def test_fd_lowest_free_eigenvalue(free):
    values = fd_eigenvalues(TruncatedProblem(free, np.pi / 2, (0.5, 9.5)), 399)
    assert values.size == 3
    assert values[0].real == pytest.approx(1.0, abs=1e-4)


def test_grid_nodes_exclude_endpoints(free):
    xs, h = grid_nodes(TruncatedProblem(free, 1.0), 19)
    assert h == pytest.approx(0.1)
    assert xs[0] == pytest.approx(-0.9)
    assert xs[-1] == pytest.approx(0.9)


def test_richardson_free(free):
    fd = richardson(TruncatedProblem(free, np.pi / 2, (0.5, 9.5)), 399)
    assert fd.order == 2
    assert fd.extrapolated[0].real == pytest.approx(1.0, abs=1e-7)
    assert fd.error[0] <= 1e-4


def test_richardson_delta_brackets_the_bound_state(delta_minus2):
    fd = richardson(TruncatedProblem(delta_minus2, 10.0, (-2.0, -0.05)), 399)
    assert fd.order == 2
    assert fd.extrapolated.size == 1
    assert abs(fd.extrapolated[0] + 1.0) <= fd.error[0]
    assert abs(fd.extrapolated[0] + 1.0) <= 1e-6


def test_richardson_order_drops_off_grid():
    p = make_potential(step(1, 0.013, 0.0, -2.0))
    assert richardson(TruncatedProblem(p, 10.0, (-2.0, -0.05)), 399).order == 1


def test_oracle_is_attached(delta_minus2):
    report = truncated_eigenvalues(TruncatedProblem(delta_minus2, 10.0, (-2.0, -0.05)), oracle=True, fd_points=399)
    eigenvalue = report.eigenvalues[0]
    assert eigenvalue.oracle.real == pytest.approx(-1.0, abs=1e-6)
    assert eigenvalue.oracle_delta <= 1e-6
    assert eigenvalue.oracle_error > 0.0


@pytest.mark.slow
def test_radius_stability(delta_minus2):
    stability = radius_stability(TruncatedProblem(delta_minus2, 10.0, (-2.0, -0.05)))
    assert len(stability.eigenvalues) == len(stability.shifted) == 1
    assert stability.max_change <= 1e-6


def test_fd_matrix_is_block_structured(nonsymmetric):
    M = discretize_fd(TruncatedProblem(nonsymmetric, 3.0), 20)
    assert M.shape == (40, 40)
    defect = fd_symmetry_defect(TruncatedProblem(nonsymmetric, 3.0), 20)
    assert defect.relative_defect > 0.0


def test_fd_symmetry_defect_complex_symmetric(complex_delta):
    defect = fd_symmetry_defect(TruncatedProblem(complex_delta, 5.0), 50)
    assert defect.relative_defect == 0.0
    assert defect.eigenvalue_mismatch <= 1e-8


def test_repulsive_delta_contracts(delta_plus1):
    tp = TruncatedProblem(delta_plus1, 10.0)
    report = contraction_test(tp, initial_vector(tp, 399), 0.01, 200)
    assert report.nonincreasing
    assert report.accretive_discretization
    assert len(report.norms) == 201


def test_attractive_delta_grows_at_the_cayley_rate(delta_minus2):
    tp = TruncatedProblem(delta_minus2, 10.0)
    dt = 0.01
    report = contraction_test(tp, initial_vector(tp, 399, "exp_decay"), dt, 200)
    assert not report.nonincreasing
    assert not report.accretive_discretization
    assert report.ratios[-1] == pytest.approx((1 + dt / 2) / (1 - dt / 2), abs=1e-3)


def test_initial_vectors(free_m2):
    tp = TruncatedProblem(free_m2, 5.0)
    u0 = initial_vector(tp, 20, "gaussian")
    assert u0.shape == (40,)
    assert np.all(u0[1::2] == 0)
    np.testing.assert_array_equal(initial_vector(tp, 20, "random", seed=4), initial_vector(tp, 20, "random", seed=4))
    with pytest.raises(ValidationError, match="initial vector"):
        initial_vector(tp, 20, "step")


def test_j_symmetry_on_complex_symmetric(complex_delta):
    data = make_cauchy_data(-2.0, [1.0], [0.5j])
    assert j_symmetry_residual(complex_delta, data, 0.3 + 0.7j, (-2.0, 2.0)) <= 1e-8


@pytest.mark.parametrize("name", ["nonsymmetric", "rich"])
def test_j_symmetry_needs_symmetric_coefficients(request, name):
    p = request.getfixturevalue(name)
    data = make_cauchy_data(0.0, np.ones(p.m), np.zeros(p.m))
    with pytest.raises(SymmetryClassError):
        j_symmetry_residual(p, data, 0.5, (-1.0, 1.0))


def test_j_symmetry_refuses_hermitian_nonsymmetric_coefficients():
    p = make_potential(step(2, 0.0, np.zeros((2, 2)), np.array([[0.0, 1j], [-1j, 0.0]])))
    assert p.symmetry_class.value == "selfadjoint"
    with pytest.raises(SymmetryClassError, match="non-symmetric coefficients"):
        j_symmetry_residual(p, make_cauchy_data(0.0, [1.0, 0.0], [0.0, 0.0]), 0.5, (-1.0, 1.0))


@pytest.mark.parametrize(("kwargs", "match"), [
    ({"radius": 0.0}, "Radius must be positive"),
    ({"radius": 1.0, "window": (1.0, 0.0)}, "Empty window"),
    ({"radius": 1.0, "window": (0.0, 1.0, 2.0)}, "2 or 4 values"),
    ({"radius": 1.0, "bc": "neumann"}, "boundary condition"),
])
def test_truncated_problem_rejects(free, kwargs, match):
    with pytest.raises(ValidationError, match=match):
        TruncatedProblem(free, **kwargs)


def test_fd_rejects_small_grid(free):
    with pytest.raises(ValidationError, match="at least 16"):
        discretize_fd(TruncatedProblem(free, 1.0), 10)


def test_contraction_rejects_bad_steps(free):
    tp = TruncatedProblem(free, 1.0)
    u0 = initial_vector(tp, 20)
    with pytest.raises(ValidationError, match="dt must be positive"):
        contraction_test(tp, u0, 0.0, 10)
    with pytest.raises(ValidationError, match="steps must be positive"):
        contraction_test(tp, u0, 0.1, 0)


def test_contraction_rejects_zero_initial_vector(free):
    with pytest.raises(ValidationError, match="Initial vector is zero"):
        contraction_test(TruncatedProblem(free, 5.0), np.zeros(40), 0.01, 3)


def test_underflowed_norms_give_zero_ratios(free):
    # Squares of subnormal entries underflow, so every discrete norm is 0.
    report = contraction_test(TruncatedProblem(free, 5.0), np.full(40, 5e-324), 0.01, 3)
    assert report.norms == (0.0,) * 4
    assert report.ratios == (0.0,) * 3
    assert report.nonincreasing


def test_miss_distance_at_zero_is_interval_length(free):
    # u = x + R at lam = 0.
    assert miss_distance(TruncatedProblem(free, 1.5), 0.0).value.real == pytest.approx(3.0, rel=1e-9)


def test_miss_distance_factors_for_decoupled_channels(free, delta_minus2):
    p = make_potential(step(2, 0.0, np.zeros((2, 2)), np.diag([0.0, -2.0])))
    joint = miss_distance(TruncatedProblem(p, 3.0), 0.7).value
    product = (miss_distance(TruncatedProblem(free, 3.0), 0.7).value
               * miss_distance(TruncatedProblem(delta_minus2, 3.0), 0.7).value)
    assert abs(joint - product) <= 1e-7 * abs(product)


@pytest.mark.slow
def test_complex_delta_eigenvalues_leave_the_real_axis(complex_delta):
    tp = TruncatedProblem(complex_delta, 8.0, (0.1, 0.5, -0.3, 0.3), grid=21)
    report = truncated_eigenvalues(tp, oracle=True, fd_points=399)
    assert any(abs(e.value.imag) > 1e-3 for e in report.eigenvalues)
    for e in report.eigenvalues:
        assert e.oracle_delta <= 2.0 * e.oracle_error + 1e-9


def test_free_norms_strictly_decrease(free):
    tp = TruncatedProblem(free, 5.0)
    report = contraction_test(tp, initial_vector(tp, 99, "gaussian"), 0.01, 50)
    assert all(r < 1.0 for r in report.ratios)


def test_j_symmetry_on_real_delta(delta_minus2):
    data = make_cauchy_data(0.0, [1.0], [0.0])
    assert j_symmetry_residual(delta_minus2, data, 0.4, (-3.0, 3.0)) <= 1e-9


def test_j_symmetry_on_symmetric_matrix_jump():
    p = make_potential(step(2, 0.0, np.zeros((2, 2)), np.array([[0.0, 1j], [1j, 0.0]])))
    data = make_cauchy_data(0.0, [1.0, 0.0], [0.0, 0.0])
    assert j_symmetry_residual(p, data, 1j, (-3.0, 3.0)) <= 1e-8
