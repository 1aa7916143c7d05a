"""Matrix Schrodinger operators -u'' + qu with distributional potentials q = Q' + s."""
import logging

__version__ = "0.1.0"

logging.getLogger(__name__).addHandler(logging.NullHandler())

from shinzettl.potential import (Potential, SymmetryClass, adjoint_potential, classify_symmetry,  # noqa: E402
                                 load_potential, make_matrix_function, make_potential, shin_zettl)
from shinzettl.cauchy import make_cauchy_data, quasiderivatives, solve_cauchy  # noqa: E402
from shinzettl.analysis import (accretivity_scan, bracket, form_value, green_identity_residual,  # noqa: E402
                                kernel_growth_test)
from shinzettl.spectral import TruncatedProblem, contraction_test, miss_distance, truncated_eigenvalues  # noqa: E402

__all__ = [
    "Potential", "SymmetryClass", "adjoint_potential", "classify_symmetry", "load_potential",
    "make_matrix_function", "make_potential", "shin_zettl", "make_cauchy_data", "quasiderivatives",
    "solve_cauchy", "accretivity_scan", "bracket", "form_value", "green_identity_residual",
    "kernel_growth_test", "TruncatedProblem", "contraction_test", "miss_distance", "truncated_eigenvalues",
]
