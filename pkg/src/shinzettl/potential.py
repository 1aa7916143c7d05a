"""
Distributional matrix potentials q = Q' + s and their Shin-Zettl systems.

Q and s are piecewise polynomial m x m complex matrix functions with finitely
many breakpoints. A jump of Q of size dQ at x_j is a delta interaction dQ*delta(x - x_j)
in q; kinks and smooth pieces of Q contribute the ordinary derivative Q'.
"""
import json
import logging
from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np

from shinzettl.exceptions import ConfigError, ValidationError
from shinzettl.settings import pick

logger = logging.getLogger(__name__)

SIDES = ("left", "right", "auto")
EXTENSIONS = ("constant", "zero")


class SymmetryClass(str, Enum):
    SELFADJOINT = "selfadjoint"
    COMPLEX_SYMMETRIC = "complex_symmetric"
    GENERAL = "general"


def _as_piece(raw, m, index):
    """Coerce one piece to a (degree+1, m, m) complex array."""
    try:
        c = np.array(raw, dtype=complex)
    except (TypeError, ValueError) as e:
        raise ValidationError(f"Piece {index} is not numeric: {e}")

    if c.ndim == 0:
        if m != 1:
            raise ValidationError(f"Piece {index} is a scalar but m={m}; give an {m}x{m} matrix.")
        c = c.reshape(1, 1, 1)
    elif c.ndim == 1:
        if m != 1:
            raise ValidationError(f"Piece {index} is a coefficient vector but m={m}; give {m}x{m} matrices.")
        c = c.reshape(-1, 1, 1)
    elif c.ndim == 2:
        c = c.reshape(1, *c.shape)

    if c.ndim != 3 or c.shape[1:] != (m, m):
        raise ValidationError(f"Dimension mismatch in piece {index}: expected coefficient matrices of shape "
                              f"({m}, {m}), got array of shape {c.shape}.")
    if c.shape[0] == 0:
        raise ValidationError(f"Piece {index} has no coefficients.")
    if not np.all(np.isfinite(c)):
        raise ValidationError(f"Piece {index} has non-finite coefficients.")
    return c


def _horner(c, t):
    """Evaluate sum_k c[k] t^k for matrix coefficients; t scalar or 1-D array."""
    if np.ndim(t) == 0:
        value = c[-1].copy()
        for coeff in c[-2::-1]:
            value = value * t + coeff
        return value
    t = t[:, None, None]
    value = np.broadcast_to(c[-1], (t.shape[0],) + c.shape[1:]).copy()
    for coeff in c[-2::-1]:
        value = value * t + coeff
    return value


@dataclass(frozen=True, eq=False)
class MatrixFunction:
    """
    Piecewise polynomial m x m complex matrix function of x.

    ``pieces[0]`` lives left of the first breakpoint, ``pieces[-1]`` right of
    the last one and ``pieces[i]`` on (breakpoints[i-1], breakpoints[i]).
    Interior pieces are polynomials in the local variable x - breakpoints[i-1].
    Beyond the outer breakpoints the ``extension`` rule applies: ``constant``
    holds the outer piece at its breakpoint value (its constant coefficient),
    ``zero`` makes the function vanish. Outer pieces are stored reduced to what
    the rule evaluates, so symmetry tests and adjoints see only live
    coefficients. Without breakpoints the single piece is a polynomial in x on
    the whole line.
    """

    m: int
    breakpoints: np.ndarray
    pieces: tuple
    extension: str = "constant"

    def __post_init__(self):
        bp = np.array(self.breakpoints, dtype=float).reshape(-1)
        bp.flags.writeable = False
        object.__setattr__(self, "breakpoints", bp)
        frozen = []
        outer = (0, len(self.pieces) - 1) if bp.size else ()
        for i, c in enumerate(self.pieces):
            c = np.array(c, dtype=complex)
            if i in outer:
                c = np.zeros_like(c[:1]) if self.extension == "zero" else c[:1].copy()
            c.flags.writeable = False
            frozen.append(c)
        object.__setattr__(self, "pieces", tuple(frozen))

    @property
    def degree(self):
        return max(c.shape[0] for c in self.pieces) - 1

    def _reference(self, i):
        if self.breakpoints.size == 0:
            return 0.0
        return self.breakpoints[0] if i == 0 else self.breakpoints[i - 1]

    def _is_outer(self, i):
        return self.breakpoints.size > 0 and i in (0, len(self.pieces) - 1)

    def piece_index(self, x, side="auto"):
        if side not in SIDES:
            raise ValidationError(f"Unsupported side '{side}'. Must be one of {list(SIDES)}.")
        return int(np.searchsorted(self.breakpoints, x, side="left" if side == "left" else "right"))

    def evaluate_piece(self, i, x):
        """Evaluate piece ``i`` at x (scalar or 1-D array) regardless of where x lies."""
        c = self.pieces[i]
        if self._is_outer(i):
            value = np.zeros((self.m, self.m), dtype=complex) if self.extension == "zero" else c[0]
            if np.ndim(x) == 0:
                return value.copy()
            return np.broadcast_to(value, (np.size(x), self.m, self.m)).copy()
        return _horner(c, np.asarray(x, dtype=float) - self._reference(i))

    def __call__(self, x, side="auto"):
        if np.ndim(x) == 0:
            return self.evaluate_piece(self.piece_index(x, side), float(x))

        x = np.asarray(x, dtype=float).reshape(-1)
        index = np.searchsorted(self.breakpoints, x, side="left" if side == "left" else "right")
        out = np.empty((x.size, self.m, self.m), dtype=complex)
        for i in np.unique(index):
            mask = index == i
            out[mask] = self.evaluate_piece(int(i), x[mask])
        return out

    def jumps(self):
        """List of (x_j, F(x_j+) - F(x_j-)) over breakpoints with a nonzero jump."""
        found = []
        for j, x in enumerate(self.breakpoints):
            delta = self.evaluate_piece(j + 1, x) - self.evaluate_piece(j, x)
            if np.any(delta != 0):
                found.append((float(x), delta))
        return found

    def derivative(self):
        """Pointwise derivative on piece interiors. Jumps are not included."""
        pieces = []
        for i, c in enumerate(self.pieces):
            if self._is_outer(i) or c.shape[0] == 1:
                pieces.append(np.zeros((1, self.m, self.m), dtype=complex))
            else:
                k = np.arange(1, c.shape[0])[:, None, None]
                pieces.append(k * c[1:])
        return MatrixFunction(self.m, self.breakpoints, tuple(pieces), self.extension)

    def _map(self, fn):
        return MatrixFunction(self.m, self.breakpoints, tuple(fn(c) for c in self.pieces), self.extension)

    def adjoint(self):
        return self._map(lambda c: np.conj(np.swapaxes(c, -1, -2)))

    def transpose(self):
        return self._map(lambda c: np.swapaxes(c, -1, -2))

    def conjugate(self):
        return self._map(np.conj)

    def is_hermitian(self):
        return all(np.array_equal(c, np.conj(np.swapaxes(c, -1, -2))) for c in self.pieces)

    def is_symmetric(self):
        return all(np.array_equal(c, np.swapaxes(c, -1, -2)) for c in self.pieces)

    def is_real(self):
        return all(not np.any(c.imag) for c in self.pieces)

    def __eq__(self, other):
        if not isinstance(other, MatrixFunction):
            return NotImplemented
        return (self.m == other.m
                and self.extension == other.extension
                and np.array_equal(self.breakpoints, other.breakpoints)
                and len(self.pieces) == len(other.pieces)
                and all(a.shape == b.shape and np.array_equal(a, b) for a, b in zip(self.pieces, other.pieces)))

    __hash__ = None

    def to_dict(self):
        def matrix(mat):
            return [[[float(z.real), float(z.imag)] for z in row] for row in mat]

        return {
            "breakpoints": [float(x) for x in self.breakpoints],
            "pieces": [[matrix(coeff) for coeff in c] for c in self.pieces],
            "extension": self.extension,
        }


def make_matrix_function(m, breakpoints, pieces, extension=None, max_degree=None):
    """
    Validated constructor.

    Each piece is a (degree+1, m, m) coefficient array; an (m, m) matrix is a
    constant piece, and for m = 1 a scalar or a plain coefficient list works too.
    """
    extension = pick(extension, "extension")
    max_degree = pick(max_degree, "max_degree")
    if not isinstance(m, (int, np.integer)) or isinstance(m, bool) or m < 1:
        raise ValidationError(f"Dimension 'm' must be a positive integer, got {m!r}.")
    if extension not in EXTENSIONS:
        raise ValidationError(f"Unsupported extension '{extension}'. Must be one of {list(EXTENSIONS)}.")

    bp = np.array(breakpoints, dtype=float).reshape(-1)
    if not np.all(np.isfinite(bp)):
        raise ValidationError("Breakpoints must be finite.")
    if np.any(np.diff(bp) <= 0):
        raise ValidationError(f"Breakpoints must be strictly increasing, got {bp.tolist()}.")

    pieces = list(pieces)
    if not pieces:
        raise ValidationError("Empty piece list.")
    if len(pieces) != bp.size + 1:
        raise ValidationError(f"Expected {bp.size + 1} pieces for {bp.size} breakpoints "
                              f"({max(bp.size - 1, 0)} interior intervals + 2 extension pieces), got {len(pieces)}.")

    coeffs = [_as_piece(raw, m, i) for i, raw in enumerate(pieces)]
    for i, c in enumerate(coeffs):
        if c.shape[0] - 1 > max_degree:
            raise ValidationError(f"Piece {i} has degree {c.shape[0] - 1} above the cap {max_degree}.")
    if bp.size:
        for i in (0, len(coeffs) - 1):
            if coeffs[i].shape[0] > 1:
                logger.warning("Outer piece %d has degree %d; %s extension drops its higher coefficients",
                               i, coeffs[i].shape[0] - 1, extension)
    return MatrixFunction(int(m), bp, tuple(coeffs), extension)


def evaluate(F, x, side="auto"):
    """One-sided evaluation; ``auto`` means the right limit at a breakpoint."""
    return F(x, side=side)


def _as_matrix(value, m):
    value = np.array(value, dtype=complex)
    return value * np.eye(m) if value.ndim == 0 else value


def constant(m, value=0.0, extension=None):
    """Constant matrix function; a scalar value means value * I_m."""
    return make_matrix_function(m, [], [_as_matrix(value, m)], extension=extension)


def step(m, at, left, right, extension=None):
    """Heaviside-type function: ``left`` for x < at, ``right`` for x > at."""
    return make_matrix_function(m, [at], [_as_matrix(left, m), _as_matrix(right, m)], extension=extension)


def fit_function(fn, breakpoints, degree=None, m=1, outer_left=None, outer_right=None):
    """
    Chebyshev-node interpolation of a smooth scalar profile fn, times I_m.

    Interior pieces interpolate fn on each interval with ``degree`` + 1 nodes.
    Outer pieces default to fn at the outer breakpoints so that constant
    extension introduces no jump.
    """
    degree = pick(degree, "max_degree")
    bp = np.array(breakpoints, dtype=float)
    if bp.size < 2:
        raise ValidationError("fit_function needs at least two breakpoints.")

    k = np.arange(degree + 1)
    pieces = [(fn(bp[0]) if outer_left is None else outer_left) * np.eye(m)]
    for lo, hi in zip(bp[:-1], bp[1:]):
        h = hi - lo
        t = 0.5 * h * (1.0 - np.cos(np.pi * (k + 0.5) / (degree + 1)))
        coef = np.polynomial.polynomial.polyfit(t, fn(lo + t), degree)
        pieces.append(coef[:, None, None] * np.eye(m))
    pieces.append((fn(bp[-1]) if outer_right is None else outer_right) * np.eye(m))
    return make_matrix_function(m, bp, pieces, extension="constant", max_degree=degree)


@dataclass(frozen=True, eq=False)
class Potential:
    """q = Q' + s with Q, s piecewise polynomial matrix functions of equal dimension."""

    Q: MatrixFunction
    s: MatrixFunction

    def __post_init__(self):
        if self.Q.m != self.s.m:
            raise ValidationError(f"Dimension mismatch: Q is {self.Q.m}x{self.Q.m}, s is {self.s.m}x{self.s.m}.")

    @property
    def m(self):
        return self.Q.m

    @cached_property
    def symmetry_class(self):
        return classify_symmetry(self)

    def breakpoints(self):
        return np.union1d(self.Q.breakpoints, self.s.breakpoints)

    def jump_points(self):
        return sorted({x for x, _ in self.Q.jumps()} | {x for x, _ in self.s.jumps()})

    def is_real(self):
        return self.Q.is_real() and self.s.is_real()

    def q_derivative_part(self):
        """Q' split into its pointwise part and its delta couplings [(x_j, dQ_j), ...]."""
        return self.Q.derivative(), self.Q.jumps()

    def __eq__(self, other):
        if not isinstance(other, Potential):
            return NotImplemented
        return self.Q == other.Q and self.s == other.s

    __hash__ = None


def make_potential(Q, s=None):
    if s is None:
        s = constant(Q.m, 0.0)
    return Potential(Q, s)


def _blocks(Qx, sx, shift=0.0):
    """Assemble [Q, I; -Q^2 + s - shift*I, -Q] for one matrix or a stack of them."""
    eye = np.broadcast_to(np.eye(Qx.shape[-1]), Qx.shape)
    lower_left = -Qx @ Qx + sx
    if shift != 0:
        lower_left = lower_left - shift * eye
    top = np.concatenate([Qx, eye], axis=-1)
    bottom = np.concatenate([lower_left, -Qx], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


@dataclass(frozen=True, eq=False)
class SystemMatrix:
    """The 2m x 2m Shin-Zettl matrix A(x) and the points where it jumps."""

    potential: Potential
    discontinuities: tuple

    def __call__(self, x, side="auto"):
        return _blocks(self.potential.Q(x, side), self.potential.s(x, side))

    def pinned(self, anchor, shift=0.0):
        """A(x) - shift*E21 using the pieces that contain ``anchor``, for any x."""
        Q, s = self.potential.Q, self.potential.s
        qi, si = Q.piece_index(anchor), s.piece_index(anchor)

        def matrix(x):
            return _blocks(Q.evaluate_piece(qi, x), s.evaluate_piece(si, x), shift)

        return matrix


def shin_zettl(p):
    return SystemMatrix(p, tuple(p.jump_points()))


def adjoint_potential(p):
    """(Q*, s*) with * the pointwise Hermitian conjugate."""
    return Potential(p.Q.adjoint(), p.s.adjoint())


def classify_symmetry(p):
    if p.Q.is_hermitian() and p.s.is_hermitian():
        return SymmetryClass.SELFADJOINT
    if p.Q.is_symmetric() and p.s.is_symmetric():
        return SymmetryClass.COMPLEX_SYMMETRIC
    return SymmetryClass.GENERAL


# JSON I/O

_POTENTIAL_KEYS = {"m", "Q", "s"}
_FUNCTION_KEYS = {"breakpoints", "pieces", "extension"}


def _matrix_from_json(raw, m, where):
    if not isinstance(raw, list) or len(raw) != m:
        raise ConfigError(f"{where}: expected {m} rows.")
    rows = []
    for r, row in enumerate(raw):
        if not isinstance(row, list) or len(row) != m:
            raise ConfigError(f"{where}, row {r}: expected {m} entries.")
        entries = []
        for entry in row:
            if (not isinstance(entry, list) or len(entry) != 2
                    or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in entry)):
                raise ConfigError(f"{where}, row {r}: complex entries must be [re, im] pairs, got {entry!r}.")
            entries.append(complex(float(entry[0]), float(entry[1])))
        rows.append(entries)
    return rows


def matrix_function_from_dict(raw, m, name):
    if not isinstance(raw, dict):
        raise ConfigError(f"'{name}' must be an object with 'breakpoints' and 'pieces'.")
    unknown = sorted(set(raw) - _FUNCTION_KEYS)
    if unknown:
        raise ConfigError(f"Unknown key(s) {unknown} in '{name}'.")
    if "pieces" not in raw:
        raise ConfigError(f"'{name}' is missing 'pieces'.")
    pieces = raw["pieces"]
    if not isinstance(pieces, list):
        raise ConfigError(f"'{name}.pieces' must be a list.")

    coeffs = []
    for i, piece in enumerate(pieces):
        if not isinstance(piece, list) or not piece:
            raise ConfigError(f"'{name}.pieces[{i}]' must be a non-empty list of coefficient matrices.")
        coeffs.append([_matrix_from_json(mat, m, f"'{name}.pieces[{i}][{k}]'") for k, mat in enumerate(piece)])
    try:
        return make_matrix_function(m, raw.get("breakpoints", []), coeffs, extension=raw.get("extension"))
    except ValidationError as e:
        raise ConfigError(f"'{name}': {e}")


def potential_from_dict(raw):
    if not isinstance(raw, dict):
        raise ConfigError("A potential must be a JSON object with keys 'm', 'Q', 's'.")
    unknown = sorted(set(raw) - _POTENTIAL_KEYS)
    if unknown:
        raise ConfigError(f"Unknown key(s) {unknown} in potential.")
    m = raw.get("m")
    if not isinstance(m, int) or isinstance(m, bool) or m < 1:
        raise ConfigError(f"Field 'm' must be a positive integer, got {m!r}.")
    if "Q" not in raw:
        raise ConfigError("Field 'Q' is required.")
    Q = matrix_function_from_dict(raw["Q"], m, "Q")
    s = matrix_function_from_dict(raw["s"], m, "s") if "s" in raw else constant(m, 0.0)
    return Potential(Q, s)


def potential_to_dict(p):
    return {"m": p.m, "Q": p.Q.to_dict(), "s": p.s.to_dict()}


def read_json(path):
    """json.load with syntax errors turned into ConfigError carrying line/column."""
    try:
        with open(path, "r") as file:
            return json.load(file)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: JSON parse error at line {e.lineno}, column {e.colno}: {e.msg}")
    except OSError as e:
        raise ConfigError(f"Cannot read {path}: {e}")


def load_potential(path):
    return potential_from_dict(read_json(path))


def save_potential(p, path):
    with open(path, "w") as file:
        json.dump(potential_to_dict(p), file, indent=2)
        file.write("\n")
    logger.debug("Wrote potential (m=%d) to %s", p.m, path)
