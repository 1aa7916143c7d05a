"""
Desk-scale spectral and semigroup diagnostics on truncated intervals [-R, R]
with Dirichlet conditions: shooting eigenvalues, a finite-difference oracle,
Crank-Nicolson contraction tests and conjugation residuals.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from joblib import Parallel, delayed
from scipy.optimize import brentq, minimize_scalar
from scipy.sparse.linalg import eigs, eigsh, splu
from scipy.sparse.linalg import norm as sparse_norm

from shinzettl.cauchy import propagate_scaled, solve_cauchy
from shinzettl.exceptions import LinearSolveError, SymmetryClassError, ValidationError
from shinzettl.potential import SymmetryClass
from shinzettl.settings import pick

logger = logging.getLogger(__name__)

BOUNDARY_CONDITIONS = ("dirichlet",)


@dataclass(frozen=True, eq=False)
class TruncatedProblem:
    """
    The potential restricted to [-R, R] with Dirichlet conditions and a
    search window (re_lo, re_hi, im_lo, im_hi). A two-value window is a
    real interval.
    """

    potential: object
    radius: float
    window: tuple = (-1.0, 1.0)
    bc: str = "dirichlet"
    rtol: Optional[float] = None
    atol: Optional[float] = None
    scan_points: Optional[int] = None
    grid: Optional[int] = None

    def __post_init__(self):
        if not self.radius > 0:
            raise ValidationError(f"Radius must be positive, got {self.radius}.")
        if self.bc not in BOUNDARY_CONDITIONS:
            raise ValidationError(f"Unsupported boundary condition '{self.bc}'. Must be one of "
                                  f"{list(BOUNDARY_CONDITIONS)}.")
        window = tuple(float(v) for v in self.window)
        if len(window) == 2:
            window = window + (0.0, 0.0)
        if len(window) != 4:
            raise ValidationError(f"Window must have 2 or 4 values, got {len(window)}.")
        if not window[0] < window[1] or window[2] > window[3]:
            raise ValidationError(f"Empty window {window}.")
        object.__setattr__(self, "window", window)

    @property
    def m(self):
        return self.potential.m

    @property
    def is_real_problem(self):
        return self.potential.symmetry_class == SymmetryClass.SELFADJOINT and self.potential.is_real()

    def with_radius(self, radius):
        return TruncatedProblem(self.potential, radius, self.window, self.bc, self.rtol, self.atol,
                                self.scan_points, self.grid)


@dataclass(frozen=True)
class MissDistance:
    """
    d(lam) = det u(R) for the m solutions with u(-R) = 0, u^[1](-R) = e_k.

    d = mantissa * exp(log_scale); ``max_log_scale`` is the largest log
    growth met along the way and ``normalized`` = d / exp(max_log_scale)
    is the quantity compared against the root tolerance.
    """

    mantissa: complex
    log_scale: float
    max_log_scale: float
    columns: np.ndarray = field(repr=False)

    @property
    def value(self):
        with np.errstate(over="ignore"):
            scale = np.exp(self.log_scale)
        if np.isinf(scale):
            return complex(np.inf, 0.0) if self.mantissa != 0 else 0j
        return self.mantissa * scale

    @property
    def scale(self):
        with np.errstate(over="ignore"):
            return float(np.exp(self.max_log_scale))

    @property
    def normalized(self):
        return self.mantissa * np.exp(self.log_scale - self.max_log_scale)

    @property
    def log_abs(self):
        return float(np.log(abs(self.mantissa))) + self.log_scale if self.mantissa != 0 else -np.inf

    def multiplicity(self, rank_tol=1e-4):
        m = self.columns.shape[1]
        sv = np.linalg.svd(self.columns[:m, :], compute_uv=False)
        return max(1, int(np.sum(sv < rank_tol)))


def miss_distance(tp, lam, rtol=None, atol=None):
    """
    det U(R) for the block started at u(-R) = 0, u^[1](-R) = I.

    Args:
        tp (TruncatedProblem): Potential, radius R and tolerances.
        lam (complex): Spectral parameter.
        rtol, atol: Override the problem's integrator tolerances.

    Returns:
        MissDistance: The determinant as mantissa times exp(log_scale), so it
        stays finite where det U(R) itself overflows. It vanishes exactly at
        Dirichlet eigenvalues of the truncation.
    """
    m = tp.m
    block = np.zeros((2 * m, m), dtype=complex)
    block[m:, :] = np.eye(m)
    scaled = propagate_scaled(tp.potential, False, complex(lam), -tp.radius, tp.radius, block,
                              rtol=tp.rtol if rtol is None else rtol, atol=tp.atol if atol is None else atol)
    mantissa = complex(scaled.phase * np.linalg.det(scaled.columns[:m, :]))
    return MissDistance(mantissa, scaled.log_scale, scaled.max_log_scale, scaled.columns)


@dataclass(frozen=True)
class Eigenvalue:
    value: complex
    residual: float
    multiplicity: int
    oracle: Optional[complex] = None
    oracle_delta: Optional[float] = None
    oracle_error: Optional[float] = None


@dataclass(frozen=True)
class RadiusStability:
    radius: float
    delta: float
    eigenvalues: tuple
    shifted: tuple
    max_change: float


@dataclass(frozen=True)
class SpectralReport:
    radius: float
    window: tuple
    path: str
    eigenvalues: tuple
    notes: tuple = ()
    radius_check: Optional[RadiusStability] = None

    @property
    def values(self):
        return [e.value for e in self.eigenvalues]


def _grid_values(tp, lams, n_jobs):
    rtol = pick(None, "scan_rtol")
    atol = pick(None, "scan_atol")
    if n_jobs is not None and n_jobs != 1:
        with Parallel(n_jobs=n_jobs) as parallel:
            return parallel(delayed(miss_distance)(tp, lam, rtol, atol) for lam in lams)
    return [miss_distance(tp, lam, rtol, atol) for lam in lams]


def _dedupe(values, tol=1e-8):
    kept = []
    for v in sorted(values, key=lambda z: (z.real, z.imag)):
        if all(abs(v - k) > tol * max(1.0, abs(k)) for k in kept):
            kept.append(v)
    return kept


def _real_roots(tp, root_tol, n_jobs, notes):
    lo, hi = tp.window[:2]
    lams = np.linspace(lo, hi, pick(tp.scan_points, "scan_points"))
    scan = [d.normalized.real for d in _grid_values(tp, lams, n_jobs)]

    def signed(lam):
        return miss_distance(tp, lam).normalized.real

    roots = []
    for i in range(len(lams) - 1):
        f0, f1 = scan[i], scan[i + 1]
        if f0 == 0.0:
            roots.append(float(lams[i]))
        elif f0 * f1 < 0:
            try:
                roots.append(brentq(signed, lams[i], lams[i + 1], xtol=1e-14, rtol=4 * np.finfo(float).eps))
            except ValueError:
                notes.append(f"sign change on [{lams[i]:.6g}, {lams[i + 1]:.6g}] vanished at full tolerance")

    # Even-multiplicity roots touch zero without a sign change.
    for i in range(1, len(lams) - 1):
        a, b, c = abs(scan[i - 1]), abs(scan[i]), abs(scan[i + 1])
        if b < a and b < c and scan[i - 1] * scan[i] > 0 and scan[i] * scan[i + 1] > 0:
            res = minimize_scalar(lambda lam: abs(signed(lam)), bounds=(lams[i - 1], lams[i + 1]), method="bounded",
                                  options={"xatol": 1e-12})
            if res.fun <= root_tol:
                roots.append(float(res.x))
            else:
                logger.debug("Local |d| minimum at %.8g rejected (|d|/scale = %.3g)", res.x, res.fun)
    if not roots:
        notes.append("no sign change or root-like minimum of d in the window")
    return [complex(r) for r in roots]


def _newton(tp, start, found, root_tol, spacing, maxiter):
    """Damped Newton on d(lam) / prod(lam - r) with a central-difference derivative."""
    step_h = pick(None, "newton_step")
    lam = complex(start)
    for _ in range(maxiter):
        d0 = miss_distance(tp, lam)
        if d0.mantissa == 0:
            return lam
        h = step_h * max(1.0, abs(lam))
        ratios = []
        for z in (lam + h, lam - h):
            d = miss_distance(tp, z)
            ratios.append(d.mantissa / d0.mantissa * np.exp(d.log_scale - d0.log_scale))
        log_derivative = (ratios[0] - ratios[1]) / (2 * h) - sum(1.0 / (lam - r) for r in found)
        if log_derivative == 0 or not np.isfinite(log_derivative):
            return None
        step = 1.0 / log_derivative
        if abs(step) > spacing:
            step *= spacing / abs(step)
        lam = lam - step
        if abs(step) < 1e-12 * max(1.0, abs(lam)):
            break
    if abs(miss_distance(tp, lam).normalized) <= root_tol:
        return lam
    return None


def _complex_roots(tp, root_tol, n_jobs, notes):
    re_lo, re_hi, im_lo, im_hi = tp.window
    if im_lo == im_hi:
        pad = 0.25 * (re_hi - re_lo)
        im_lo, im_hi = im_lo - pad, im_hi + pad
    n = pick(tp.grid, "complex_grid")
    res = np.linspace(re_lo, re_hi, n)
    ims = np.linspace(im_lo, im_hi, n)
    lams = [complex(x, y) for y in ims for x in res]
    logs = np.array([d.log_abs for d in _grid_values(tp, lams, n_jobs)]).reshape(n, n)

    starts = []
    for j in range(n):
        for i in range(n):
            patch = logs[max(j - 1, 0):j + 2, max(i - 1, 0):i + 2]
            if logs[j, i] <= patch.min():
                starts.append((logs[j, i], complex(res[i], ims[j])))
    starts.sort(key=lambda t: t[0])

    spacing = max(res[1] - res[0] if n > 1 else 1.0, ims[1] - ims[0] if n > 1 else 1.0)
    maxiter = pick(None, "newton_maxiter")
    found = []
    for _, start in starts:
        root = _newton(tp, start, found, root_tol, spacing, maxiter)
        if root is None:
            notes.append(f"Newton from {start:.4g} did not converge; candidate dropped")
            logger.warning("Newton from %s did not converge; candidate dropped", start)
            continue
        if not (re_lo <= root.real <= re_hi and im_lo <= root.imag <= im_hi):
            logger.debug("Root %s lies outside the search rectangle; skipped", root)
            continue
        if any(abs(root - r) <= 1e-7 * max(1.0, abs(r)) for r in found):
            continue
        found.append(root)
    if not found:
        notes.append("no root of d found from the grid minima")
    return found


def truncated_eigenvalues(tp, root_tol=None, oracle=False, fd_points=None, check_radius=False, n_jobs=None):
    """
    Dirichlet eigenvalues of the truncation in the window.

    Selfadjoint potentials with real coefficients use sign changes of the
    real miss-distance on a real scan followed by brentq; everything else
    starts damped Newton with deflation from the minima of |d| on a complex
    grid. Each root is kept only if |d| <= root_tol * scale.

    Args:
        tp (TruncatedProblem): Potential, radius and search window.
        root_tol (float): Relative acceptance threshold on |d|.
        oracle (bool): Attach the Richardson-extrapolated FD eigenvalue to each root.
        fd_points (int): Coarse FD grid size for the oracle.
        check_radius (bool): Repeat the search at R + 2 and report the drift.
        n_jobs (int): Workers for the scan and grid evaluations.

    Returns:
        SpectralReport: Eigenvalues with residuals and multiplicities, the
        path taken and notes on anything skipped.
    """
    root_tol = pick(root_tol, "root_tol")
    notes = []
    path = "real" if tp.is_real_problem else "complex"
    roots = _real_roots(tp, root_tol, n_jobs, notes) if path == "real" else _complex_roots(tp, root_tol, n_jobs, notes)

    fd = richardson(tp, fd_points) if oracle else None
    eigenvalues = []
    for lam in _dedupe(roots):
        d = miss_distance(tp, lam)
        residual = float(abs(d.normalized))
        if residual > root_tol:
            notes.append(f"root {lam:.8g} rejected: |d|/scale = {residual:.3g}")
            continue
        extra = {}
        if fd is not None and fd.extrapolated.size:
            k = int(np.argmin(np.abs(fd.extrapolated - lam)))
            extra = {"oracle": complex(fd.extrapolated[k]), "oracle_delta": float(abs(fd.extrapolated[k] - lam)),
                     "oracle_error": float(fd.error[k])}
        eigenvalues.append(Eigenvalue(lam, residual, d.multiplicity(), **extra))

    stability = radius_stability(tp) if check_radius else None
    logger.info("Truncated eigenvalues (R=%g, %s path): %s", tp.radius, path,
                ", ".join(f"{e.value:.10g}" for e in eigenvalues) or "none")
    return SpectralReport(tp.radius, tp.window, path, tuple(eigenvalues), tuple(notes), stability)


def radius_stability(tp, delta=2.0, root_tol=None):
    """Eigenvalues at R and R + delta and the largest change between matched pairs."""
    base = truncated_eigenvalues(tp, root_tol).values
    shifted = truncated_eigenvalues(tp.with_radius(tp.radius + delta), root_tol).values
    change = 0.0
    for lam in base:
        if shifted:
            change = max(change, min(abs(lam - mu) for mu in shifted))
        else:
            change = np.inf
    return RadiusStability(tp.radius, delta, tuple(base), tuple(shifted), float(change))


# Finite-difference oracle

def grid_nodes(tp, N):
    h = 2.0 * tp.radius / (N + 1)
    return -tp.radius + h * np.arange(1, N + 1), h


def _node_values(F, xs):
    """Average of one-sided values, so a breakpoint on a node gets the midpoint value."""
    return 0.5 * (F(xs, side="left") + F(xs, side="right"))


def discretize_fd(tp, N):
    """
    Central differences for -u'' on N interior nodes with Dirichlet rows
    eliminated, plus s and the pointwise Q' at the nodes, plus dQ/h at the
    node nearest to each jump of Q. Unknowns are ordered node-major, so the
    matrix has m x m blocks.
    """
    if N < 16:
        raise ValidationError(f"Grid size N must be at least 16, got {N}.")
    p, m = tp.potential, tp.m
    xs, h = grid_nodes(tp, N)
    dQ, jumps = p.q_derivative_part()

    lap = sp.diags([-np.ones(N - 1), 2.0 * np.ones(N), -np.ones(N - 1)], [-1, 0, 1]) / h**2
    blocks = _node_values(p.s, xs) + _node_values(dQ, xs)
    for x_j, delta in jumps:
        if not -tp.radius < x_j < tp.radius:
            logger.debug("Jump at %g lies outside the truncation; skipped", x_j)
            continue
        t = (x_j + tp.radius) / h - 1.0
        k = int(np.floor(t + 0.5))
        if abs(abs(t - np.floor(t)) - 0.5) < 1e-9:
            logger.warning("Jump at x=%g lies midway between nodes %d and %d; assigned to node %d", x_j, k - 1, k, k)
        k = min(max(k, 0), N - 1)
        blocks[k] = blocks[k] + delta / h

    potential = sp.block_diag(list(blocks), format="csr")
    return (sp.kron(lap, sp.identity(m), format="csr") + potential).tocsr()


def _fd_is_hermitian(tp):
    return tp.potential.symmetry_class == SymmetryClass.SELFADJOINT


def fd_eigenvalues(tp, N, k=None):
    """FD eigenvalues inside the window, nearest-first around its centre when the sparse path is used."""
    M = discretize_fd(tp, N)
    size = M.shape[0]
    re_lo, re_hi, im_lo, im_hi = tp.window
    hermitian = _fd_is_hermitian(tp)
    if size <= pick(None, "fd_dense_limit"):
        dense = M.toarray()
        values = scipy.linalg.eigvalsh(dense) if hermitian else scipy.linalg.eigvals(dense)
    else:
        k = min(pick(k, "fd_eigs_k"), size - 2)
        sigma = 0.5 * (re_lo + re_hi) + 0.5j * (im_lo + im_hi)
        if hermitian:
            values = eigsh(M, k=k, sigma=sigma.real, return_eigenvectors=False)
        else:
            values = eigs(M.astype(complex), k=k, sigma=sigma, return_eigenvectors=False)
    values = np.asarray(values, dtype=complex)
    inside = (values.real >= re_lo) & (values.real <= re_hi)
    if not hermitian:
        pad = 0.25 * (re_hi - re_lo) if im_lo == im_hi else 0.0
        inside &= (values.imag >= im_lo - pad) & (values.imag <= im_hi + pad)
    return np.sort_complex(values[inside])


@dataclass(frozen=True)
class RichardsonResult:
    coarse: np.ndarray
    fine: np.ndarray
    extrapolated: np.ndarray
    error: np.ndarray
    order: int


def _nodes_hit(tp, N, points):
    _, h = grid_nodes(tp, N)
    t = (np.asarray(points, dtype=float) + tp.radius) / h
    return bool(np.all(np.abs(t - np.round(t)) < 1e-9))


def richardson(tp, N=None):
    """
    Extrapolate FD eigenvalues from h and h/2 (N and 2N + 1 nodes).

    The order is 2 when every breakpoint of the potential is a node of both
    grids and 1 otherwise. ``error`` is |fine - coarse| / (2^order - 1).
    """
    N = 399 if N is None else int(N)
    points = [x for x in tp.potential.breakpoints() if -tp.radius < x < tp.radius]
    order = 2 if _nodes_hit(tp, N, points) and _nodes_hit(tp, 2 * N + 1, points) else 1
    coarse = fd_eigenvalues(tp, N)
    fine = fd_eigenvalues(tp, 2 * N + 1)
    if coarse.size == 0 or fine.size == 0:
        empty = np.array([], dtype=complex)
        return RichardsonResult(coarse, fine, empty, np.array([]), order)
    matched = np.array([coarse[np.argmin(np.abs(coarse - f))] for f in fine])
    factor = 2.0**order - 1.0
    extrapolated = fine + (fine - matched) / factor
    error = np.abs(fine - matched) / factor
    return RichardsonResult(coarse, fine, extrapolated, error, order)


@dataclass(frozen=True)
class SymmetryDefect:
    relative_defect: float
    eigenvalue_mismatch: Optional[float]


def fd_symmetry_defect(tp, N):
    """||M - M^T|| / ||M|| and, for small grids, the distance between the spectra of M and M^T."""
    M = discretize_fd(tp, N)
    defect = sparse_norm(M - M.T) / sparse_norm(M)
    mismatch = None
    if M.shape[0] <= pick(None, "fd_dense_limit"):
        dense = M.toarray()
        a = scipy.linalg.eigvals(dense)
        b = scipy.linalg.eigvals(dense.T)
        mismatch = float(max(np.min(np.abs(b - z)) for z in a))
    return SymmetryDefect(float(defect), mismatch)


# Semigroup

@dataclass(frozen=True)
class ContractionReport:
    norms: tuple
    ratios: tuple
    min_hermitian_eigenvalue: float
    dt: float

    @property
    def max_ratio(self):
        return max(self.ratios) if self.ratios else 1.0

    @property
    def nonincreasing(self):
        return all(r <= 1.0 + 1e-12 for r in self.ratios)

    @property
    def accretive_discretization(self):
        return self.min_hermitian_eigenvalue >= -1e-10


def _min_hermitian_eigenvalue(M):
    H = 0.5 * (M + M.conj().T)
    if H.shape[0] <= pick(None, "fd_dense_limit"):
        return float(scipy.linalg.eigvalsh(H.toarray())[0])
    return float(eigsh(H, k=1, which="SA", return_eigenvectors=False)[0])


def initial_vector(tp, N, kind="exp_decay", seed=0):
    """Initial data on the FD grid: exp(-|x|), exp(-x^2) or seeded noise, in the first component."""
    xs, _ = grid_nodes(tp, N)
    m = tp.m
    if kind == "exp_decay":
        profile = np.exp(-np.abs(xs))
    elif kind == "gaussian":
        profile = np.exp(-xs**2)
    elif kind == "random":
        rng = np.random.default_rng(seed)
        return rng.normal(size=N * m) + 1j * rng.normal(size=N * m)
    else:
        raise ValidationError(f"Unsupported initial vector '{kind}'. Must be one of "
                              "['exp_decay', 'gaussian', 'random'].")
    u0 = np.zeros((N, m), dtype=complex)
    u0[:, 0] = profile
    return u0.ravel()


def _norm_ratio(a, b):
    # An underflowed norm stays at zero under a linear step.
    if a == 0.0:
        return 0.0 if b == 0.0 else np.inf
    return b / a


def contraction_test(tp, u0, dt, steps):
    """
    Crank-Nicolson u_{k+1} = (I + dt/2 L)^{-1} (I - dt/2 L) u_k with the FD
    matrix L. Returns discrete L^2 norms sqrt(h) ||u_k||; the Cayley factor
    is a contraction whenever L is accretive.

    Args:
        tp (TruncatedProblem): Potential and radius; the grid size is len(u0) / m.
        u0 (array): Nonzero initial vector, node-major.
        dt (float): Time step.
        steps (int): Number of steps.

    Returns:
        ContractionReport: Norms, per-step ratios (0 where both norms
        underflow) and the smallest eigenvalue of the Hermitian part of L.
    """
    if dt <= 0:
        raise ValidationError(f"Time step dt must be positive, got {dt}.")
    if steps < 1:
        raise ValidationError(f"Number of steps must be positive, got {steps}.")
    u = np.asarray(u0, dtype=complex).reshape(-1)
    if u.size % tp.m:
        raise ValidationError(f"Initial vector length {u.size} is not a multiple of m={tp.m}.")
    if not np.any(u):
        raise ValidationError("Initial vector is zero; norm ratios are undefined.")
    N = u.size // tp.m
    L = discretize_fd(tp, N).astype(complex)
    _, h = grid_nodes(tp, N)
    eye = sp.identity(L.shape[0], dtype=complex, format="csc")
    try:
        lu = splu((eye + 0.5 * dt * L).tocsc())
    except RuntimeError as e:
        raise LinearSolveError(f"I + dt/2 L is singular for dt={dt}: dt times an eigenvalue hits -2 ({e}).")
    explicit = (eye - 0.5 * dt * L).tocsr()

    norms = [float(np.sqrt(h) * np.linalg.norm(u))]
    for _ in range(steps):
        u = lu.solve(explicit @ u)
        norms.append(float(np.sqrt(h) * np.linalg.norm(u)))
    ratios = [_norm_ratio(a, b) for a, b in zip(norms[:-1], norms[1:])]
    report = ContractionReport(tuple(norms), tuple(ratios), _min_hermitian_eigenvalue(L), float(dt))
    logger.info("Crank-Nicolson over %d steps: max ratio %.15g, min Hermitian eigenvalue %.6g", steps,
                report.max_ratio, report.min_hermitian_eigenvalue)
    return report


# Conjugation

def j_symmetry_residual(p, data, lam, interval, rtol=None, atol=None):
    """
    max over the mesh of ||conj(u) - v|| + ||conj(u^[1]) - v^[1]|| where
    l[u] = lam u with data (c0, c1) and l+[v] = conj(lam) v with the
    conjugated data. For symmetric Q and s, Q* = conj(Q), so v = conj(u).

    Only potentials with symmetric Q and s are accepted. A selfadjoint
    potential whose coefficients are Hermitian but not symmetric raises
    SymmetryClassError: there conj(u) does not solve the adjoint problem.
    """
    if not (p.Q.is_symmetric() and p.s.is_symmetric()):
        raise SymmetryClassError(f"Conjugation residual needs symmetric Q and s; potential is "
                                 f"{p.symmetry_class.value} with non-symmetric coefficients.")
    u = solve_cauchy(p, False, lam, data, interval=interval, rtol=rtol, atol=atol)
    v = solve_cauchy(p, True, np.conj(complex(lam)), data.conjugate(), interval=interval, rtol=rtol, atol=atol)
    m = p.m
    worst = 0.0
    for x in np.union1d(u.nodes, v.nodes):
        yu, yv = u.state(x), v.state(x)
        gap = np.linalg.norm(np.conj(yu[:m]) - yv[:m]) + np.linalg.norm(np.conj(yu[m:]) - yv[m:])
        worst = max(worst, float(gap))
    return worst
