"""
Cauchy problems for the first-order Shin-Zettl system

    (u, u^[1])' = A(x) (u, u^[1]) - lam * E21 (u, u^[1]) + (0, -f),

which encodes l[u] = lam*u + f. Integration restarts at every breakpoint of Q,
s and f, and each sub-interval is stepped with a right-hand side pinned to the
potential pieces of that sub-interval, so a step never reads across a jump.
"""
import logging
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
import pandas as pd
from scipy.integrate import RK45, OdeSolution

from shinzettl.exceptions import BlowUpError, ToleranceError, ValidationError
from shinzettl.potential import adjoint_potential, shin_zettl
from shinzettl.settings import pick
from shinzettl.testfunctions import CompactTestFunction

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class CauchyData:
    x0: float
    c0: np.ndarray
    c1: np.ndarray

    @property
    def m(self):
        return self.c0.size

    def conjugate(self):
        return CauchyData(self.x0, np.conj(self.c0), np.conj(self.c1))


def make_cauchy_data(x0, c0, c1, m=None):
    c0 = np.atleast_1d(np.asarray(c0, dtype=complex)).reshape(-1)
    c1 = np.atleast_1d(np.asarray(c1, dtype=complex)).reshape(-1)
    if c0.size != c1.size:
        raise ValidationError(f"Cauchy vectors differ in length: c0 has {c0.size}, c1 has {c1.size}.")
    if m is not None and c0.size != m:
        raise ValidationError(f"Cauchy vectors must have length m={m}, got {c0.size}.")
    if not np.isfinite(x0):
        raise ValidationError(f"Initial point x0 must be finite, got {x0}.")
    return CauchyData(float(x0), c0, c1)


@dataclass(frozen=True, eq=False)
class Forcing:
    """Right-hand side f of l[u] = lam*u + f with its discontinuities."""

    fn: Callable
    breakpoints: tuple = ()

    def __call__(self, x):
        return np.asarray(self.fn(x), dtype=complex).reshape(-1)


@dataclass(frozen=True)
class _Segment:
    lo: float
    hi: float
    dense: OdeSolution


class QuasiValues(NamedTuple):
    u: np.ndarray
    u_prime: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    l_value: np.ndarray


@dataclass(frozen=True, eq=False)
class QuasiSolution:
    """
    Dense trajectory (u, u^[1]) of l[u] = lam*u + f (or of l+ when ``adjoint``).

    ``segments`` are the restart sub-intervals in increasing order, each with
    the quartic dense output of RK45 over its accepted steps.
    """

    potential: object
    adjoint: bool
    lam: complex
    interval: tuple
    data: CauchyData
    forcing: Optional[Forcing]
    segments: tuple
    rtol: float
    atol: float
    n_steps: int
    interpolation_order: int = 4

    @property
    def m(self):
        return self.potential.m

    @property
    def system_potential(self):
        """The potential whose Shin-Zettl system was integrated: (Q, s) or (Q*, s*)."""
        return adjoint_potential(self.potential) if self.adjoint else self.potential

    def _segment(self, x, side):
        a, b = self.interval
        if not a <= x <= b:
            raise ValidationError(f"x={x} lies outside the solution interval [{a}, {b}].")
        if side == "left":
            i = bisect_left([s.hi for s in self.segments], x)
        else:
            i = bisect_right([s.lo for s in self.segments], x) - 1
        return self.segments[min(max(i, 0), len(self.segments) - 1)]

    def state(self, x, side="auto"):
        """(u(x), u^[1](x)) as one vector of length 2m."""
        return np.asarray(self._segment(x, side).dense(x), dtype=complex)

    def __call__(self, x, side="auto"):
        return self.state(x, side)[: self.m]

    def quasi(self, x, side="auto"):
        return self.state(x, side)[self.m:]

    def derivative(self, x, side="auto"):
        y = self.state(x, side)
        Q = self.system_potential.Q(x, side)
        return y[self.m:] + Q @ y[: self.m]

    def forcing_value(self, x):
        return np.zeros(self.m, dtype=complex) if self.forcing is None else self.forcing(x)

    def l_values(self, x):
        """l[u](x) = lam*u(x) + f(x) along the solution."""
        return self.lam * self(x) + self.forcing_value(x)

    def sample(self, xs):
        return np.array([self.state(float(x)) for x in np.asarray(xs, dtype=float).reshape(-1)])

    @property
    def nodes(self):
        ts = np.concatenate([np.asarray(s.dense.ts) for s in self.segments])
        return np.unique(ts)

    def discontinuities(self):
        forcing = () if self.forcing is None else tuple(self.forcing.breakpoints)
        a, b = self.interval
        points = set(self.potential.breakpoints().tolist()) | set(forcing)
        return sorted(x for x in points if a < x < b)

    def to_frame(self, xs=None):
        xs = self.nodes if xs is None else np.asarray(xs, dtype=float)
        ys = self.sample(xs)
        columns = {"x": xs}
        for k in range(self.m):
            columns[f"u_{k}_re"] = ys[:, k].real
            columns[f"u_{k}_im"] = ys[:, k].imag
        for k in range(self.m):
            columns[f"u1_{k}_re"] = ys[:, self.m + k].real
            columns[f"u1_{k}_im"] = ys[:, self.m + k].imag
        return pd.DataFrame(columns)


def _rhs(system, lam, forcing, anchor, ncols):
    matrix = system.pinned(anchor, shift=lam)
    m = system.potential.m

    def fun(x, y):
        dy = matrix(x) @ y.reshape(2 * m, ncols)
        if forcing is not None:
            dy[m:, 0] -= forcing(x)
        return dy.ravel()

    return fun


def _cuts(x_from, x_to, stops):
    lo, hi = min(x_from, x_to), max(x_from, x_to)
    inner = sorted({float(x) for x in stops if lo < x < hi}, reverse=x_to < x_from)
    return [x_from] + inner + [x_to]


def _advance(system, lam, forcing, y0, x_from, x_to, stops, rtol, atol, max_steps, threshold, dense=True):
    """
    Step a (2m, ncols) block from x_from to x_to, restarting at every stop.

    Returns (segments, y_end, steps). Forcing is applied to the first column
    only, so blocks of homogeneous solutions are propagated with forcing=None.
    """
    shape = y0.shape
    y = np.asarray(y0, dtype=complex).ravel()
    segments, steps = [], 0
    if x_from == x_to:
        return segments, y.reshape(shape), steps

    cuts = _cuts(x_from, x_to, stops)
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        solver = RK45(_rhs(system, lam, forcing, 0.5 * (lo + hi), shape[1]), lo, y, hi, rtol=rtol, atol=atol)
        ts, interps = [lo], []
        while solver.status == "running":
            message = solver.step()
            if solver.status == "failed":
                raise ToleranceError(f"Integrator failed near x={solver.t:.6g}: {message}")
            if not np.all(np.isfinite(solver.y)) or np.max(np.abs(solver.y)) > threshold:
                raise BlowUpError(f"Solution norm exceeded {threshold:g} after x={ts[-1]:.6g}.", last_x=ts[-1])
            steps += 1
            if steps > max_steps:
                raise ToleranceError(f"Step budget of {max_steps:g} exhausted at x={solver.t:.6g}.")
            if dense:
                ts.append(solver.t)
                interps.append(solver.dense_output())
        y = solver.y
        if dense:
            segments.append(_Segment(min(lo, hi), max(lo, hi), OdeSolution(ts, interps)))
    return segments, y.reshape(shape), steps


def solve_cauchy(p, adjoint=False, lam=0.0, data=None, forcing=None, interval=(-1.0, 1.0),
                 rtol=None, atol=None, max_steps=None, blowup_threshold=None):
    """
    Solve l[u] = lam*u + f (l+ when ``adjoint``) with u(x0) = c0, u^[1](x0) = c1.

    Integration proceeds from x0 to the right end and then from x0 to the
    left end. Raises BlowUpError with the last good x when the solution norm
    passes the blow-up threshold.

    Args:
        p (Potential): The potential q = Q' + s.
        adjoint (bool): Solve with l+ (the system of Q*, s*) instead of l.
        lam (complex): Spectral parameter.
        data (CauchyData): x0, c0 = u(x0) and c1 = u^[1](x0). Defaults to
            u(a) = (1, ..., 1), u^[1](a) = 0 at the left end of ``interval``.
        forcing (Forcing): Optional right-hand side f.
        interval (tuple): (a, b) with a < b, containing x0.
        rtol, atol, max_steps, blowup_threshold: Integrator settings; None
            takes the value from solver_config.json.

    Returns:
        QuasiSolution: Dense u and u^[1] on [a, b].
    """
    rtol = pick(rtol, "rtol")
    atol = pick(atol, "atol")
    max_steps = pick(max_steps, "max_steps")
    threshold = pick(blowup_threshold, "blowup_threshold")
    if rtol <= 0 or atol <= 0:
        raise ValidationError(f"Tolerances must be positive, got rtol={rtol}, atol={atol}.")

    a, b = float(interval[0]), float(interval[1])
    if not a < b:
        raise ValidationError(f"Interval must satisfy a < b, got [{a}, {b}].")
    if data is None:
        data = make_cauchy_data(a, np.ones(p.m), np.zeros(p.m))
    if data.m != p.m:
        raise ValidationError(f"Cauchy data has length {data.m}, potential has m={p.m}.")
    if not a <= data.x0 <= b:
        raise ValidationError(f"x0={data.x0} lies outside [{a}, {b}].")

    system_p = adjoint_potential(p) if adjoint else p
    system = shin_zettl(system_p)
    stops = list(p.breakpoints())
    if forcing is not None:
        stops.extend(forcing.breakpoints)

    y0 = np.concatenate([data.c0, data.c1]).reshape(-1, 1)
    lam = complex(lam)
    segments, steps = [], 0
    for end in (b, a):
        found, _, n = _advance(system, lam, forcing, y0, data.x0, end, stops, rtol, atol, max_steps - steps,
                               threshold)
        segments.extend(found)
        steps += n
    segments.sort(key=lambda s: s.lo)

    logger.debug("solve_cauchy: m=%d lam=%s on [%g, %g] from x0=%g in %d steps (%d restarts)",
                 p.m, lam, a, b, data.x0, steps, len(segments))
    return QuasiSolution(p, bool(adjoint), lam, (a, b), data, forcing, tuple(segments), rtol, atol, steps)


def fundamental_matrix(p, adjoint=False, lam=0.0, x0=0.0, x1=1.0, rtol=None, atol=None, max_steps=None,
                       blowup_threshold=None):
    """2m x 2m matrix whose columns are the solutions at x1 started from the unit vectors at x0."""
    m = p.m
    system_p = adjoint_potential(p) if adjoint else p
    _, M, _ = _advance(shin_zettl(system_p), complex(lam), None, np.eye(2 * m, dtype=complex), float(x0),
                       float(x1), p.breakpoints(), pick(rtol, "rtol"), pick(atol, "atol"),
                       pick(max_steps, "max_steps"), pick(blowup_threshold, "blowup_threshold"), dense=False)
    return M


@dataclass(frozen=True)
class ScaledBlock:
    """
    Propagated block Y = ``columns`` times an upper triangular factor R
    whose determinant is phase * exp(log_scale). ``max_log_scale`` is the
    largest log volume reached along the way.
    """

    columns: np.ndarray
    log_scale: float
    phase: complex
    max_log_scale: float


def propagate_scaled(p, adjoint=False, lam=0.0, x_from=0.0, x_to=1.0, block=None, rtol=None, atol=None,
                     renormalize_every=None, max_steps=None):
    """
    Propagate a (2m, k) block with QR renormalization at regular chunk ends.

    Used where the plain fundamental matrix would overflow: only the
    orthonormal columns travel and the growth is carried as log factors.
    """
    rtol = pick(rtol, "rtol")
    atol = pick(atol, "atol")
    spacing = pick(renormalize_every, "renormalize_every")
    budget = pick(max_steps, "max_steps")
    system_p = adjoint_potential(p) if adjoint else p
    system = shin_zettl(system_p)
    m = p.m
    Y = np.eye(2 * m, dtype=complex) if block is None else np.asarray(block, dtype=complex)

    n_chunks = max(1, int(np.ceil(abs(x_to - x_from) / spacing)))
    ends = np.linspace(x_from, x_to, n_chunks + 1)
    stops = p.breakpoints()
    log_scale, phase, max_log = 0.0, 1.0 + 0j, 0.0
    used = 0
    for lo, hi in zip(ends[:-1], ends[1:]):
        _, Y, n = _advance(system, complex(lam), None, Y, lo, hi, stops, rtol, atol, budget - used, np.inf,
                           dense=False)
        used += n
        Y, R = np.linalg.qr(Y)
        d = np.diag(R)
        magnitude = np.abs(d)
        if np.any(magnitude == 0):
            raise ToleranceError(f"Propagated block lost rank at x={hi:.6g}.")
        log_scale += float(np.sum(np.log(magnitude)))
        phase *= complex(np.prod(d / magnitude))
        max_log = max(max_log, log_scale)
    return ScaledBlock(Y, log_scale, phase, max_log)


def quasiderivatives(sol, x, side="auto"):
    """
    (u, u', u^[1], u^[2], l[u]) at x.

    u' = u^[1] + Q u is one-sided at jumps of Q. u^[2] = (u^[1])' + Q u^[1] +
    (Q^2 - s) u with (u^[1])' read from the integrated system, which gives
    u^[2] = -(lam*u + f) and l[u] = -u^[2].
    """
    y = sol.state(x, side)
    m = sol.m
    u, u1 = y[:m], y[m:]
    sp = sol.system_potential
    Q, s = sp.Q(x, side), sp.s(x, side)
    f = sol.forcing_value(x)
    du1 = (-Q @ Q + s - sol.lam * np.eye(m)) @ u - Q @ u1 - f
    u2 = du1 + Q @ u1 + (Q @ Q - s) @ u
    return QuasiValues(u, u1 + Q @ u, u1, u2, -u2)


def system_residual(sol, xs=None, h=1e-5):
    """
    max ||y' - A_lam y - (0, -f)|| over sample points, with y' from central
    differences of the dense output. Points within h of a breakpoint are skipped.
    """
    a, b = sol.interval
    breaks = np.array([a, b] + sol.discontinuities())
    xs = np.linspace(a, b, 201) if xs is None else np.asarray(xs, dtype=float)
    system = shin_zettl(sol.system_potential)
    m = sol.m
    worst = 0.0
    for x in xs:
        if np.min(np.abs(breaks - x)) <= 2 * h:
            continue
        dy = (sol.state(x + h) - sol.state(x - h)) / (2 * h)
        A = system(x).copy()
        A[m:, :m] -= sol.lam * np.eye(m)
        rhs = A @ sol.state(x)
        rhs[m:] -= sol.forcing_value(x)
        worst = max(worst, float(np.linalg.norm(dy - rhs)))
    return worst


def wronskian(u, v, t):
    """(u(t), v^[1](t)) - (u^[1](t), v(t)) with (a, b) = sum a * conj(b)."""
    yu, yv = u.state(t), v.state(t)
    m = u.m
    return complex(np.vdot(yv[m:], yu[:m]) - np.vdot(yv[:m], yu[m:]))


def mollify_to_domain(sol, phi):
    """
    phi*u as a compactly supported test function carrying l[phi*u].

    ``phi`` is any cutoff with ``phi``, ``dphi``, ``d2phi``, ``support`` and
    ``kinks`` (a CutoffFamily member). l[phi u] = phi l[u] - phi'' u - 2 phi' u'.
    """
    a, b = sol.interval
    lo, hi = phi.support
    if lo < a or hi > b:
        raise ValidationError(f"Cutoff support [{lo}, {hi}] is not inside the solution interval [{a}, {b}].")

    def value(x):
        return float(phi.phi(x)) * sol(x)

    def derivative(x):
        return float(phi.dphi(x)) * sol(x) + float(phi.phi(x)) * sol.derivative(x)

    def l_value(x):
        u = sol(x)
        return (float(phi.phi(x)) * sol.l_values(x) - float(phi.d2phi(x)) * u
                - 2.0 * float(phi.dphi(x)) * sol.derivative(x))

    kinks = tuple(sorted(set(phi.kinks) | {x for x in sol.discontinuities() if lo < x < hi}))
    mesh = max(2, int(np.ceil(hi - lo)))
    label = f"mollified(lam={sol.lam}, adjoint={sol.adjoint}, support=[{lo:g}, {hi:g}])"
    return CompactTestFunction((lo, hi), sol.m, value, derivative, kinks, mesh, l_value, label)
