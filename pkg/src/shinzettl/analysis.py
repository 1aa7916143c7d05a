"""
Lagrange brackets, Green's identity, accretivity forms and the kernel-growth
diagnostic for L00 and L00+.

Inner products on C^m are (a, b) = sum_k a_k * conj(b_k).
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from joblib import Parallel, delayed
from tqdm import tqdm

from shinzettl.cauchy import make_cauchy_data, mollify_to_domain, solve_cauchy, wronskian
from shinzettl.exceptions import AdjointMismatchError, BlowUpError, ValidationError
from shinzettl.potential import adjoint_potential
from shinzettl.quadrature import integrate, panel_points
from shinzettl.settings import pick
from shinzettl.testfunctions import (PROFILES, CompactTestFunction, CutoffFamily, gaussian, hat,
                                     sine_bump)

logger = logging.getLogger(__name__)

__all__ = [
    "CompactTestFunction", "CutoffFamily", "FormReport", "FamilyMember", "ScanReport", "DirectionReport",
    "KernelGrowthReport", "bracket", "green_identity_residual", "bracket_tail", "adjoint_pairing_residual",
    "form_value", "default_family", "accretivity_scan", "recheck", "cutoff_family", "kernel_growth_test",
    "cutoff_energy_gap", "cutoff_identity_residual", "weidmann_coincidence_residual", "regularity_report",
    "positivity_certificate", "hat", "gaussian", "sine_bump",
]

OPERATORS = ("l", "l+")


def _ip(a, b):
    return complex(np.vdot(b, a))


def _check_pair(u, v):
    if u.adjoint or not v.adjoint:
        raise AdjointMismatchError("A bracket needs u solved with l and v solved with l+ "
                                   f"(got adjoint flags u={u.adjoint}, v={v.adjoint}).")
    if not u.potential == v.potential:
        raise AdjointMismatchError("u and v were solved for different potentials.")


def bracket(u, v, t):
    """[u, v](t) = (u, v^[1]) - (u^[1], v) for an (l, l+) pair."""
    _check_pair(u, v)
    return wronskian(u, v, t)


def _pair_points(u, v, a, b):
    return sorted({x for x in u.discontinuities() + v.discontinuities() if a < x < b})


def green_identity_residual(u, v, a, b):
    """|int_a^b (l[u], v) - int_a^b (u, l+[v]) - [u, v](b) + [u, v](a)|."""
    _check_pair(u, v)
    if not (max(u.interval[0], v.interval[0]) <= a < b <= min(u.interval[1], v.interval[1])):
        raise ValidationError(f"[{a}, {b}] is not inside both solution intervals.")

    def integrand(x):
        return _ip(u.l_values(x), v(x)) - _ip(u(x), v.l_values(x))

    value, _ = integrate(integrand, a, b, _pair_points(u, v, a, b))
    return float(abs(value - wronskian(u, v, b) + wronskian(u, v, a)))


def bracket_tail(u, v, radii):
    """[(r, [u,v](-r), [u,v](r)) for r in radii]; diagnostic only."""
    _check_pair(u, v)
    radii = [float(r) for r in radii]
    if any(r1 <= r0 for r0, r1 in zip(radii[:-1], radii[1:])):
        raise ValidationError(f"Radii must be increasing, got {radii}.")
    return [(r, wronskian(u, v, -r), wronskian(u, v, r)) for r in radii]


def adjoint_pairing_residual(p, w, v):
    """|<l[w], v> - <w, l+[v]>| over supp w, for w carrying l-values and v an l+ solution."""
    if not v.adjoint:
        raise AdjointMismatchError("v must be a solution of l+ (adjoint flag set).")
    if not v.potential == p:
        raise AdjointMismatchError("v was solved for a different potential.")
    lo, hi = w.support
    if lo < v.interval[0] or hi > v.interval[1]:
        raise ValidationError(f"Support [{lo}, {hi}] is not inside v's interval {v.interval}.")

    def integrand(x):
        return _ip(w.l(x), v(x)) - _ip(w(x), v.l_values(x))

    points = panel_points(lo, hi, list(w.kinks) + v.discontinuities(), w.mesh)
    value, _ = integrate(integrand, lo, hi, points)
    return float(abs(value))


@dataclass(frozen=True)
class FormReport:
    value: complex
    kinetic: complex
    q_term: complex
    s_term: complex
    error: float

    @property
    def real_part(self):
        return self.value.real

    @property
    def breakdown(self):
        return {"kinetic": self.kinetic, "q_term": self.q_term, "s_term": self.s_term}


def form_value(p, w):
    """
    int (w', w') - int [(Q w', w) + (Q w, w')] + int (s w, w) over supp w.

    This is <l[w], w> with the Q' part of q moved onto w by parts.
    """
    if w.m != p.m:
        raise ValidationError(f"Test function has m={w.m}, potential has m={p.m}.")
    lo, hi = w.support
    points = panel_points(lo, hi, list(w.kinks) + p.breakpoints().tolist(), w.mesh)
    Q, s = p.Q, p.s

    def kinetic(x):
        d = w.d(x)
        return _ip(d, d)

    def q_term(x):
        u, d, Qx = w(x), w.d(x), Q(x)
        return -(_ip(Qx @ d, u) + _ip(Qx @ u, d))

    def s_term(x):
        u = w(x)
        return _ip(s(x) @ u, u)

    parts = [integrate(fn, lo, hi, points) for fn in (kinetic, q_term, s_term)]
    (k, ek), (qv, eq), (sv, es) = parts
    logger.debug("form_value(%s): kinetic=%.6g q=%s s=%s", w.label, k.real, qv, sv)
    return FormReport(k + qv + sv, k, qv, sv, ek + eq + es)


def cutoff_family(n, profile="quintic", center=0.0):
    """phi_n with plateau [c - n, c + n] and unit transitions."""
    if n < 1:
        raise ValidationError(f"Cutoff index n must be at least 1, got {n}.")
    if profile not in PROFILES:
        raise ValidationError(f"Unsupported cutoff profile '{profile}'. Must be one of {list(PROFILES)}.")
    return CutoffFamily(n, profile, center)


# Accretivity scans

KINDS = ("hat", "gaussian", "mollified")


@dataclass(frozen=True)
class FamilyMember:
    """Parameters that rebuild one test function deterministically."""

    kind: str
    center: float
    scale: float
    direction: tuple
    power: int = 0
    lam: complex = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"Unsupported family kind '{self.kind}'. Must be one of {list(KINDS)}.")

    def build(self, p):
        direction = np.array(self.direction, dtype=complex)
        if self.kind == "hat":
            return hat(self.center, self.scale, p.m, direction)
        if self.kind == "gaussian":
            return gaussian(self.center, self.scale, p.m, direction, self.power)
        cutoff = CutoffFamily(self.scale, center=self.center)
        data = make_cauchy_data(self.center, direction, np.zeros(p.m), p.m)
        sol = solve_cauchy(p, lam=self.lam, data=data, interval=cutoff.support)
        return mollify_to_domain(sol, cutoff)

    def to_dict(self):
        return {"kind": self.kind, "center": self.center, "scale": self.scale,
                "direction": list(self.direction), "power": self.power, "lam": self.lam}


def _directions(m):
    eye = np.eye(m, dtype=complex)
    found = [tuple(eye[k]) for k in range(m)]
    for i in range(m):
        for j in range(i + 1, m):
            found.append(tuple((eye[i] + eye[j]) / np.sqrt(2)))
            found.append(tuple((eye[i] + 1j * eye[j]) / np.sqrt(2)))
    return found


def default_family(p, seed=None, random_members=0):
    """
    Hats of widths 2^k (k = -3..6), Gaussians times 1 or (x - c), and
    mollified Cauchy solutions, centred at 0 and at every jump of the
    potential, in coordinate and mixed directions. ``random_members`` extra
    hats are drawn from a generator seeded with ``seed``.
    """
    centers = sorted({0.0} | {float(x) for x in p.jump_points()})
    directions = _directions(p.m)
    members = []
    for c in centers:
        for d in directions:
            members.extend(FamilyMember("hat", c, 2.0 ** k, d) for k in range(-3, 7))
            members.extend(FamilyMember("gaussian", c, sigma, d, power)
                           for sigma in (0.5, 1.0, 2.0, 4.0) for power in (0, 1))
    for d in directions[: p.m]:
        members.extend(FamilyMember("mollified", 0.0, n, d, lam=lam) for n in (1, 2) for lam in (-1.0, 0.0))

    if random_members:
        rng = np.random.default_rng(seed)
        for _ in range(random_members):
            raw = rng.normal(size=p.m) + 1j * rng.normal(size=p.m)
            members.append(FamilyMember("hat", float(rng.uniform(-4.0, 4.0)), float(2.0 ** rng.uniform(-3.0, 6.0)),
                                        tuple(raw / np.linalg.norm(raw))))
    return members


def _member_value(p, member):
    return form_value(p, member.build(p)).value


@dataclass(frozen=True)
class ScanEntry:
    operator: str
    member: FamilyMember
    value: complex


@dataclass(frozen=True)
class ScanReport:
    """
    Minimum of Re form over the family. A negative minimum certifies that the
    operator is not accretive; a nonnegative one is evidence only.
    """

    minimum: float
    operator: str
    witness: FamilyMember
    witness_value: complex
    negative: bool
    entries: tuple = field(repr=False)

    @property
    def evidence(self):
        return "non_accretive" if self.negative else "no_negative_value_found"

    def minimum_for(self, operator):
        return min(e.value.real for e in self.entries if e.operator == operator)


def accretivity_scan(p, family=None, operators=OPERATORS, seed=None, random_members=0, tol=None, n_jobs=None,
                     progress=False):
    """
    Evaluate Re form_value over the family for l (form of p) and l+ (form of
    adjoint_potential(p)). Members are rebuilt per operator, so mollified
    members use solutions of the operator being probed.
    """
    tol = pick(tol, "accretivity_tol")
    unknown = [op for op in operators if op not in OPERATORS]
    if unknown:
        raise ValidationError(f"Unknown operator(s) {unknown}. Must be among {list(OPERATORS)}.")
    if family is None:
        family = default_family(p, seed, random_members)
    family = list(family)
    if not family:
        raise ValidationError("Empty test-function family.")

    targets = {"l": p, "l+": adjoint_potential(p)}
    jobs = [(op, member) for op in operators for member in family]
    if n_jobs is not None and n_jobs != 1:
        with Parallel(n_jobs=n_jobs) as parallel:
            values = parallel(delayed(_member_value)(targets[op], member) for op, member in jobs)
    else:
        values = [_member_value(targets[op], member)
                  for op, member in tqdm(jobs, desc="accretivity scan", disable=not progress)]

    entries = tuple(ScanEntry(op, member, complex(v)) for (op, member), v in zip(jobs, values))
    best = min(entries, key=lambda e: e.value.real)
    negative = best.value.real < -tol
    logger.info("Accretivity scan over %d members: min Re form = %.6g (%s, %s)", len(entries), best.value.real,
                best.operator, best.member.kind)
    return ScanReport(best.value.real, best.operator, best.member, best.value, negative, entries)


def recheck(p, report):
    """Re form_value recomputed at the scan's arg-min."""
    target = p if report.operator == "l" else adjoint_potential(p)
    return form_value(target, report.witness.build(target)).real_part


# Kernel growth

VERDICTS = ("blow_up", "ratio_exceeds_bound", "non_decaying_tail", "inconclusive")


@dataclass(frozen=True)
class DirectionReport:
    label: str
    data: tuple
    verdict: str
    ratios: tuple
    ring_masses: tuple
    last_x: Optional[float] = None


@dataclass(frozen=True)
class KernelGrowthReport:
    shift: float
    n_max: int
    bound: float
    directions: tuple

    @property
    def trivial_kernel_evidence(self):
        return all(d.verdict != "inconclusive" for d in self.directions)


def _cell_masses(sol, n):
    """I_k = int_k^{k+1} |v|^2 for k = -n-1 .. n."""
    points = sol.discontinuities()

    def density(x):
        v = sol(x)
        return float(np.vdot(v, v).real)

    masses = {}
    for k in range(-n - 1, n + 1):
        masses[k], _ = integrate(density, k, k + 1, points)
    return {k: value.real for k, value in masses.items()}


def ratio_sequence(masses, n_max):
    """r_n = int_{-n}^{n} |v|^2 / int_{n <= |x| <= n+1} |v|^2 and the ring masses, n = 1..n_max."""
    ratios, rings = [], []
    inner = 0.0
    for n in range(1, n_max + 1):
        inner += masses[n - 1] + masses[-n]
        ring = masses[n] + masses[-n - 1]
        rings.append(ring)
        ratios.append(inner / ring if ring > 0 else np.inf)
    return ratios, rings


def _verdict(ratios, rings, bound):
    half = len(ratios) // 2
    tail = ratios[half:]
    if ratios[-1] > bound and all(b >= a for a, b in zip(tail[:-1], tail[1:])):
        return "ratio_exceeds_bound"
    if rings[-1] >= rings[max(half - 1, 0)]:
        return "non_decaying_tail"
    return "inconclusive"


def kernel_growth_test(p, shift=-1.0, n_max=30, draws=None, seed=0, profile="quintic", rtol=None, atol=None,
                       progress=False):
    """
    Growth of r_n for a basis of solutions of l+[v] = shift*v plus random combinations.

    Every L^2 solution would keep r_n <= C^2 where C bounds the cutoff slopes,
    so r_n exceeding C^2 and still growing, a ring mass that does not decay,
    or an outright blow-up all count as evidence that v is not square
    integrable. The canonical data are (u, u^[1])(0) = unit vectors of C^{2m}.

    Args:
        p (Potential): The potential; solutions are taken for its l+.
        shift (float): Spectral parameter of the kernel, -1 by default.
        n_max (int): Largest cutoff index n, at least 2.
        draws (int): Random complex combinations on top of the 2m unit directions.
        seed (int): Seed for the random combinations.
        profile (str): Cutoff ramp whose slope bound C gives the threshold C^2.
        rtol, atol: Integrator tolerances.

    Returns:
        KernelGrowthReport: One verdict per direction. ``trivial_kernel_evidence``
        is True when no direction is inconclusive.
    """
    if n_max < 2:
        raise ValidationError(f"n_max must be at least 2, got {n_max}.")
    draws = pick(draws, "kernel_random_draws")
    m = p.m
    bound = CutoffFamily(1, profile).C ** 2
    rng = np.random.default_rng(seed)

    vectors = [(f"basis[{k}]", np.eye(2 * m, dtype=complex)[k]) for k in range(2 * m)]
    for j in range(draws):
        raw = rng.normal(size=2 * m) + 1j * rng.normal(size=2 * m)
        vectors.append((f"random[{j}]", raw / np.linalg.norm(raw)))

    reports = []
    for label, vec in tqdm(vectors, desc="kernel growth", disable=not progress):
        data = make_cauchy_data(0.0, vec[:m], vec[m:], m)
        limit = n_max + 1
        try:
            sol = solve_cauchy(p, adjoint=True, lam=shift, data=data, interval=(-limit, limit), rtol=rtol,
                               atol=atol)
        except BlowUpError as e:
            reports.append(_after_blow_up(p, shift, data, label, vec, e, rtol, atol))
            continue
        ratios, rings = ratio_sequence(_cell_masses(sol, n_max), n_max)
        verdict = _verdict(ratios, rings, bound)
        logger.debug("kernel growth %s: r_%d = %.6g, verdict %s", label, n_max, ratios[-1], verdict)
        reports.append(DirectionReport(label, tuple(vec), verdict, tuple(ratios), tuple(rings)))

    report = KernelGrowthReport(float(shift), int(n_max), bound, tuple(reports))
    logger.info("Kernel growth (shift=%g, n_max=%d): trivial kernel evidence = %s", shift, n_max,
                report.trivial_kernel_evidence)
    return report


def _after_blow_up(p, shift, data, label, vec, error, rtol, atol):
    """Blow-up is recorded as a non-L^2 direction; ratios are kept on a shorter interval when possible."""
    logger.info("kernel growth %s: blow-up after x=%.6g", label, error.last_x)
    n = int(np.floor(abs(error.last_x))) - 2
    ratios, rings = (), ()
    if n >= 1:
        try:
            sol = solve_cauchy(p, adjoint=True, lam=shift, data=data, interval=(-n - 1, n + 1), rtol=rtol, atol=atol)
            r, g = ratio_sequence(_cell_masses(sol, n), n)
            ratios, rings = tuple(r), tuple(g)
        except BlowUpError:
            pass
    return DirectionReport(label, tuple(vec), "blow_up", ratios, rings, float(error.last_x))


def cutoff_energy_gap(v, family):
    """int (phi_n')^2 |v|^2 - int phi_n^2 |v|^2 over supp phi_n for a function v: x -> C^m."""
    lo, hi = family.support

    def gap(x):
        value = np.atleast_1d(np.asarray(v(x), dtype=complex))
        mass = float(np.vdot(value, value).real)
        return (float(family.dphi(x)) ** 2 - float(family.phi(x)) ** 2) * mass

    value, _ = integrate(gap, lo, hi, family.kinks)
    return value.real


@dataclass(frozen=True)
class CutoffIdentityReport:
    form: complex
    identity: complex
    residual: float
    cross_term_real: float


def cutoff_identity_residual(p, v, family):
    """
    For v solving l+[v] = mu*v, compare the l+ form of phi*v with
    mu int phi^2|v|^2 + int phi'^2 |v|^2 + int phi phi' ((v, v') - (v', v)).
    The cross term is purely imaginary.
    """
    if not v.adjoint or not v.potential == p:
        raise AdjointMismatchError("v must be a solution of l+ for this potential.")
    if v.forcing is not None:
        raise ValidationError("The cutoff identity needs a homogeneous solution (no forcing).")
    w = mollify_to_domain(v, family)
    form = form_value(adjoint_potential(p), w).value
    lo, hi = family.support
    points = panel_points(lo, hi, list(w.kinks), w.mesh)

    def weighted(x):
        value = v(x)
        mass = float(np.vdot(value, value).real)
        return v.lam * float(family.phi(x)) ** 2 * mass + float(family.dphi(x)) ** 2 * mass

    def cross(x):
        value, d = v(x), v.derivative(x)
        return float(family.phi(x)) * float(family.dphi(x)) * (_ip(value, d) - _ip(d, value))

    main, _ = integrate(weighted, lo, hi, points)
    cross_value, _ = integrate(cross, lo, hi, points)
    identity = main + cross_value
    return CutoffIdentityReport(form, identity, float(abs(form - identity)), float(cross_value.real))


def weidmann_coincidence_residual(sol, xs=None, h=1e-5):
    """
    max ||tau[u] - l[u]|| with tau[u] = -(u^[1])' - Q* u^[1] - (Q*Q - s) u.

    (u^[1])' comes from central differences of the dense output; points near
    breakpoints are skipped. Vanishes up to discretization error when Q = Q*.
    """
    a, b = sol.interval
    breaks = np.array([a, b] + sol.discontinuities())
    xs = np.linspace(a, b, 101) if xs is None else np.asarray(xs, dtype=float)
    sp = sol.system_potential
    worst = 0.0
    for x in xs:
        if np.min(np.abs(breaks - x)) <= 2 * h:
            continue
        du1 = (sol.quasi(x + h) - sol.quasi(x - h)) / (2 * h)
        Q, s = sp.Q(x), sp.s(x)
        Qh = Q.conj().T
        tau = -du1 - Qh @ sol.quasi(x) - (Qh @ Q - s) @ sol(x)
        worst = max(worst, float(np.linalg.norm(tau - sol.l_values(x))))
    return worst


@dataclass(frozen=True)
class RegularityReport:
    u_norm: float
    derivative_norm: float
    l_norm: float


def regularity_report(sol, a, b):
    """L^2 norms of u, u' and l[u] over [a, b]."""
    if not sol.interval[0] <= a < b <= sol.interval[1]:
        raise ValidationError(f"[{a}, {b}] is not inside the solution interval {sol.interval}.")
    points = [x for x in sol.discontinuities() if a < x < b]

    def norm(fn):
        value, _ = integrate(lambda x: float(np.vdot(fn(x), fn(x)).real), a, b, points)
        return float(np.sqrt(max(value.real, 0.0)))

    return RegularityReport(norm(sol), norm(sol.derivative), norm(sol.l_values))


@dataclass(frozen=True)
class PositivityCertificate:
    certified: bool
    violation: Optional[tuple] = None


def _min_hermitian_eig(M):
    return float(np.min(np.linalg.eigvalsh(0.5 * (M + M.conj().T))))


def positivity_certificate(p, samples=33, tol=0.0, window=10.0):
    """
    Sufficient condition for accretivity of both L00 and L00+: the Hermitian
    parts of the pointwise Q' + s and of every jump of Q are positive
    semidefinite. Interior pieces are checked on Chebyshev samples plus their
    endpoints; a potential without breakpoints is sampled on [-window, window].
    ``violation`` is (what, x, smallest eigenvalue).
    """
    dQ, jumps = p.q_derivative_part()
    for x, delta in jumps:
        e = _min_hermitian_eig(delta)
        if e < -tol:
            return PositivityCertificate(False, ("jump of Q", x, e))

    breaks = p.breakpoints()
    if breaks.size:
        cuts = np.concatenate([[breaks[0] - 1.0], breaks, [breaks[-1] + 1.0]])
    else:
        cuts = np.array([-window, window])
    k = np.arange(samples)
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        xs = np.concatenate([[lo, hi], lo + 0.5 * (hi - lo) * (1 - np.cos(np.pi * (k + 0.5) / samples))])
        for x in xs:
            for side in ("left", "right"):
                M = dQ(x, side) + p.s(x, side)
                e = _min_hermitian_eig(M)
                if e < -tol:
                    return PositivityCertificate(False, ("Q' + s", float(x), e))
    return PositivityCertificate(True)
