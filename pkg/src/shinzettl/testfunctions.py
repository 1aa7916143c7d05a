"""
Compactly supported test functions and the cutoff families used to build them.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from shinzettl.exceptions import ValidationError

PROFILES = ("cubic", "quintic", "septic", "smooth")


@dataclass(frozen=True, eq=False)
class CompactTestFunction:
    """
    H^1 vector function with support in ``support`` and known u and u'.

    ``value`` and ``derivative`` map a real x to C^m; both are wrapped so they
    vanish outside the support. ``l_value``, when present, gives l[u] pointwise
    (mollified solutions carry it). ``mesh`` is the number of equal quadrature
    panels the support is cut into on top of the kinks.
    """

    support: tuple
    m: int
    value: Callable
    derivative: Callable
    kinks: tuple = ()
    mesh: int = 1
    l_value: Optional[Callable] = None
    label: str = ""

    def __post_init__(self):
        a, b = self.support
        if not a < b:
            raise ValidationError(f"Support must be a nonempty interval, got {self.support}.")

    def _inside(self, x):
        a, b = self.support
        return a <= x <= b

    def __call__(self, x):
        if not self._inside(x):
            return np.zeros(self.m, dtype=complex)
        return np.asarray(self.value(x), dtype=complex).reshape(self.m)

    def d(self, x):
        if not self._inside(x):
            return np.zeros(self.m, dtype=complex)
        return np.asarray(self.derivative(x), dtype=complex).reshape(self.m)

    def l(self, x):
        if self.l_value is None:
            raise ValidationError(f"Test function '{self.label}' carries no l-values.")
        if not self._inside(x):
            return np.zeros(self.m, dtype=complex)
        return np.asarray(self.l_value(x), dtype=complex).reshape(self.m)

    def scaled(self, c):
        """c * w, keeping kinks and l-values consistent."""
        l_value = None if self.l_value is None else (lambda x: c * self.l_value(x))
        return CompactTestFunction(self.support, self.m, lambda x: c * self.value(x),
                                   lambda x: c * self.derivative(x), self.kinks, self.mesh, l_value,
                                   f"{c}*{self.label}")


def _unit(direction, m):
    e = np.zeros(m, dtype=complex) if direction is None else np.asarray(direction, dtype=complex).reshape(m)
    if direction is None:
        e[0] = 1.0
    norm = np.linalg.norm(e)
    if norm == 0:
        raise ValidationError("Direction vector must be nonzero.")
    return e / norm


def hat(center, width, m=1, direction=None):
    """(1 - |x - center| / width)_+ times a unit vector."""
    if width <= 0:
        raise ValidationError(f"Hat width must be positive, got {width}.")
    e = _unit(direction, m)

    def value(x):
        return max(0.0, 1.0 - abs(x - center) / width) * e

    def derivative(x):
        if abs(x - center) >= width or x == center:
            return np.zeros(m, dtype=complex)
        return (-np.sign(x - center) / width) * e

    return CompactTestFunction((center - width, center + width), m, value, derivative,
                               (center - width, center, center + width), 1, None,
                               f"hat(c={center:g}, w={width:g})")


def gaussian(center, sigma, m=1, direction=None, power=0, cutoff=6.0):
    """(x - center)^power exp(-((x - center)/sigma)^2), truncated at |x - center| = cutoff*sigma."""
    if sigma <= 0:
        raise ValidationError(f"Gaussian width must be positive, got {sigma}.")
    e = _unit(direction, m)

    def value(x):
        y = x - center
        return y ** power * np.exp(-(y / sigma) ** 2) * e

    def derivative(x):
        y = x - center
        poly = power * y ** (power - 1) if power > 0 else 0.0
        return (poly - 2.0 * y ** (power + 1) / sigma ** 2) * np.exp(-(y / sigma) ** 2) * e

    half = cutoff * sigma
    return CompactTestFunction((center - half, center + half), m, value, derivative, (center,), 4, None,
                               f"gauss(c={center:g}, sigma={sigma:g}, p={power})")


def sine_bump(a, b, m=1, direction=None):
    """sin(pi (x - a) / (b - a)) on [a, b]."""
    e = _unit(direction, m)
    k = np.pi / (b - a)
    return CompactTestFunction((a, b), m, lambda x: np.sin(k * (x - a)) * e,
                               lambda x: k * np.cos(k * (x - a)) * e, (a, b), 2, None,
                               f"sine({a:g}, {b:g})")


# Ramps rho on [0, 1] with rho(0) = 0, rho(1) = 1, returning (rho, rho', rho'').

def _cubic(t):
    return 3 * t**2 - 2 * t**3, 6 * t - 6 * t**2, 6 - 12 * t


def _quintic(t):
    return (10 * t**3 - 15 * t**4 + 6 * t**5,
            30 * t**2 * (1 - t) ** 2,
            60 * t - 180 * t**2 + 120 * t**3)


def _septic(t):
    return (35 * t**4 - 84 * t**5 + 70 * t**6 - 20 * t**7,
            140 * t**3 * (1 - t) ** 3,
            420 * t**2 - 1680 * t**3 + 2100 * t**4 - 840 * t**5)


def _bump_parts(t):
    positive = t > 0
    safe = np.where(positive, t, 1.0)
    f = np.where(positive, np.exp(-1.0 / safe), 0.0)
    return f, f / safe**2, f * (1 - 2 * safe) / safe**4


def _smooth(t):
    t = np.asarray(t, dtype=float)
    a, da, dda = _bump_parts(t)
    b, db, ddb = _bump_parts(1.0 - t)
    db, ddb = -db, ddb
    S = a + b
    dS = da + db
    N = da * b - a * db
    dN = dda * b - a * ddb
    return a / S, N / S**2, dN / S**2 - 2 * N * dS / S**3


_RAMPS = {"cubic": _cubic, "quintic": _quintic, "septic": _septic, "smooth": _smooth}
_SLOPES = {"cubic": 1.5, "quintic": 1.875, "septic": 2.1875}


def ramp_slope(profile):
    """sup of rho' on [0, 1]."""
    if profile in _SLOPES:
        return _SLOPES[profile]
    res = minimize_scalar(lambda t: -float(_RAMPS[profile](t)[1]), bounds=(0.0, 1.0), method="bounded",
                          options={"xatol": 1e-12})
    return -res.fun


@dataclass(frozen=True)
class CutoffFamily:
    """
    phi_n = 1 on [c - n, c + n], ramps down to 0 on unit transitions, zero
    outside [c - n - 1, c + n + 1]. ``C`` bounds |phi_n'| independently of n.
    """

    n: float
    profile: str = "quintic"
    center: float = 0.0
    C: float = field(init=False)

    def __post_init__(self):
        if self.profile not in _RAMPS:
            raise ValidationError(f"Unsupported cutoff profile '{self.profile}'. Must be one of {list(PROFILES)}.")
        if self.n < 0:
            raise ValidationError(f"Cutoff plateau half-width must be nonnegative, got {self.n}.")
        object.__setattr__(self, "C", ramp_slope(self.profile))

    @property
    def support(self):
        return self.center - self.n - 1, self.center + self.n + 1

    @property
    def kinks(self):
        c, n = self.center, self.n
        return (c - n - 1, c - n, c + n, c + n + 1)

    def _parts(self, x):
        y = np.asarray(x, dtype=float) - self.center
        t = np.clip(self.n + 1 - np.abs(y), 0.0, 1.0)
        rho, drho, ddrho = _RAMPS[self.profile](t)
        ramp = (t > 0) & (t < 1)
        phi = np.where(t >= 1, 1.0, np.where(t <= 0, 0.0, rho))
        dphi = np.where(ramp, -np.sign(y) * drho, 0.0)
        ddphi = np.where(ramp, ddrho, 0.0)
        return phi, dphi, ddphi

    def phi(self, x):
        return self._parts(x)[0]

    def dphi(self, x):
        return self._parts(x)[1]

    def d2phi(self, x):
        return self._parts(x)[2]
