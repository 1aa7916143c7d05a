import logging
import warnings

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from shinzettl.exceptions import QuadratureError
from shinzettl.settings import pick

logger = logging.getLogger(__name__)


def _panel(fn, lo, hi, epsabs, epsrel, limit, depth):
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            value, error = quad(fn, lo, hi, complex_func=True, epsabs=epsabs, epsrel=epsrel, limit=limit)
            return complex(value), float(abs(error))
        except IntegrationWarning as w:
            if depth <= 0:
                raise QuadratureError(f"Quadrature failed on [{lo}, {hi}] after refinement: {w}")
            logger.warning("Quadrature on [%g, %g] did not converge (%s); splitting the panel.", lo, hi, w)

    mid = 0.5 * (lo + hi)
    left = _panel(fn, lo, mid, 0.5 * epsabs, epsrel, limit, depth - 1)
    right = _panel(fn, mid, hi, 0.5 * epsabs, epsrel, limit, depth - 1)
    return left[0] + right[0], left[1] + right[1]


def integrate(fn, a, b, points=(), epsabs=None, epsrel=None, limit=None, refinements=None):
    """
    Adaptive Gauss-Kronrod integral of a complex scalar function over [a, b].

    The interval is split at every point of ``points`` inside (a, b) so that
    no panel straddles a kink or a jump; QUADPACK never samples panel
    endpoints, so one-sided values are what the integrand sees there.
    Returns (value, error estimate).
    """
    epsabs = pick(epsabs, "quad_epsabs")
    epsrel = pick(epsrel, "quad_epsrel")
    limit = pick(limit, "quad_limit")
    refinements = pick(refinements, "quad_refinements")
    if b < a:
        value, error = integrate(fn, b, a, points, epsabs, epsrel, limit, refinements)
        return -value, error
    if b == a:
        return 0j, 0.0

    inner = sorted({float(x) for x in points if a < x < b})
    cuts = [a] + inner + [b]
    panels = len(cuts) - 1
    value, error = 0j, 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        v, e = _panel(fn, lo, hi, epsabs / panels, epsrel, limit, refinements)
        value += v
        error += e
    return value, error


def panel_points(a, b, kinks=(), mesh=1):
    """Kinks inside (a, b) plus ``mesh`` - 1 equally spaced interior cuts."""
    cuts = set(float(x) for x in kinks if a < x < b)
    if mesh > 1:
        cuts.update(np.linspace(a, b, mesh + 1)[1:-1].tolist())
    return sorted(cuts)
