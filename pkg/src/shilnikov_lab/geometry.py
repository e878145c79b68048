"""Fixed geometric vocabulary of the construction.

State space is R^3 = L + U with L the (x1, x2) plane and U the x3 axis.
The entry section M_I is the unit cylinder |P_L x| = 1, the exit section
M_E is the plane x3 = 1.  Points of M_I near the landing angle ``omega``
are described by the chart ``(psi, delta) -> (cos(omega+psi),
sin(omega+psi), delta)``.
"""
from __future__ import annotations

import enum
import math
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ChartCutError, DegenerateRadiusError, DomainError, NotOnSectionError, UndersamplingError

#: Membership tolerance for the sections M_I and M_E.
TOL_SECTION = 1e-9
#: Angular half-width of the excluded antipodal ray of the chart.
CHART_CUT_TOL = 1e-6

TWO_PI = 2.0 * math.pi


class PlanePoint(NamedTuple):
    """Point ``(psi, delta)`` of the chart plane."""

    psi: float
    delta: float


class SectionId(enum.Enum):
    INNER_CYLINDER = "M_I"
    EXIT_PLANE = "M_E"


def as_vec3(x) -> np.ndarray:
    v = np.asarray(x, dtype=float).reshape(3)
    if not np.all(np.isfinite(v)):
        raise DomainError(f"non-finite state {v!r}")
    return v


def project_L(x) -> np.ndarray:
    v = as_vec3(x)
    return np.array([v[0], v[1], 0.0])


def project_U(x) -> np.ndarray:
    v = as_vec3(x)
    return np.array([0.0, 0.0, v[2]])


def in_B1(x, margin: float = 0.0) -> bool:
    """True iff ``x`` lies in the truncated cylinder B1 enlarged by ``margin``."""
    if margin < 0:
        raise DomainError("margin must be non-negative")
    v = as_vec3(x)
    return bool(abs(v[2]) <= 1.0 + margin and math.hypot(v[0], v[1]) <= 1.0 + margin)


def wrap_angle(theta: float) -> float:
    """Reduce an angle to the half-open interval (-pi, pi]."""
    r = math.remainder(theta, TWO_PI)
    if r == -math.pi:
        r = math.pi
    return r


def chart_K(p, omega_eps: float) -> np.ndarray:
    psi, delta = float(p[0]), float(p[1])
    if not (-math.pi < psi < math.pi):
        raise DomainError(f"chart coordinate psi={psi} outside (-pi, pi)")
    return np.array([math.cos(omega_eps + psi), math.sin(omega_eps + psi), delta])


def chart_K_inverse(x, omega_eps: float) -> PlanePoint:
    """Inverse of :func:`chart_K` on M_I minus the antipodal ray.

    Raises :class:`NotOnSectionError` when ``|P_L x|`` differs from 1 by
    more than :data:`TOL_SECTION` and :class:`ChartCutError` when the
    point is within :data:`CHART_CUT_TOL` of angle ``omega_eps + pi``.
    """
    v = as_vec3(x)
    rho = math.hypot(v[0], v[1])
    if abs(rho - 1.0) >= TOL_SECTION:
        raise NotOnSectionError(f"|P_L x| = {rho!r} is not 1")
    psi = wrap_angle(math.atan2(v[1], v[0]) - omega_eps)
    if abs(psi) > math.pi - CHART_CUT_TOL:
        raise ChartCutError(f"point at angle omega+{psi} lies on the chart cut")
    return PlanePoint(psi, float(v[2]))


def continuous_angle(samples: Sequence[Sequence[float]], phi0: float) -> np.ndarray:
    """Lift the polar angles of a sampled planar curve to a continuous branch.

    The first angle is the representative closest to ``phi0``; every later
    one differs from its predecessor by less than pi.
    """
    pts = np.asarray(samples, dtype=float)
    if pts.ndim != 2 or pts.shape[1] < 2:
        raise DomainError("samples must be a sequence of 2-vectors")
    pts = pts[:, :2]
    norms = np.hypot(pts[:, 0], pts[:, 1])
    if np.any(norms == 0.0):
        raise DegenerateRadiusError("zero-norm sample has no angle")
    out = np.empty(len(pts))
    out[0] = phi0 + wrap_angle(math.atan2(pts[0, 1], pts[0, 0]) - phi0)
    for k in range(1, len(pts)):
        a, b = pts[k - 1], pts[k]
        step = math.atan2(a[0] * b[1] - a[1] * b[0], a[0] * b[0] + a[1] * b[1])
        if abs(step) >= math.pi * (1.0 - 1e-12):
            raise UndersamplingError(f"samples {k - 1} and {k} are (nearly) antipodal")
        out[k] = out[k - 1] + step
    return out
