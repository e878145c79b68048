"""Adaptive integration of the scaled field with event location.

Two flows are provided:

* :func:`integrate` evolves ``y' = V_eps(y)`` in R^3;
* :func:`integrate_polar` evolves the coupled 5-dimensional system
  ``(y, r, phi)`` where ``r' = (sigma + A_eps(y)) r`` and
  ``phi' = -mu + B_eps(y)`` carry the polar radius and the *lifted* polar
  angle of ``(y1, y2)`` alongside ``y``.

Stepping uses scipy's Dormand-Prince 5(4) pair (``RK45``) one step at a
time so that events can be checked on each step's dense output.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import RK45

from .errors import (
    BlowupError,
    DegenerateRadiusError,
    DomainError,
    InitializationError,
    ParameterError,
    StiffnessError,
)
from .fields import BUILTIN_QUADRATIC, NONE, Eigentriple, FieldSpec, eval_V_scaled
from .geometry import as_vec3, in_B1

ATOL = 1e-12
RTOL = 1e-10
MIN_STEP = 1e-15
BLOWUP_NORM = 1e6
MAX_BISECTIONS = 80
#: Relative time tolerance of event localization.
EVENT_TTOL = 1e-13
#: ``|g(x0)|`` below this counts as starting on the event surface.
EVENT_ZERO = 1e-12
POLAR_CONSISTENCY = 1e-9
R_FLOOR = 1e-300


class EventKind(enum.Enum):
    HIT_Y3_LEVEL = "hit_y3_level"
    HIT_CYLINDER_RADIUS = "hit_cylinder_radius"
    EXIT_B1 = "exit_b1"


_DIRECTIONS = ("increasing", "decreasing", "any")


@dataclass(frozen=True)
class EventSpec:
    """A section crossing to watch for.

    ``value`` is the level, the radius or the B1 margin depending on ``kind``.
    The sign convention is ``g = y3 - level``, ``g = |P_L y| - radius`` and
    ``g = max(|y3|, |P_L y|) - (1 + margin)``; ``increasing`` means ``g``
    passes from negative to positive.
    """

    kind: EventKind
    value: float
    direction: str = "any"

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ParameterError("event parameter must be finite")
        if self.direction not in _DIRECTIONS:
            raise ParameterError(f"direction must be one of {_DIRECTIONS}")
        if self.kind is EventKind.EXIT_B1 and self.value < 0:
            raise ParameterError("B1 margin must be non-negative")

    @classmethod
    def hit_y3_level(cls, level: float, direction: str = "increasing") -> "EventSpec":
        return cls(EventKind.HIT_Y3_LEVEL, float(level), direction)

    @classmethod
    def hit_cylinder_radius(cls, radius: float, direction: str = "decreasing") -> "EventSpec":
        return cls(EventKind.HIT_CYLINDER_RADIUS, float(radius), direction)

    @classmethod
    def exit_b1(cls, margin: float = 1e-9) -> "EventSpec":
        return cls(EventKind.EXIT_B1, float(margin), "increasing")

    def g(self, y) -> float:
        if self.kind is EventKind.HIT_Y3_LEVEL:
            return y[2] - self.value
        if self.kind is EventKind.HIT_CYLINDER_RADIUS:
            return math.hypot(y[0], y[1]) - self.value
        return max(abs(y[2]), math.hypot(y[0], y[1])) - (1.0 + self.value)

    def crosses(self, g0: float, g1: float) -> bool:
        if self.direction == "increasing":
            return g0 < 0.0 <= g1
        if self.direction == "decreasing":
            return g0 > 0.0 >= g1
        return (g0 < 0.0 <= g1) or (g0 > 0.0 >= g1)


@dataclass
class EventRecord:
    event: EventSpec
    index: int
    t: float
    state: np.ndarray


@dataclass
class PolarState:
    y: np.ndarray
    r: float
    phi: float

    def as_array(self) -> np.ndarray:
        return np.array([self.y[0], self.y[1], self.y[2], self.r, self.phi])


@dataclass
class Trajectory:
    """Node times and states plus (optionally) per-step dense interpolants.

    ``states`` has 3 columns for the plain flow and 5 columns
    ``(y1, y2, y3, r, phi)`` for the polar flow.
    """

    times: np.ndarray
    states: np.ndarray
    dense: Optional[list] = field(default=None, repr=False)

    @property
    def polar(self) -> bool:
        return self.states.shape[1] == 5

    def __len__(self) -> int:
        return len(self.times)

    def __call__(self, t: float) -> np.ndarray:
        """Evaluate the dense output at time ``t``."""
        if not self.dense:
            raise DomainError("trajectory has no dense output")
        if not (self.times[0] <= t <= self.times[-1]):
            raise DomainError(f"t={t} outside [{self.times[0]}, {self.times[-1]}]")
        k = int(np.searchsorted(self.times, t, side="left"))
        k = min(max(k, 1), len(self.dense))
        return np.asarray(self.dense[k - 1](t), dtype=float)

    def polar_states(self) -> list[PolarState]:
        if not self.polar:
            raise DomainError("trajectory does not carry polar coordinates")
        return [PolarState(s[:3].copy(), float(s[3]), float(s[4])) for s in self.states]

    def to_csv(self, path) -> None:
        header = ["t", "y1", "y2", "y3"] + (["r", "phi"] if self.polar else [])
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for t, s in zip(self.times, self.states):
                w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in s])


# ---------------------------------------------------------------------------
# right-hand sides


def _rhs3(spec: FieldSpec, epsilon: float) -> Callable:
    s, m, u = spec.eigen.sigma, spec.eigen.mu, spec.eigen.u
    if spec.kind == NONE:

        def f(t, y):
            return np.array([s * y[0] + m * y[1], -m * y[0] + s * y[1], u * y[2]])

    elif spec.kind == BUILTIN_QUADRATIC:
        a = epsilon * spec.eta0
        b = epsilon * a

        def f(t, y):
            y1, y2, y3 = y[0], y[1], y[2]
            return np.array(
                [
                    s * y1 + m * y2 + a * y1 * y3,
                    -m * y1 + s * y2 - a * y2 * y3,
                    u * y3 + b * y3 * (y1 * y1 + y2 * y2),
                ]
            )

    else:

        def f(t, y):
            return eval_V_scaled(spec, epsilon, y[:3])

    return f


def _rhs5(spec: FieldSpec, epsilon: float) -> Callable:
    f3 = _rhs3(spec, epsilon)
    s, m = spec.eigen.sigma, spec.eigen.mu

    def f(t, z):
        y = z[:3]
        v = f3(t, y)
        rr = y[0] * y[0] + y[1] * y[1]
        if rr == 0.0:
            raise DegenerateRadiusError("trajectory reached the U axis")
        # remainder R_L = P_L(V_eps(y) - A y)
        R1 = v[0] - (s * y[0] + m * y[1])
        R2 = v[1] - (-m * y[0] + s * y[1])
        A_cal = (R1 * y[0] + R2 * y[1]) / rr
        B_cal = (-R1 * y[1] + R2 * y[0]) / rr
        return np.array([v[0], v[1], v[2], (s + A_cal) * z[3], -m + B_cal])

    return f


# ---------------------------------------------------------------------------
# the stepping loop


def _localize(ev: EventSpec, sol, t0: float, t1: float, g0: float) -> float:
    """Bisection then secant polish for the sign change of ``ev.g`` in ``[t0, t1]``."""
    lo, hi, glo = t0, t1, g0
    for _ in range(MAX_BISECTIONS):
        if hi - lo <= EVENT_TTOL * max(1.0, abs(hi)):
            break
        mid = 0.5 * (lo + hi)
        gm = ev.g(sol(mid))
        if (glo < 0.0) == (gm < 0.0) and gm != 0.0:
            lo, glo = mid, gm
        else:
            hi = mid
    ghi = ev.g(sol(hi))
    if ghi != glo:
        ts = lo - glo * (hi - lo) / (ghi - glo)
        if lo <= ts <= hi:
            return ts
    return hi


def _run(
    fun: Callable,
    z0: np.ndarray,
    t_max: float,
    events: Sequence[EventSpec],
    atol,
    rtol: float,
    check: Optional[Callable] = None,
):
    if not t_max > 0:
        raise ParameterError("t_max must be positive")
    events = list(events)
    g_prev = [ev.g(z0) for ev in events]
    for i, ev in enumerate(events):
        if ev.direction == "any" and abs(g_prev[i]) <= EVENT_ZERO:
            traj = Trajectory(np.array([0.0]), z0[None, :].copy(), [])
            return traj, EventRecord(ev, i, 0.0, z0.copy())

    solver = RK45(fun, 0.0, z0, t_max, rtol=rtol, atol=atol)
    times, states, dense = [0.0], [z0.copy()], []
    while solver.status == "running":
        msg = solver.step()
        if solver.status == "failed":
            raise StiffnessError(f"integration failed at t={solver.t}: {msg}")
        t0, t1 = solver.t_old, solver.t
        if t1 - t0 < MIN_STEP:
            raise StiffnessError(f"step size {t1 - t0:.3e} below {MIN_STEP}")
        z1 = solver.y
        if not np.all(np.isfinite(z1)) or np.linalg.norm(z1[:3]) > BLOWUP_NORM:
            raise BlowupError(f"state norm exceeded {BLOWUP_NORM} at t={t1}")
        if check is not None:
            check(z1)
        sol = solver.dense_output()
        g_new = [ev.g(z1) for ev in events]
        hits = []
        for i, ev in enumerate(events):
            if ev.crosses(g_prev[i], g_new[i]):
                hits.append((_localize(ev, sol, t0, t1, g_prev[i]), i))
        if hits:
            te, i = min(hits)
            ze = np.asarray(sol(te), dtype=float)
            times.append(te)
            states.append(ze)
            dense.append(sol)
            traj = Trajectory(np.array(times), np.array(states), dense)
            return traj, EventRecord(events[i], i, te, ze.copy())
        times.append(t1)
        states.append(z1.copy())
        dense.append(sol)
        g_prev = g_new
    return Trajectory(np.array(times), np.array(states), dense), None


def integrate(
    spec: FieldSpec,
    epsilon: float,
    x0,
    t_max: float,
    events: Sequence[EventSpec] = (),
    atol: float = ATOL,
    rtol: float = RTOL,
):
    """Integrate ``y' = V_eps(y)`` from ``x0`` until the first event or ``t_max``.

    Returns ``(trajectory, record)`` where ``record`` is an
    :class:`EventRecord` or ``None``.  The event time is located on the
    dense output to ``1e-13 * max(1, |t|)``; when several events fire in one
    step the earliest wins, ties going to the first in ``events``.
    """
    if not epsilon > 0:
        raise ParameterError("epsilon must be positive")
    z0 = as_vec3(x0)
    return _run(_rhs3(spec, epsilon), z0, t_max, events, atol, rtol)


def integrate_polar(
    spec: FieldSpec,
    epsilon: float,
    x0,
    phi0: float,
    t_max: float,
    events: Sequence[EventSpec] = (),
    atol: float = ATOL,
    rtol: float = RTOL,
):
    """Integrate the 5-dimensional system ``(y, r, phi)`` from ``(x0, |P_L x0|, phi0)``.

    ``phi0`` may be any lift of the polar angle of ``(x0_1, x0_2)``.
    """
    if not epsilon > 0:
        raise ParameterError("epsilon must be positive")
    y0 = as_vec3(x0)
    r0 = math.hypot(y0[0], y0[1])
    if r0 == 0.0:
        raise DegenerateRadiusError("x0 lies on the U axis")
    if math.hypot(y0[0] / r0 - math.cos(phi0), y0[1] / r0 - math.sin(phi0)) > POLAR_CONSISTENCY:
        raise InitializationError(f"phi0={phi0} is not a lift of the angle of ({y0[0]}, {y0[1]})")
    z0 = np.array([y0[0], y0[1], y0[2], r0, float(phi0)])
    if np.ndim(atol) == 0:
        atol = np.array([atol, atol, atol, atol, atol])

    def check(z):
        if z[3] < R_FLOOR:
            raise DegenerateRadiusError(f"polar radius {z[3]!r} underflowed")

    return _run(_rhs5(spec, epsilon), z0, t_max, events, atol, rtol, check)


# ---------------------------------------------------------------------------
# envelope monitors


@dataclass
class EnvelopeReport:
    passed: bool
    inside_B1: bool
    worst_r_violation: float
    worst_phi_violation: float
    min_r_slack: float
    min_phi_slack: float
    nodes: int

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "inside_B1": self.inside_B1,
            "worst_r_violation": self.worst_r_violation,
            "worst_phi_violation": self.worst_phi_violation,
            "min_r_slack": self.min_r_slack,
            "min_phi_slack": self.min_phi_slack,
            "nodes": self.nodes,
        }


ENVELOPE_RTOL = 1e-7


def check_envelopes(traj: Trajectory, eigen: Eigentriple, eta: float, rtol: float = ENVELOPE_RTOL) -> EnvelopeReport:
    """Compare a polar trajectory with the exponential and linear envelopes.

    Checks ``r(0) e^((sigma-eta)t) <= r(t) <= r(0) e^((sigma+eta)t)`` in
    logarithmic form and ``(-mu-eta)t <= phi(t) - phi(0) <= (-mu+eta)t``.
    Violations are measured relative to ``max(1, |bound|)``.
    """
    if not traj.polar:
        raise DomainError("envelope check needs a polar trajectory")
    t = traj.times - traj.times[0]
    S = traj.states
    inside = all(in_B1(s[:3], 1e-9) for s in S)
    logr = np.log(S[:, 3] / S[0, 3])
    dphi = S[:, 4] - S[0, 4]
    s, m = eigen.sigma, eigen.mu
    r_lo, r_hi = (s - eta) * t, (s + eta) * t
    p_lo, p_hi = (-m - eta) * t, (-m + eta) * t
    r_viol = np.maximum(r_lo - logr, logr - r_hi) / np.maximum(1.0, np.maximum(abs(r_lo), abs(r_hi)))
    p_viol = np.maximum(p_lo - dphi, dphi - p_hi) / np.maximum(1.0, np.maximum(abs(p_lo), abs(p_hi)))
    wr = float(max(0.0, r_viol.max()))
    wp = float(max(0.0, p_viol.max()))
    # slack is reported away from t = 0 where both bounds collapse
    interior = t > 0
    if interior.any():
        r_slack = float(np.minimum(logr - r_lo, r_hi - logr)[interior].min())
        p_slack = float(np.minimum(dphi - p_lo, p_hi - dphi)[interior].min())
    else:
        r_slack = p_slack = 0.0
    ok = inside and wr <= rtol and wp <= rtol
    return EnvelopeReport(bool(ok), bool(inside), wr, wp, r_slack, p_slack, len(t))
