"""Inner map, outer map, return map and the calibration of a scenario.

The inner map follows the scaled flow from the entry cylinder M_I to the
exit plane M_E.  For the closed-form fields it is evaluated by the
log-polar kernel (:mod:`shilnikov_lab.kernel`), otherwise by the generic
polar flow.  The outer map returns from M_E to M_I, either through the
analytic near-identity model

    E(z) = K(N(kappa P_L z)),   N(w) = w + beta |w|^2/(1 + |w|^2) J w,

with ``J w = (w2, -w1)``, or by integrating a user field around its global
excursion.  In chart coordinates the return map is
``R(psi, delta) = K^-1(E(I(K(psi, delta))))``.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import kernel
from .constants import c_eta, delta1_of, delta_beta, exit_exponents, k_eta, level_condition, op_norm
from .errors import (
    CalibrationFailure,
    CalibrationInfeasible,
    DomainError,
    EscapeFailureError,
    GapFailureError,
    HypothesisError,
    OuterExcursionError,
    OutOfDomainError,
    ParameterError,
    PrecisionInfeasible,
    UsageError,
)
from .fields import FieldSpec, check_hypotheses, eval_V_scaled, exponent_condition
from .flow import EventSpec, Trajectory, integrate, integrate_polar
from .geometry import TOL_SECTION, PlanePoint, as_vec3, chart_K, chart_K_inverse

ALPHA_CAP = math.pi / 4
#: Angular and height half-widths of the landing window of the analytic outer map.
OMEGA_I = math.pi - 1e-6
DELTA_I = 0.999
#: Radius of the exit disk on which the outer map is defined.
R_EPS = 1.0
ALPHA_FLOOR = 1e-6
DELTA2_FLOOR = 1e-12
KERNEL_RTOL = 1e-12
KERNEL_ATOL = 1e-12
FD_KAPPA_STEP = 1e-6
PSI_SCAN = 64
PSI_TOL = 1e-10

ANALYTIC = "analytic"
ODE = "ode"

# names of the admissibility conditions reported by calibration and verification
BETA_RANGE = "beta_range"
ALPHA_DOMAIN = "alpha_domain"
NEAR_IDENTITY = "near_identity"
EXPONENT_CONDITION = "exponent_condition"
LEVEL_CONDITION = "level_condition"


@dataclass(frozen=True)
class OuterBackend:
    """Which outer map to use.

    ``analytic`` uses the rotational near-identity model with strength
    ``beta`` of the scenario; ``ode`` integrates the field itself and
    needs ``tau_hint``, the expected excursion time.
    """

    kind: str = ANALYTIC
    tau_hint: Optional[float] = None

    def __post_init__(self):
        if self.kind not in (ANALYTIC, ODE):
            raise UsageError(f"unknown outer backend {self.kind!r}")
        if self.kind == ODE and not (self.tau_hint is not None and self.tau_hint > 0):
            raise ParameterError("the ode outer backend needs tau_hint > 0")

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == ANALYTIC:
            out["perturbation"] = "rotational"
        else:
            out["tau_hint"] = self.tau_hint
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "OuterBackend":
        return cls(obj.get("kind", ANALYTIC), obj.get("tau_hint"))


@dataclass(frozen=True)
class ScenarioConfig:
    """All constants of a calibrated scenario.

    ``kappa`` is stored as a nested tuple; ``kappa_matrix`` gives the array.
    """

    field: FieldSpec
    epsilon: float
    eta: float
    beta: float
    omega_eps: float = 0.0
    kappa: tuple = ((1.0, 0.0), (0.0, 1.0))
    psi_eps: float = math.nan
    alpha: float = math.nan
    delta_beta: float = math.nan
    delta2: float = math.nan
    delta1: float = math.nan
    r_eps1: float = math.nan
    delta_I1: float = math.nan
    omega_I: float = OMEGA_I
    delta_I: float = DELTA_I
    alpha_cap: float = ALPHA_CAP
    outer: OuterBackend = OuterBackend()
    kernel_rtol: float = KERNEL_RTOL
    provenance: dict = dataclasses.field(default_factory=dict, compare=False)

    @property
    def eigen(self):
        return self.field.eigen

    @property
    def c_eta(self) -> float:
        return c_eta(self.eigen, self.eta)

    @property
    def k_eta(self) -> float:
        return k_eta(self.eigen, self.eta)

    @property
    def kappa_matrix(self) -> np.ndarray:
        return np.array(self.kappa, dtype=float)

    @property
    def kappa_inv(self) -> np.ndarray:
        return np.linalg.inv(self.kappa_matrix)

    def with_(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def checks(self) -> dict:
        """Admissibility table of the calibrated constants."""
        e = self.eigen
        return {
            BETA_RANGE: bool(0.0 <= self.beta <= 0.5),
            ALPHA_DOMAIN: bool(self.alpha < min(self.omega_I, self.delta_I1)),
            EXPONENT_CONDITION: bool(exponent_condition(e, self.eta)),
            LEVEL_CONDITION: bool(level_condition(e, self.eta, self.delta2, self.delta_beta, self.kappa_matrix)),
            "delta_order": bool(0 < self.delta1 < self.delta2 <= self.delta_beta <= 2.0 / 3.0 * self.alpha),
            "delta1_formula": bool(self.delta1 == delta1_of(e, self.eta, self.delta2)),
        }

    def to_json(self) -> dict:
        return {
            "field": self.field.to_json(),
            "epsilon": self.epsilon,
            "eta": self.eta,
            "beta": self.beta,
            "omega_eps": self.omega_eps,
            "kappa": [list(row) for row in self.kappa],
            "outer": self.outer.to_json(),
            "constants": {
                "c_eta": self.c_eta,
                "k_eta": self.k_eta,
                "alpha": self.alpha,
                "alpha_cap": self.alpha_cap,
                "delta_beta": self.delta_beta,
                "delta2": self.delta2,
                "delta1": self.delta1,
                "r_eps1": self.r_eps1,
                "delta_I1": self.delta_I1,
                "omega_I": self.omega_I,
                "delta_I": self.delta_I,
                "psi_eps": self.psi_eps,
            },
            "kernel_rtol": self.kernel_rtol,
            "checks": self.checks(),
            "provenance": dict(self.provenance),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ScenarioConfig":
        try:
            spec = FieldSpec.from_json(obj["field"])
            c = obj["constants"]
            return cls(
                field=spec,
                epsilon=float(obj["epsilon"]),
                eta=float(obj["eta"]),
                beta=float(obj["beta"]),
                omega_eps=float(obj.get("omega_eps", 0.0)),
                kappa=tuple(tuple(float(v) for v in row) for row in obj.get("kappa", [[1, 0], [0, 1]])),
                psi_eps=float(c["psi_eps"]),
                alpha=float(c["alpha"]),
                delta_beta=float(c["delta_beta"]),
                delta2=float(c["delta2"]),
                delta1=float(c["delta1"]),
                r_eps1=float(c["r_eps1"]),
                delta_I1=float(c["delta_I1"]),
                omega_I=float(c.get("omega_I", OMEGA_I)),
                delta_I=float(c.get("delta_I", DELTA_I)),
                alpha_cap=float(c.get("alpha_cap", ALPHA_CAP)),
                outer=OuterBackend.from_json(obj.get("outer", {})),
                kernel_rtol=float(obj.get("kernel_rtol", KERNEL_RTOL)),
                provenance=dict(obj.get("provenance", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, UsageError):
                raise
            raise UsageError(f"malformed scenario: {exc}") from exc


@dataclass
class InnerResult:
    exit_point: np.ndarray
    travel_time: float
    exit_radius: float
    exit_angle: float
    trajectory: Optional[Trajectory] = field(default=None, repr=False)


class ExitData(NamedTuple):
    """Inner-map exit in log-polar form plus optional derivatives.

    ``dpsi`` and ``ddelta`` hold the derivatives of ``(L, phi, t)``.
    """

    L: float
    phi: float
    t: float
    dpsi: Optional[tuple] = None
    ddelta: Optional[tuple] = None


# ---------------------------------------------------------------------------
# inner map


def _spec(cfg: ScenarioConfig, spec: Optional[FieldSpec]) -> FieldSpec:
    return cfg.field if spec is None else spec


def _kernel_coeffs(spec: FieldSpec, epsilon: float) -> tuple[float, float]:
    a = epsilon * spec.eta0
    return a, epsilon * a


def _t_cap(cfg: ScenarioConfig, delta: float) -> float:
    rate = cfg.eigen.u - cfg.eta
    if rate <= 0:
        rate = 0.5 * cfg.eigen.u
    return 10.0 * (-math.log(delta)) / rate


def _exit_flow(cfg: ScenarioConfig, spec: FieldSpec, psi: float, delta: float, with_traj: bool = False):
    x0 = chart_K((psi, delta), cfg.omega_eps)
    phi0 = cfg.omega_eps + psi
    scale = min(1.0, delta)
    atol = np.array([1e-12 * scale, 1e-12 * scale, 1e-12 * delta, 1e-12 * scale, 1e-12])
    traj, ev = integrate_polar(
        spec,
        cfg.epsilon,
        x0,
        phi0,
        _t_cap(cfg, delta),
        [EventSpec.hit_y3_level(1.0, "increasing")],
        atol=atol,
        rtol=min(1e-10, cfg.kernel_rtol * 100),
    )
    if ev is None:
        raise EscapeFailureError(f"no exit through y3 = 1 before t = {_t_cap(cfg, delta):.6g}")
    for z in traj.states:
        if eval_V_scaled(spec, cfg.epsilon, z[:3])[2] <= 0 < z[2]:
            raise EscapeFailureError("height stopped increasing before the exit")
    z = ev.state
    return ExitData(math.log(z[3]), float(z[4]), float(ev.t)), traj


def exit_data(
    cfg: ScenarioConfig, psi: float, delta: float, jac: bool = False, spec: Optional[FieldSpec] = None
) -> ExitData:
    """Log-radius, lifted angle and travel time at the exit plane for the chart point ``(psi, delta)``."""
    spec = _spec(cfg, spec)
    if not (0.0 < delta < 1.0):
        raise DomainError(f"height delta={delta} outside (0, 1)")
    if spec.is_polynomial:
        e = spec.eigen
        a, b = _kernel_coeffs(spec, cfg.epsilon)
        rtol = cfg.kernel_rtol
        out = kernel.inner_flow(e.sigma, e.mu, e.u, a, b, cfg.omega_eps + psi, delta, rtol, KERNEL_ATOL, jac)
        if not jac:
            return ExitData(out[0], out[1], out[2])
        return ExitData(out[0], out[1], out[2], tuple(out[4]), tuple(out[5]))
    base, _ = _exit_flow(cfg, spec, psi, delta)
    if not jac:
        return base
    hp, hd = 1e-6, 1e-6 * delta
    p1, _ = _exit_flow(cfg, spec, psi + hp, delta)
    p0, _ = _exit_flow(cfg, spec, psi - hp, delta)
    d1, _ = _exit_flow(cfg, spec, psi, delta + hd)
    d0, _ = _exit_flow(cfg, spec, psi, delta - hd)
    dpsi = tuple((p1[k] - p0[k]) / (2 * hp) for k in range(3))
    ddel = tuple((d1[k] - d0[k]) / (2 * hd) for k in range(3))
    return base._replace(dpsi=dpsi, ddelta=ddel)


def _check_on_MI(x: np.ndarray) -> None:
    if abs(math.hypot(x[0], x[1]) - 1.0) > TOL_SECTION:
        raise DomainError("point is not on the entry cylinder")
    if not (0.0 < x[2] < 1.0):
        raise DomainError(f"height x3={x[2]} outside (0, 1)")


def travel_time(cfg: ScenarioConfig, x, spec: Optional[FieldSpec] = None) -> float:
    """First time the flow from ``x`` on M_I reaches the exit plane ``y3 = 1``."""
    v = as_vec3(x)
    _check_on_MI(v)
    p = chart_K_inverse(v, cfg.omega_eps)
    t = exit_data(cfg, p.psi, p.delta, spec=spec).t
    if t > _t_cap(cfg, p.delta):
        raise EscapeFailureError(f"travel time {t} exceeds the escape cap")
    return t


def _kernel_trajectory(cfg: ScenarioConfig, spec: FieldSpec, psi: float, delta: float) -> Trajectory:
    e = spec.eigen
    a, b = _kernel_coeffs(spec, cfg.epsilon)
    nodes = np.array(
        kernel.inner_flow_path(e.sigma, e.mu, e.u, a, b, cfg.omega_eps + psi, delta, cfg.kernel_rtol, KERNEL_ATOL)
    )
    s, L, phi, t = nodes.T
    r = np.exp(L)
    states = np.column_stack([r * np.cos(phi), r * np.sin(phi), np.exp(s), r, phi])
    return Trajectory(t.copy(), states)


def inner_map(
    cfg: ScenarioConfig,
    p,
    spec: Optional[FieldSpec] = None,
    with_trajectory: bool = False,
    method: str = "auto",
) -> InnerResult:
    """Exit data of the chart point ``p = (psi, delta)``.

    ``method`` selects the log-polar kernel (``"kernel"``, closed-form
    fields only), the generic 5-dimensional flow (``"flow"``) or the best
    available one (``"auto"``).  ``exit_angle`` is the lift continued from
    ``omega_eps + psi``.
    """
    spec = _spec(cfg, spec)
    psi, delta = float(p[0]), float(p[1])
    if not (-math.pi < psi < math.pi and 0.0 < delta < 1.0):
        raise DomainError(f"chart point {p} outside (-pi, pi) x (0, 1)")
    use_kernel = method == "kernel" or (method == "auto" and spec.is_polynomial)
    if method not in ("auto", "kernel", "flow"):
        raise UsageError(f"unknown method {method!r}")
    if use_kernel and not spec.is_polynomial:
        raise UsageError("the kernel handles only the closed-form fields")
    traj = None
    if use_kernel:
        ex = exit_data(cfg, psi, delta, spec=spec)
        if with_trajectory:
            traj = _kernel_trajectory(cfg, spec, psi, delta)
    else:
        ex, traj = _exit_flow(cfg, spec, psi, delta)
        if not with_trajectory:
            traj = None
    if ex.t > _t_cap(cfg, delta):
        raise EscapeFailureError("exit later than the escape cap")
    r = math.exp(ex.L)
    point = np.array([r * math.cos(ex.phi), r * math.sin(ex.phi), 1.0])
    return InnerResult(point, ex.t, r, ex.phi, traj)


# ---------------------------------------------------------------------------
# outer map


def near_identity(beta: float, w: np.ndarray) -> np.ndarray:
    """``N(w) = w + beta * rho(w)`` with ``rho(w) = |w|^2/(1+|w|^2) (w2, -w1)``; rows are points."""
    w = np.asarray(w, dtype=float)
    s = np.sum(w * w, axis=-1, keepdims=True)
    f = s / (1.0 + s)
    Jw = np.stack([w[..., 1], -w[..., 0]], axis=-1)
    return w + beta * f * Jw


def near_identity_jacobian(beta: float, w) -> np.ndarray:
    """Derivative of :func:`near_identity` at a single point ``w``."""
    w = np.asarray(w, dtype=float).reshape(2)
    s = float(w @ w)
    f = s / (1.0 + s)
    fp = 1.0 / (1.0 + s) ** 2
    J = np.array([[0.0, 1.0], [-1.0, 0.0]])
    return np.eye(2) + beta * (f * J + 2.0 * fp * np.outer(J @ w, w))


def _exit_disk_check(cfg: ScenarioConfig, z: np.ndarray) -> None:
    if abs(z[2] - 1.0) > TOL_SECTION:
        raise OutOfDomainError(f"z3={z[2]} is not on the exit plane")
    limit = cfg.r_eps1 if math.isfinite(cfg.r_eps1) else R_EPS
    if not math.hypot(z[0], z[1]) < limit:
        raise OutOfDomainError(f"|P_L z| = {math.hypot(z[0], z[1])} not below {limit}")


def outer_map_analytic(cfg: ScenarioConfig, z) -> np.ndarray:
    """Analytic outer map ``E(z) = K(N(kappa P_L z))`` from M_E to M_I."""
    v = as_vec3(z)
    _exit_disk_check(cfg, v)
    w = cfg.kappa_matrix @ v[:2]
    n = near_identity(cfg.beta, w)
    return chart_K(n, cfg.omega_eps)


def _ode_landing(spec: FieldSpec, epsilon: float, z: np.ndarray, tau_hint: float) -> np.ndarray:
    t_lo, t_hi = 0.5 * tau_hint, 2.0 * tau_hint
    traj, _ = integrate(spec, epsilon, z, t_lo)
    start = traj.states[-1]
    _, ev = integrate(spec, epsilon, start, t_hi - t_lo, [EventSpec.hit_cylinder_radius(1.0, "decreasing")])
    if ev is None:
        raise OuterExcursionError(f"no return to the entry cylinder for t in [{t_lo:.6g}, {t_hi:.6g}]")
    return ev.state


def outer_map_ode(cfg: ScenarioConfig, spec: Optional[FieldSpec], z) -> np.ndarray:
    """Outer map by integrating the field from ``z`` on M_E back to M_I.

    The first decreasing crossing of ``|P_L y| = 1`` inside the window
    ``[tau_hint/2, 2 tau_hint]`` is returned.
    """
    spec = _spec(cfg, spec)
    v = as_vec3(z)
    _exit_disk_check(cfg, v)
    tau = cfg.outer.tau_hint
    if tau is None:
        raise ParameterError("tau_hint is required for the ode outer map")
    return _ode_landing(spec, cfg.epsilon, v, tau)


def outer_map(cfg: ScenarioConfig, spec: Optional[FieldSpec], z) -> np.ndarray:
    if cfg.outer.kind == ANALYTIC:
        return outer_map_analytic(cfg, z)
    return outer_map_ode(cfg, spec, z)


def _outer_chart(cfg: ScenarioConfig, spec: FieldSpec, w: np.ndarray) -> np.ndarray:
    """``K^-1(E((kappa P_LE)^-1 w))`` for one point ``w`` of the plane."""
    if cfg.outer.kind == ANALYTIC:
        return near_identity(cfg.beta, w)
    e = cfg.kappa_inv @ w
    x = _ode_landing(spec, cfg.epsilon, np.array([e[0], e[1], 1.0]), cfg.outer.tau_hint)
    p = chart_K_inverse(x, cfg.omega_eps)
    return np.array([p.psi, p.delta])


def _outer_chart_jacobian(cfg: ScenarioConfig, spec: FieldSpec, w: np.ndarray) -> np.ndarray:
    if cfg.outer.kind == ANALYTIC:
        return near_identity_jacobian(cfg.beta, w)
    h = FD_KAPPA_STEP
    cols = []
    for k in range(2):
        d = np.zeros(2)
        d[k] = h
        cols.append((_outer_chart(cfg, spec, w + d) - _outer_chart(cfg, spec, w - d)) / (2 * h))
    return np.column_stack(cols)


def measure_outer_frame(spec: FieldSpec, epsilon: float, tau_hint: float) -> tuple[float, np.ndarray]:
    """Landing angle ``omega_eps`` and frame ``kappa`` of an integrated outer map.

    ``omega_eps`` is the polar angle of ``E(e3)``; ``kappa`` is the
    derivative of ``K^-1 o E`` at ``e3`` by central differences.
    """
    land = _ode_landing(spec, epsilon, np.array([0.0, 0.0, 1.0]), tau_hint)
    omega = math.atan2(land[1], land[0])
    h = FD_KAPPA_STEP
    cols = []
    for k in range(2):
        d = np.zeros(3)
        d[k] = h
        xp = chart_K_inverse(_ode_landing(spec, epsilon, np.array([0, 0, 1.0]) + d, tau_hint), omega)
        xm = chart_K_inverse(_ode_landing(spec, epsilon, np.array([0, 0, 1.0]) - d, tau_hint), omega)
        cols.append((np.array(xp) - np.array(xm)) / (2 * h))
    return omega, np.column_stack(cols)


# ---------------------------------------------------------------------------
# return map


class ReturnData(NamedTuple):
    """Return-map value ``z = R(psi, delta)`` with the inner exit angle and optional derivative."""

    z: np.ndarray
    phi: float
    exit: ExitData
    jac: Optional[np.ndarray] = None


def return_data(
    cfg: ScenarioConfig, psi: float, delta: float, jac: bool = False, spec: Optional[FieldSpec] = None
) -> ReturnData:
    """Unchecked return map in chart coordinates (used by the symbolic layer)."""
    spec = _spec(cfg, spec)
    ex = exit_data(cfg, psi, delta, jac=jac, spec=spec)
    r = math.exp(ex.L)
    c, s = math.cos(ex.phi), math.sin(ex.phi)
    e = np.array([r * c, r * s])
    K = cfg.kappa_matrix
    w = K @ e
    z = _outer_chart(cfg, spec, w)
    if not jac:
        return ReturnData(z, ex.phi, ex)
    De = np.empty((2, 2))
    for col, d in enumerate((ex.dpsi, ex.ddelta)):
        dL, dphi = d[0], d[1]
        De[:, col] = r * np.array([c * dL - s * dphi, s * dL + c * dphi])
    DR = _outer_chart_jacobian(cfg, spec, w) @ K @ De
    return ReturnData(z, ex.phi, ex, DR)


def return_map(cfg: ScenarioConfig, spec: Optional[FieldSpec], p, check: bool = True) -> PlanePoint:
    """``R(psi, delta) = K^-1(E(I(K(psi, delta))))``.

    Points of the strip ``[-alpha, alpha] x (0, delta_beta]`` must land in
    the square ``[-alpha, alpha]^2``; otherwise the scenario is inconsistent
    with the field and :class:`CalibrationFailure` is raised.
    """
    spec = _spec(cfg, spec)
    psi, delta = float(p[0]), float(p[1])
    if check and not (abs(psi) <= cfg.alpha and 0.0 < delta < cfg.delta_I1):
        raise DomainError(f"{p} outside [-alpha, alpha] x (0, delta_I1)")
    inner = inner_map(cfg, (psi, delta), spec)
    landing = outer_map(cfg, spec, inner.exit_point)
    q = chart_K_inverse(landing, cfg.omega_eps)
    if check and delta <= cfg.delta_beta and not (abs(q.psi) <= cfg.alpha and abs(q.delta) <= cfg.alpha):
        raise CalibrationFailure(f"R{(psi, delta)} = {tuple(q)} leaves the square of half-width {cfg.alpha}")
    return q


# ---------------------------------------------------------------------------
# calibration


def _disk_samples(radius: float, rings: int = 8, per_ring: int = 64) -> np.ndarray:
    ang = 2.0 * math.pi * np.arange(per_ring) / per_ring
    pts = [np.zeros((1, 2))]
    for k in range(1, rings + 1):
        rk = radius * k / rings
        pts.append(np.column_stack([rk * np.cos(ang), rk * np.sin(ang)]))
    return np.vstack(pts)


def square_grid(alpha: float, n: int) -> np.ndarray:
    """``n x n`` tensor grid of ``[-alpha, alpha]^2`` including the corners."""
    g = np.linspace(-alpha, alpha, n)
    P, D = np.meshgrid(g, g, indexing="ij")
    return np.column_stack([P.ravel(), D.ravel()])


def _outer_many(cfg: ScenarioConfig, spec: FieldSpec, W: np.ndarray) -> np.ndarray:
    if cfg.outer.kind == ANALYTIC:
        return near_identity(cfg.beta, W)
    return np.array([_outer_chart(cfg, spec, w) for w in W])


def _landing_ok(cfg: ScenarioConfig, spec: FieldSpec, radius: float) -> bool:
    Z = _disk_samples(radius)
    W = Z @ cfg.kappa_matrix.T
    try:
        N = _outer_many(cfg, spec, W)
    except OuterExcursionError:
        return False
    return bool(np.all(np.abs(N[:, 0]) < cfg.omega_I) and np.all(np.abs(N[:, 1]) < cfg.delta_I))


def _find_r_eps1(cfg: ScenarioConfig, spec: FieldSpec) -> float:
    hi = R_EPS * (1.0 - 1e-6)
    if _landing_ok(cfg, spec, hi):
        return hi
    lo = 0.0
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if _landing_ok(cfg, spec, mid):
            lo = mid
        else:
            hi = mid
    if lo <= 0.0:
        raise CalibrationInfeasible("r_eps1", "the outer map leaves the landing window arbitrarily close to e3")
    return lo


def near_identity_violation(cfg: ScenarioConfig, spec: FieldSpec, W: np.ndarray) -> tuple[float, float]:
    """Worst excess of ``|N(w) - w| - beta |w|`` and of ``|DN(w) - I| - beta`` over the rows of ``W``."""
    N = _outer_many(cfg, spec, W)
    dev = np.linalg.norm(N - W, axis=1) - cfg.beta * np.linalg.norm(W, axis=1)
    dd = max(op_norm(_outer_chart_jacobian(cfg, spec, w) - np.eye(2)) - cfg.beta for w in W)
    return float(dev.max()), float(dd)


def _alpha_ok(cfg: ScenarioConfig, spec: FieldSpec, alpha: float, n: int) -> bool:
    if not alpha < min(cfg.omega_I, cfg.delta_I1):
        return False
    r_E = cfg.r_eps1 / op_norm(cfg.kappa_inv)
    if not math.sqrt(2.0) * alpha < r_E:
        return False
    dev, dd = near_identity_violation(cfg, spec, square_grid(alpha, n))
    return dev <= 1e-15 and dd <= 1e-15


def _find_alpha(cfg: ScenarioConfig, spec: FieldSpec, grid: int = 32) -> float:
    cap = cfg.alpha_cap
    dense = int(math.ceil(grid * math.sqrt(10.0)))
    if _alpha_ok(cfg, spec, cap, grid) and _alpha_ok(cfg, spec, cap, dense):
        return cap
    lo, hi = 0.0, cap
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _alpha_ok(cfg, spec, mid, grid):
            lo = mid
        else:
            hi = mid
    while lo > ALPHA_FLOOR and not _alpha_ok(cfg, spec, lo, dense):
        lo *= 0.99
    if lo <= ALPHA_FLOOR:
        raise CalibrationInfeasible(NEAR_IDENTITY, f"no alpha above {ALPHA_FLOOR} satisfies the near-identity bounds")
    return lo


def _golden_max(f, a: float, b: float, tol: float) -> tuple[float, float]:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    cands = [(f(a), a), (f(b), b), (fc, c), (fd, d)]
    best = max(cands)
    return best[1], best[0]


def _extremum(f, alpha: float, maximize: bool) -> float:
    sign = 1.0 if maximize else -1.0
    g = lambda x: sign * f(x)  # noqa: E731
    xs = np.linspace(-alpha, alpha, PSI_SCAN)
    vals = [g(x) for x in xs]
    k = int(np.argmax(vals))
    lo, hi = xs[max(k - 1, 0)], xs[min(k + 1, PSI_SCAN - 1)]
    _, v = _golden_max(g, lo, hi, PSI_TOL)
    return sign * max(v, vals[k])


def phi_extrema(cfg: ScenarioConfig, spec: Optional[FieldSpec] = None) -> tuple[float, float]:
    """``m1 = max Phi(., delta1)`` and ``m2 = min Phi(., delta2)`` over ``[-alpha, alpha]``."""
    spec = _spec(cfg, spec)
    m1 = _extremum(lambda x: exit_data(cfg, x, cfg.delta1, spec=spec).phi, cfg.alpha, True)
    m2 = _extremum(lambda x: exit_data(cfg, x, cfg.delta2, spec=spec).phi, cfg.alpha, False)
    return m1, m2


def w_direction_angle(cfg: ScenarioConfig) -> float:
    w = cfg.kappa_inv @ np.array([0.0, 1.0])
    return math.atan2(w[1], w[0])


def select_psi(cfg: ScenarioConfig, spec: Optional[FieldSpec] = None) -> float:
    """Smallest lift of the direction of ``kappa^-1 (0, 1)`` inside ``[m1 + pi, m2 - pi]``."""
    m1, m2 = phi_extrema(cfg, spec)
    if m1 + 4.0 * math.pi > m2:
        raise GapFailureError(f"angle gap m2 - m1 = {m2 - m1:.6g} is below 4 pi")
    theta = w_direction_angle(cfg)
    k = math.ceil((m1 + math.pi - theta) / (2.0 * math.pi))
    psi = theta + 2.0 * math.pi * k
    if psi > m2 - math.pi:
        raise GapFailureError("no lift of the w direction between m1 + pi and m2 - pi")
    return psi


def _hypothesis_gate(spec: FieldSpec, epsilon: float, eta: float, grid_count: int, seed: int):
    cert = check_hypotheses(spec, epsilon, eta, grid_count=grid_count, seed=seed)
    if not cert.passed:
        failed = cert.failed_conditions()
        name = failed[0]
        for key in ("hypothesis_H", "exponent_condition", "eta_bound"):
            if key in failed:
                name = key
                break
        raise HypothesisError(name, f"certificate failed: {', '.join(failed)}")
    return cert


def calibrate(
    spec: FieldSpec,
    epsilon: float,
    eta: float,
    beta: float,
    delta2_hint: Optional[float] = None,
    *,
    omega_eps: float = 0.0,
    kappa=None,
    alpha_cap: float = ALPHA_CAP,
    outer: Optional[OuterBackend] = None,
    grid_count: int = 4096,
    seed: int = 0,
    tol_scale: float = 1.0,
) -> ScenarioConfig:
    """Compute every constant of a scenario.

    Order: certificate, landing window, ``r_eps1``, ``delta_I1``, ``alpha``,
    ``delta_beta``, ``delta2`` (halved until the level condition holds),
    ``delta1 = k_eta delta2 ** c_eta`` and finally ``psi_eps``.
    """
    if not (0.0 <= beta <= 0.5):
        raise ParameterError(f"beta={beta} must lie in [0, 1/2]", condition=BETA_RANGE)
    if not tol_scale > 0:
        raise ParameterError("tol_scale must be positive")
    outer = outer or OuterBackend()
    cert = _hypothesis_gate(spec, epsilon, eta, grid_count, seed)

    if outer.kind == ODE:
        omega_eps, K = measure_outer_frame(spec, epsilon, outer.tau_hint)
    else:
        K = np.eye(2) if kappa is None else np.asarray(kappa, dtype=float)
    if K.shape != (2, 2) or abs(np.linalg.det(K)) < 1e-14:
        raise ParameterError("kappa must be an invertible 2x2 matrix")
    cfg = ScenarioConfig(
        field=spec,
        epsilon=float(epsilon),
        eta=float(eta),
        beta=float(beta),
        omega_eps=float(omega_eps),
        kappa=tuple(tuple(float(v) for v in row) for row in K),
        alpha_cap=float(alpha_cap),
        outer=outer,
        kernel_rtol=KERNEL_RTOL * tol_scale,
    )
    r1 = _find_r_eps1(cfg, spec)
    _, b_exp = exit_exponents(spec.eigen, eta)
    dI1 = min(cfg.delta_I * (1.0 - 1e-12), r1 ** (1.0 / b_exp))
    cfg = cfg.with_(r_eps1=r1, delta_I1=dI1)
    alpha = _find_alpha(cfg, spec)
    db = delta_beta(spec.eigen, alpha, K)
    if not db <= 2.0 / 3.0 * alpha:
        raise CalibrationInfeasible("delta_beta", f"delta_beta={db} exceeds 2 alpha / 3")
    d2 = db if delta2_hint is None else min(float(delta2_hint), db)
    while not level_condition(spec.eigen, eta, d2, db, K):
        d2 *= 0.5
        if d2 < DELTA2_FLOOR:
            raise PrecisionInfeasible(LEVEL_CONDITION, f"no delta2 above {DELTA2_FLOOR} satisfies the level condition")
    d1 = delta1_of(spec.eigen, eta, d2)
    cfg = cfg.with_(alpha=alpha, delta_beta=db, delta2=d2, delta1=d1)
    psi = select_psi(cfg, spec)
    cfg = cfg.with_(
        psi_eps=psi,
        provenance={
            "certificate_grid_count": cert.grid_count,
            "certificate_seed": cert.seed,
            "eta_measured": cert.eta_measured,
            "outer_backend": outer.kind,
            "kernel_backend": kernel.BACKEND,
        },
    )
    failed = [k for k, ok in cfg.checks().items() if not ok]
    if failed:
        raise CalibrationInfeasible(failed[0], f"calibrated constants violate {', '.join(failed)}")
    return cfg
