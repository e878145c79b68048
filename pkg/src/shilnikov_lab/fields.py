"""Vector fields with a saddle-focus equilibrium at the origin.

A field is ``V(x) = A x + g(x)`` with the block matrix

    A = [[sigma,  mu, 0],
         [-mu, sigma, 0],
         [0,      0,  u]]

and a nonlinearity ``g``.  The package ships two nonlinearities that keep
the plane L and the axis U invariant by construction (``none`` and
``builtin_quadratic``); arbitrary callables can be plugged in as ``user``.
"""
from __future__ import annotations

import importlib
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.stats import qmc

from .errors import DegenerateRadiusError, FieldEvaluationError, ParameterError, SpectrumError, UsageError
from .geometry import as_vec3

NONE = "none"
BUILTIN_QUADRATIC = "builtin_quadratic"
USER = "user"
_KINDS = (NONE, BUILTIN_QUADRATIC, USER)

#: Quotient denominators below this are skipped in certificates.
QUOTIENT_FLOOR = 1e-9
FD_STEP = 1e-5
POWER_ITERATIONS = 20
#: Finite-difference noise allowance used when comparing a measured eta to its target.
FD_NOISE = 1e-7


@dataclass(frozen=True)
class Eigentriple:
    sigma: float
    mu: float
    u: float

    def __post_init__(self):
        if not (self.sigma < 0 < self.mu):
            raise ParameterError(f"need sigma < 0 < mu, got sigma={self.sigma}, mu={self.mu}")
        if not self.u > 0:
            raise ParameterError(f"need u > 0, got u={self.u}")

    @property
    def satisfies_H(self) -> bool:
        """The saddle-focus condition 0 < sigma + u."""
        return self.sigma + self.u > 0

    def matrix(self) -> np.ndarray:
        s, m, u = self.sigma, self.mu, self.u
        return np.array([[s, m, 0.0], [-m, s, 0.0], [0.0, 0.0, u]])


@dataclass(frozen=True)
class Nonlinearity:
    kind: str = NONE
    eta0: float = 0.0
    r_V: float = 1.0
    func: Optional[Callable] = field(default=None, compare=False)
    #: ``"module:attr"`` import path of ``func``; kept for serialization.
    ref: Optional[str] = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise UsageError(f"unknown nonlinearity kind {self.kind!r}")
        if self.kind == BUILTIN_QUADRATIC and not self.eta0 >= 0:
            raise ParameterError("builtin_quadratic needs eta0 >= 0")
        if self.kind == USER:
            if not self.r_V > 0:
                raise ParameterError("user nonlinearity needs r_V > 0")
            if self.func is None:
                if self.ref is None:
                    raise UsageError("user nonlinearity needs a callable or an import reference")
                object.__setattr__(self, "func", _resolve(self.ref))


def _resolve(ref: str) -> Callable:
    mod, _, attr = ref.partition(":")
    if not attr:
        raise UsageError(f"callable reference {ref!r} must look like 'module:function'")
    try:
        return getattr(importlib.import_module(mod), attr)
    except (ImportError, AttributeError) as exc:
        raise UsageError(f"cannot import {ref!r}: {exc}") from exc


@dataclass(frozen=True)
class FieldSpec:
    eigen: Eigentriple
    nonlinearity: Nonlinearity = Nonlinearity()

    @classmethod
    def linear(cls, sigma: float, mu: float, u: float) -> "FieldSpec":
        return cls(Eigentriple(sigma, mu, u))

    @classmethod
    def builtin(cls, sigma: float, mu: float, u: float, eta0: float) -> "FieldSpec":
        return cls(Eigentriple(sigma, mu, u), Nonlinearity(BUILTIN_QUADRATIC, eta0=eta0))

    @property
    def kind(self) -> str:
        return self.nonlinearity.kind

    @property
    def is_polynomial(self) -> bool:
        """True for the two closed-form families handled by the compiled kernel."""
        return self.kind in (NONE, BUILTIN_QUADRATIC)

    @property
    def eta0(self) -> float:
        return self.nonlinearity.eta0 if self.kind == BUILTIN_QUADRATIC else 0.0

    def to_json(self) -> dict:
        nl = {"kind": self.kind}
        if self.kind == BUILTIN_QUADRATIC:
            nl["eta0"] = self.nonlinearity.eta0
        if self.kind == USER:
            nl["r_V"] = self.nonlinearity.r_V
            if self.nonlinearity.ref is not None:
                nl["callable"] = self.nonlinearity.ref
        e = self.eigen
        return {"sigma": e.sigma, "mu": e.mu, "u": e.u, "nonlinearity": nl}

    @classmethod
    def from_json(cls, obj: dict) -> "FieldSpec":
        try:
            eigen = Eigentriple(float(obj["sigma"]), float(obj["mu"]), float(obj["u"]))
            nl = obj.get("nonlinearity", {"kind": NONE})
            kind = nl.get("kind", NONE)
            nonlin = Nonlinearity(
                kind,
                eta0=float(nl.get("eta0", 0.0)),
                r_V=float(nl.get("r_V", 1.0)),
                ref=nl.get("callable"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, UsageError):
                raise
            raise UsageError(f"malformed field spec: {exc}") from exc
        return cls(eigen, nonlin)


# ---------------------------------------------------------------------------
# evaluation


def eval_A(eigen: Eigentriple, x) -> np.ndarray:
    v = as_vec3(x)
    s, m, u = eigen.sigma, eigen.mu, eigen.u
    return np.array([s * v[0] + m * v[1], -m * v[0] + s * v[1], u * v[2]])


def _g(spec: FieldSpec, x: np.ndarray) -> np.ndarray:
    kind = spec.kind
    if kind == NONE:
        return np.zeros(3)
    if kind == BUILTIN_QUADRATIC:
        e0 = spec.nonlinearity.eta0
        return e0 * np.array([x[0] * x[2], -x[1] * x[2], x[2] * (x[0] * x[0] + x[1] * x[1])])
    try:
        out = np.asarray(spec.nonlinearity.func(x.copy()), dtype=float).reshape(3)
    except Exception as exc:  # user code can fail in any way
        raise FieldEvaluationError(f"user nonlinearity failed at {x!r}: {exc}") from exc
    if not np.all(np.isfinite(out)):
        raise FieldEvaluationError(f"user nonlinearity returned {out!r} at {x!r}")
    return out


def eval_V(spec: FieldSpec, x) -> np.ndarray:
    """Evaluate ``V(x) = A x + g(x)``.

    The builtin nonlinearity is ``eta0 * (x1 x3, -x2 x3, x3 (x1^2 + x2^2))``;
    its L-part vanishes on U and its U-part vanishes on L.
    """
    v = as_vec3(x)
    return eval_A(spec.eigen, v) + _g(spec, v)


def _check_eps(epsilon: float) -> None:
    if not epsilon > 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")


def eval_V_scaled(spec: FieldSpec, epsilon: float, x) -> np.ndarray:
    """``V_eps(x) = V(eps x) / eps``."""
    _check_eps(epsilon)
    v = as_vec3(x)
    if spec.kind == NONE:
        return eval_A(spec.eigen, v)
    return eval_A(spec.eigen, v) + _g(spec, epsilon * v) / epsilon


def _eval_V_scaled_many(spec: FieldSpec, epsilon: float, X: np.ndarray) -> np.ndarray:
    """Row-wise :func:`eval_V_scaled` (vectorized for the closed-form kinds)."""
    s, m, u = spec.eigen.sigma, spec.eigen.mu, spec.eigen.u
    lin = np.column_stack([s * X[:, 0] + m * X[:, 1], -m * X[:, 0] + s * X[:, 1], u * X[:, 2]])
    if spec.kind == NONE:
        return lin
    if spec.kind == BUILTIN_QUADRATIC:
        e0 = spec.nonlinearity.eta0
        x1, x2, x3 = X[:, 0], X[:, 1], X[:, 2]
        return lin + e0 * np.column_stack(
            [epsilon * x1 * x3, -epsilon * x2 * x3, epsilon**2 * x3 * (x1 * x1 + x2 * x2)]
        )
    return np.array([eval_V_scaled(spec, epsilon, row) for row in X])


def remainder_L(spec: FieldSpec, epsilon: float, x) -> np.ndarray:
    r = eval_V_scaled(spec, epsilon, x) - eval_A(spec.eigen, x)
    r[2] = 0.0
    return r


def remainder_U(spec: FieldSpec, epsilon: float, x) -> np.ndarray:
    r = eval_V_scaled(spec, epsilon, x) - eval_A(spec.eigen, x)
    r[0] = r[1] = 0.0
    return r


def _radial_parts(spec, epsilon, x):
    v = as_vec3(x)
    rr = v[0] * v[0] + v[1] * v[1]
    if rr == 0.0:
        raise DegenerateRadiusError("x1^2 + x2^2 = 0")
    R = remainder_L(spec, epsilon, v)
    return v, R, rr


def coeff_A_cal(spec: FieldSpec, epsilon: float, x) -> float:
    """Radial growth-rate correction ``<R_L, P_L x> / |P_L x|^2``."""
    v, R, rr = _radial_parts(spec, epsilon, x)
    return float((R[0] * v[0] + R[1] * v[1]) / rr)


def coeff_B_cal(spec: FieldSpec, epsilon: float, x) -> float:
    """Angular speed correction ``<R_L, (-x2, x1)> / |P_L x|^2``."""
    v, R, rr = _radial_parts(spec, epsilon, x)
    return float((-R[0] * v[1] + R[1] * v[0]) / rr)


# ---------------------------------------------------------------------------
# certificates


@dataclass
class EtaCertificate:
    eta_measured: float
    epsilon: float
    grid_count: int
    max_violation_point: np.ndarray
    eta_target: float
    quotient_U: float
    quotient_L: float
    jacobian_deviation: float
    flags: dict
    seed: int = 0

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    def failed_conditions(self) -> list[str]:
        return [k for k, ok in self.flags.items() if not ok]

    def to_json(self) -> dict:
        return {
            "eta_measured": self.eta_measured,
            "eta_target": self.eta_target,
            "epsilon": self.epsilon,
            "grid_count": self.grid_count,
            "seed": self.seed,
            "max_violation_point": [float(v) for v in self.max_violation_point],
            "components": {
                "quotient_U": self.quotient_U,
                "quotient_L": self.quotient_L,
                "jacobian_deviation": self.jacobian_deviation,
            },
            "flags": dict(self.flags),
            "passed": self.passed,
        }


def sample_B1(count: int, seed: int = 0) -> np.ndarray:
    """Deterministic scrambled-Sobol points filling B1 with uniform density."""
    pts = qmc.Sobol(d=3, scramble=True, seed=seed).random(count)
    rad = np.sqrt(pts[:, 0])
    ang = 2.0 * math.pi * pts[:, 1]
    return np.column_stack([rad * np.cos(ang), rad * np.sin(ang), 2.0 * pts[:, 2] - 1.0])


def _spectral_norm(M: np.ndarray) -> float:
    v = np.ones(M.shape[1]) / math.sqrt(M.shape[1])
    MtM = M.T @ M
    lam = 0.0
    for _ in range(POWER_ITERATIONS):
        w = MtM @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        lam = nw
    return math.sqrt(lam)


def _remainder_many(spec: FieldSpec, epsilon: float, Y: np.ndarray) -> np.ndarray:
    """Row-wise ``V_eps(y) - A y``, exactly zero for the linear field."""
    if spec.kind == NONE:
        return np.zeros_like(Y)
    if spec.kind == BUILTIN_QUADRATIC:
        e0 = spec.nonlinearity.eta0
        x1, x2, x3 = Y[:, 0], Y[:, 1], Y[:, 2]
        return e0 * np.column_stack([epsilon * x1 * x3, -epsilon * x2 * x3, epsilon**2 * x3 * (x1 * x1 + x2 * x2)])
    A = spec.eigen.matrix()
    return _eval_V_scaled_many(spec, epsilon, Y) - Y @ A.T


def _jacobian_deviations(spec: FieldSpec, epsilon: float, Y: np.ndarray) -> np.ndarray:
    """Spectral norm of ``DV_eps - A`` by central differences of the remainder."""
    n = len(Y)
    J = np.empty((n, 3, 3))
    for i in range(3):
        e = np.zeros(3)
        e[i] = FD_STEP
        J[:, :, i] = (_remainder_many(spec, epsilon, Y + e) - _remainder_many(spec, epsilon, Y - e)) / (2 * FD_STEP)
    return np.array([_spectral_norm(J[k]) for k in range(n)])


def exponent_condition(eigen: Eigentriple, eta: float) -> bool:
    """``c_eta (-sigma + eta) / (u - eta) < 1``."""
    from .constants import c_eta

    if not eta < min(eigen.mu, eigen.u):
        return False
    return c_eta(eigen, eta) * (-eigen.sigma + eta) / (eigen.u - eta) < 1.0


def h3_flags(spec: FieldSpec, eta: float) -> dict:
    e = spec.eigen
    # eta = 0 is admissible only when the remainder vanishes identically.
    positive = eta > 0 or (eta == 0 and spec.kind == NONE)
    return {
        "H3_eta_positive": bool(positive),
        "H3_eta_lt_mu": bool(eta < e.mu),
        "H3_eta_lt_half_neg_sigma": bool(eta < -e.sigma / 2),
        "H3_eta_lt_half_u": bool(eta < e.u / 2),
    }


def check_hypotheses(
    spec: FieldSpec, epsilon: float, eta_target: float, grid_count: int = 4096, seed: int = 0
) -> EtaCertificate:
    """Measure the remainder size of ``V_eps`` on B1 and check the standing hypotheses.

    Failures are recorded in ``flags``; nothing is raised for a failing field.
    """
    _check_eps(epsilon)
    if not eta_target >= 0:
        raise ParameterError("eta_target must be non-negative")
    if grid_count < 1000:
        raise ParameterError("grid_count must be at least 1000")
    Y = sample_B1(grid_count, seed)
    V = _eval_V_scaled_many(spec, epsilon, Y)
    e = spec.eigen
    AY = np.column_stack([e.sigma * Y[:, 0] + e.mu * Y[:, 1], -e.mu * Y[:, 0] + e.sigma * Y[:, 1], e.u * Y[:, 2]])
    R = V - AY
    pl = np.hypot(Y[:, 0], Y[:, 1])
    pu = np.abs(Y[:, 2])
    qU = np.where(pu >= QUOTIENT_FLOOR, np.abs(R[:, 2]) / np.maximum(pu, QUOTIENT_FLOOR), 0.0)
    qL = np.where(pl >= QUOTIENT_FLOOR, np.hypot(R[:, 0], R[:, 1]) / np.maximum(pl, QUOTIENT_FLOOR), 0.0)
    jd = _jacobian_deviations(spec, epsilon, Y)
    per_point = np.maximum(np.maximum(qU, qL), jd)
    k = int(np.argmax(per_point))
    eta_measured = float(per_point[k])

    flags = {
        "eta_bound": bool(eta_measured <= eta_target + FD_NOISE),
        "hypothesis_H": bool(e.satisfies_H),
    }
    flags.update(h3_flags(spec, eta_target))
    flags["exponent_condition"] = bool(exponent_condition(e, eta_target))
    return EtaCertificate(
        eta_measured=eta_measured,
        epsilon=float(epsilon),
        grid_count=int(grid_count),
        max_violation_point=Y[k].copy(),
        eta_target=float(eta_target),
        quotient_U=float(qU.max()),
        quotient_L=float(qL.max()),
        jacobian_deviation=float(jd.max()),
        flags=flags,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# linear conjugation


def conjugate_to_blockform(M, tol: float = 1e-9) -> tuple[Eigentriple, np.ndarray]:
    """Find ``I`` with ``I M I^-1 = A`` for a saddle-focus matrix ``M``.

    The complex eigenvector for ``sigma + i mu`` (``mu > 0``) is normalized so
    its largest entry equals 1; its real and imaginary parts and the real
    eigenvector then form the columns of ``I^-1``.  For ``M`` already in block
    form this returns the identity.
    """
    M = np.asarray(M, dtype=float)
    if M.shape != (3, 3):
        raise SpectrumError("matrix must be 3x3")
    lam, vecs = np.linalg.eig(M)
    scale = max(1.0, float(np.max(np.abs(lam))))
    is_real = np.abs(lam.imag) <= 1e-12 * scale
    if is_real.sum() != 1:
        raise SpectrumError(f"expected one real eigenvalue and a complex pair, got {lam}")
    ir = int(np.flatnonzero(is_real)[0])
    ic = int(np.flatnonzero(~is_real & (lam.imag > 0))[0])
    u = float(lam[ir].real)
    sigma, mu = float(lam[ic].real), float(lam[ic].imag)
    if not (u > 0 and sigma < 0):
        raise SpectrumError(f"need u > 0 and sigma < 0, got u={u}, sigma={sigma}")
    v = vecs[:, ic]
    v = v / v[int(np.argmax(np.abs(v)))]
    p3 = vecs[:, ir].real
    p3 = p3 / p3[int(np.argmax(np.abs(p3)))]
    P = np.column_stack([v.real, v.imag, p3])
    I = np.linalg.inv(P)
    eigen = Eigentriple(sigma, mu, u)
    err = np.max(np.abs(I @ M @ P - eigen.matrix()))
    if err > tol * scale:
        raise SpectrumError(f"conjugation residual {err:.3e} exceeds tolerance")
    return eigen, I
