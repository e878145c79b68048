"""Sampled verification of a calibrated scenario.

Each suite returns a :class:`CheckRow` with the worst slack over its
samples; a negative slack means a bound was violated.  Slacks of the
bracket suite are relative to the bound, the others are absolute.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .constants import exit_exponents, op_norm
from .fields import check_hypotheses
from .flow import check_envelopes
from .maps import ScenarioConfig, _outer_chart, _outer_chart_jacobian, inner_map, return_data
from .symbolic import GAP_THRESHOLD, angle_gap

SAMPLES = 1000
BRACKET_RTOL = 1e-7
ROUNDOFF = 1e-15
DELTA_FLOOR = 1e-8


@dataclass
class CheckRow:
    name: str
    passed: bool
    worst_slack: Optional[float]
    samples: int
    detail: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "worst_slack": self.worst_slack,
            "samples": self.samples,
            "detail": dict(self.detail),
        }


def strip_samples(alpha: float, d_lo: float, d_hi: float, count: int, seed: int) -> np.ndarray:
    """Points of ``[-alpha, alpha] x [d_lo, d_hi]`` with log-uniform heights; the corners are included."""
    rng = np.random.default_rng(seed)
    psi = rng.uniform(-alpha, alpha, count)
    delta = np.exp(rng.uniform(math.log(d_lo), math.log(d_hi), count))
    corners = np.array([[-alpha, d_lo], [-alpha, d_hi], [alpha, d_lo], [alpha, d_hi]])
    pts = np.column_stack([psi, delta])
    pts[: len(corners)] = corners
    return pts


def disk_samples(radius: float, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    r = radius * np.sqrt(rng.uniform(0.0, 1.0, count))
    a = rng.uniform(0.0, 2.0 * math.pi, count)
    return np.column_stack([r * np.cos(a), r * np.sin(a)])


def certificate_row(cfg: ScenarioConfig, seed: int = 0) -> CheckRow:
    cert = check_hypotheses(cfg.field, cfg.epsilon, cfg.eta, seed=seed)
    return CheckRow(
        "remainder_certificate",
        cert.passed,
        cfg.eta - cert.eta_measured,
        cert.grid_count,
        {"eta_measured": cert.eta_measured, "failed": cert.failed_conditions()},
    )


def bracket_rows(cfg: ScenarioConfig, count: int = SAMPLES, seed: int = 0, rtol: float = BRACKET_RTOL) -> list[CheckRow]:
    """Travel-time, exit-radius and trajectory-envelope brackets at the certified eta."""
    e, eta = cfg.eigen, cfg.eta
    ea, eb = exit_exponents(e, eta)
    d_hi = min(0.9, cfg.delta_I1) if math.isfinite(cfg.delta_I1) else 0.9
    pts = strip_samples(cfg.alpha, DELTA_FLOOR, d_hi, count, seed)
    t_slack, r_slack, env_slack = math.inf, math.inf, math.inf
    env_ok = True
    for psi, delta in pts:
        res = inner_map(cfg, (psi, delta), with_trajectory=True)
        L = -math.log(delta)
        lo, hi = L / (e.u + eta), L / (e.u - eta)
        t_slack = min(t_slack, min(res.travel_time - lo, hi - res.travel_time) / hi)
        r_lo, r_hi = delta**ea, delta**eb
        r_slack = min(r_slack, min(res.exit_radius - r_lo, r_hi - res.exit_radius) / r_hi)
        rep = check_envelopes(res.trajectory, e, eta, rtol=rtol)
        env_ok &= rep.passed
        env_slack = min(env_slack, rep.min_r_slack, rep.min_phi_slack)
    return [
        CheckRow("travel_time_bracket", t_slack >= -rtol, t_slack, len(pts)),
        CheckRow("exit_radius_bracket", r_slack >= -rtol, r_slack, len(pts)),
        CheckRow("trajectory_envelopes", env_ok, env_slack, len(pts)),
    ]


def near_identity_row(cfg: ScenarioConfig, count: int = SAMPLES, seed: int = 0) -> CheckRow:
    """``|N(w) - w| <= beta |w|`` and ``|DN(w) - I| <= beta`` on the disk of radius alpha."""
    W = disk_samples(cfg.alpha, count, seed)
    spec = cfg.field
    worst = math.inf
    for w in W:
        n = _outer_chart(cfg, spec, w)
        worst = min(worst, cfg.beta * float(np.hypot(*w)) - float(np.hypot(*(n - w))))
        worst = min(worst, cfg.beta - op_norm(_outer_chart_jacobian(cfg, spec, w) - np.eye(2)))
    return CheckRow("near_identity", worst >= -ROUNDOFF, worst, len(W))


def containment_row(cfg: ScenarioConfig, count: int = SAMPLES, seed: int = 0) -> CheckRow:
    """Images of the strip below ``max(delta_beta, delta2)`` stay in the square of half-width alpha."""
    order_ok = bool(0 < cfg.delta1 < cfg.delta2 <= cfg.delta_beta <= 2.0 / 3.0 * cfg.alpha)
    d_hi = max(cfg.delta_beta, cfg.delta2)
    pts = strip_samples(cfg.alpha, d_hi * 1e-6, d_hi, count, seed)
    K = cfg.kappa_matrix
    worst_exit, worst_box = math.inf, math.inf
    for psi, delta in pts:
        rd = return_data(cfg, psi, delta)
        r = math.exp(rd.exit.L)
        e = r * np.array([math.cos(rd.exit.phi), math.sin(rd.exit.phi)])
        worst_exit = min(worst_exit, 2.0 / 3.0 * cfg.alpha - float(np.linalg.norm(K @ e)))
        worst_box = min(worst_box, cfg.alpha - float(np.max(np.abs(rd.z))))
    worst = min(worst_exit, worst_box)
    return CheckRow(
        "strip_containment",
        order_ok and worst >= 0,
        worst,
        len(pts),
        {"delta_order": order_ok, "exit_slack": worst_exit, "square_slack": worst_box},
    )


def gap_row(cfg: ScenarioConfig) -> CheckRow:
    g = angle_gap(cfg)
    return CheckRow("angle_gap", g >= GAP_THRESHOLD, g - GAP_THRESHOLD, 2, {"gap": g})


def separation_row(cfg: ScenarioConfig, count: int = SAMPLES, seed: int = 0) -> CheckRow:
    """``|R(psi, delta)| > sqrt(2) delta2`` on ``[-alpha, alpha] x [delta1, delta2]``."""
    pts = strip_samples(cfg.alpha, cfg.delta1, cfg.delta2, count, seed)
    bound = math.sqrt(2.0) * cfg.delta2
    worst = min(float(np.linalg.norm(return_data(cfg, p, d).z)) - bound for p, d in pts)
    return CheckRow("level_separation", worst > 0, worst, len(pts))


def condition_rows(cfg: ScenarioConfig) -> list[CheckRow]:
    return [CheckRow(name, ok, None, 1) for name, ok in cfg.checks().items()]


def verify_scenario(cfg: ScenarioConfig, count: int = SAMPLES, seed: int = 0) -> list[CheckRow]:
    rows = condition_rows(cfg)
    rows.append(certificate_row(cfg, seed))
    rows.extend(bracket_rows(cfg, count, seed))
    rows.append(near_identity_row(cfg, count, seed))
    rows.append(containment_row(cfg, count, seed))
    rows.append(gap_row(cfg))
    rows.append(separation_row(cfg, count, seed))
    return rows
