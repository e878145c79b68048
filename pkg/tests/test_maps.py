import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq
from scipy.spatial import cKDTree

from shilnikov_lab.constants import c_eta, exit_exponents, k_eta, op_norm
from shilnikov_lab.errors import (
    CalibrationFailure,
    DomainError,
    OuterExcursionError,
    OutOfDomainError,
    ParameterError,
)
from shilnikov_lab.fields import Eigentriple, FieldSpec, Nonlinearity
from shilnikov_lab.maps import (
    ODE,
    OuterBackend,
    ScenarioConfig,
    calibrate,
    inner_map,
    near_identity,
    near_identity_jacobian,
    near_identity_violation,
    outer_map_analytic,
    outer_map_ode,
    phi_extrema,
    return_map,
    select_psi,
    square_grid,
    travel_time,
)
from shilnikov_lab import serialize

LIN = FieldSpec.linear(-0.5, 1.0, 1.0)


def bare(spec=LIN, **kw):
    return ScenarioConfig(field=spec, epsilon=0.1, eta=0.0, beta=0.0, **kw)


# ---------------------------------------------------------------- travel time


def test_travel_time_linear():
    assert travel_time(bare(), (1, 0, 0.1)) == pytest.approx(math.log(10), abs=1e-10)
    fast = bare(FieldSpec.linear(-0.5, 1.0, 2.0))
    assert travel_time(fast, (1, 0, math.exp(-4))) == pytest.approx(2.0, abs=1e-10)


def test_travel_time_builtin_bracket(builtin_cfg):
    t = travel_time(builtin_cfg, (1, 0, 0.1))
    eta, u = builtin_cfg.eta, builtin_cfg.eigen.u
    assert math.log(10) / (u + eta) <= t <= math.log(10) / (u - eta)


def test_travel_time_off_section():
    with pytest.raises(DomainError):
        travel_time(bare(), (0.5, 0, 0.1))
    with pytest.raises(DomainError):
        travel_time(bare(), (1, 0, 1.2))


# ---------------------------------------------------------------- inner map


@pytest.mark.parametrize("psi", [0.0, 0.2, -1.0])
def test_inner_map_linear_closed_form(psi):
    res = inner_map(bare(), (psi, 0.1), with_trajectory=True)
    assert res.travel_time == pytest.approx(math.log(10), abs=1e-10)
    assert res.exit_radius == pytest.approx(10**-0.5, abs=1e-10)
    assert res.exit_angle == pytest.approx(psi - math.log(10), abs=1e-10)
    assert res.exit_point[2] == 1.0
    assert math.hypot(*res.exit_point[:2]) == pytest.approx(res.exit_radius, abs=1e-9)
    assert res.trajectory.states[-1][4] == pytest.approx(res.exit_angle, abs=1e-12)


def test_inner_map_backends_agree(builtin_cfg):
    a = inner_map(builtin_cfg, (0.3, 1e-3), method="kernel")
    b = inner_map(builtin_cfg, (0.3, 1e-3), method="flow")
    assert a.exit_angle == pytest.approx(b.exit_angle, abs=1e-7)
    assert a.exit_radius == pytest.approx(b.exit_radius, rel=1e-7)
    assert a.travel_time == pytest.approx(b.travel_time, abs=1e-7)


def test_inner_map_domain():
    with pytest.raises(DomainError):
        inner_map(bare(), (0.0, 1.0))
    with pytest.raises(DomainError):
        inner_map(bare(), (3.5, 0.1))


def _strip(cfg, n, seed=1):
    rng = np.random.default_rng(seed)
    psi = rng.uniform(-cfg.alpha, cfg.alpha, n)
    delta = np.exp(rng.uniform(math.log(1e-8), math.log(0.9), n))
    return zip(psi, delta)


def test_brackets_on_random_strip(builtin_cfg):
    cfg = builtin_cfg
    e, eta = cfg.eigen, cfg.eta
    ea, eb = exit_exponents(e, eta)
    for psi, d in _strip(cfg, 1000):
        res = inner_map(cfg, (psi, d))
        L = -math.log(d)
        assert L / (e.u + eta) * (1 - 1e-9) <= res.travel_time <= L / (e.u - eta) * (1 + 1e-9)
        assert d**ea * (1 - 1e-9) <= res.exit_radius <= d**eb * (1 + 1e-9)


def test_inner_map_injective_on_grid(builtin_cfg):
    cfg = builtin_cfg
    pts = [
        inner_map(cfg, (p, d)).exit_point[:2]
        for p in np.linspace(-cfg.alpha, cfg.alpha, 64)
        for d in np.geomspace(1e-6, 0.9, 64)
    ]
    dist, _ = cKDTree(np.array(pts)).query(pts, k=2)
    assert dist[:, 1].min() > 1e-12


@pytest.mark.parametrize("psi", [-0.5, 0.0, 0.5])
def test_monotone_spiral(builtin_cfg, psi):
    res = [inner_map(builtin_cfg, (psi, d)) for d in np.geomspace(0.5, 1e-8, 40)]
    assert np.all(np.diff([r.exit_angle for r in res]) < 0)
    assert np.all(np.diff([r.exit_radius for r in res]) < 0)


# ---------------------------------------------------------------- outer map


def test_outer_fixed_point():
    cfg = bare(omega_eps=0.3).with_(beta=0.25)
    assert np.allclose(outer_map_analytic(cfg, (0, 0, 1)), (math.cos(0.3), math.sin(0.3), 0), atol=1e-15)


def test_outer_identity_transport():
    assert np.allclose(outer_map_analytic(bare(), (0.1, 0, 1)), (math.cos(0.1), math.sin(0.1), 0), atol=1e-15)


def test_outer_radius_precondition():
    with pytest.raises(OutOfDomainError):
        outer_map_analytic(bare(r_eps1=0.5), (0.6, 0, 1))
    with pytest.raises(OutOfDomainError):
        outer_map_analytic(bare(), (0.1, 0, 0.9))


def test_near_identity_small_circle():
    a = np.linspace(0, 2 * math.pi, 720, endpoint=False)
    W = 0.01 * np.column_stack([np.cos(a), np.sin(a)])
    dev = np.linalg.norm(near_identity(0.5, W) - W, axis=1)
    assert dev.max() <= 0.5 * 0.01


@settings(max_examples=200, deadline=None)
@given(
    st.floats(0.0, 0.5),
    st.floats(-0.7, 0.7),
    st.floats(-0.7, 0.7),
)
def test_near_identity_bounds(beta, w1, w2):
    w = np.array([w1, w2])
    assert np.linalg.norm(near_identity(beta, w) - w) <= beta * np.linalg.norm(w) + 1e-15
    assert op_norm(near_identity_jacobian(beta, w) - np.eye(2)) <= beta + 1e-15


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 0.5), st.floats(-2, 2), st.floats(-2, 2))
def test_near_identity_jacobian_matches_differences(beta, w1, w2):
    w, h = np.array([w1, w2]), 1e-6
    fd = np.column_stack(
        [(near_identity(beta, w + d) - near_identity(beta, w - d)) / (2 * h) for d in (np.array([h, 0]), np.array([0, h]))]
    )
    assert np.allclose(near_identity_jacobian(beta, w), fd, atol=1e-8)


# ring fixture: outside the local box the scaled field is a rigid rotation of
# P_L y about (2, 0) with rate OMEGA, while y3 decays at rate DECAY.
OMEGA, DECAY, CENTER, EPS = 1.5, 0.4, 2.0, 0.1


def _ring_field():
    A = LIN.eigen.matrix()

    def ring(y):
        return np.array([-OMEGA * y[1], OMEGA * (y[0] - CENTER), -DECAY * y[2]])

    def g(x):
        # chosen so that V_eps(y) = A y + g(eps y)/eps equals ring(y)
        return -A @ x + EPS * ring(x / EPS)

    return FieldSpec(LIN.eigen, Nonlinearity("user", r_V=10.0, func=g))


def _ring_landing(z):
    v0 = np.array([z[0] - CENTER, z[1]])

    def pos(t):
        c, s = math.cos(OMEGA * t), math.sin(OMEGA * t)
        return np.array([CENTER + c * v0[0] - s * v0[1], s * v0[0] + c * v0[1]])

    f = lambda t: pos(t) @ pos(t) - 1.0  # noqa: E731
    t_star = brentq(f, math.pi / OMEGA, 2 * math.pi / OMEGA, xtol=1e-15)
    p = pos(t_star)
    return np.array([p[0], p[1], z[2] * math.exp(-DECAY * t_star)]), t_star


@pytest.mark.parametrize("z", [(0.0, 0.0, 1.0), (0.2, -0.1, 1.0), (-0.3, 0.4, 1.0)])
def test_outer_ode_ring(z):
    want, t_star = _ring_landing(z)
    cfg = ScenarioConfig(field=_ring_field(), epsilon=EPS, eta=0.0, beta=0.0, outer=OuterBackend(ODE, t_star))
    got = outer_map_ode(cfg, None, z)
    assert np.allclose(got, want, atol=1e-8)


def test_outer_ode_errors():
    _, t_star = _ring_landing((0, 0, 1))
    cfg = ScenarioConfig(field=_ring_field(), epsilon=EPS, eta=0.0, beta=0.0, outer=OuterBackend(ODE, t_star / 10))
    with pytest.raises(OuterExcursionError):
        outer_map_ode(cfg, None, (0, 0, 1))
    with pytest.raises(OutOfDomainError):
        outer_map_ode(cfg, None, (1.5, 0, 1))
    with pytest.raises(ParameterError):
        OuterBackend(ODE)


# ---------------------------------------------------------------- return map


def test_return_map_worked_example():
    cfg = calibrate(LIN, 0.1, 0.0, 0.0, alpha_cap=0.5)
    q = return_map(cfg, None, (0.0, 0.1))
    r, ang = math.sqrt(0.1), -math.log(10)
    assert q.psi == pytest.approx(r * math.cos(ang), abs=1e-10)
    assert q.delta == pytest.approx(r * math.sin(ang), abs=1e-10)
    assert (q.psi, q.delta) == pytest.approx((-0.21131, -0.23527), abs=1e-5)


def test_return_map_containment(builtin_cfg):
    cfg = builtin_cfg
    rng = np.random.default_rng(3)
    psi = rng.uniform(-cfg.alpha, cfg.alpha, 1000)
    delta = np.exp(rng.uniform(math.log(cfg.delta_beta * 1e-8), math.log(cfg.delta_beta), 1000))
    for p, d in zip(psi, delta):
        q = return_map(cfg, None, (p, d))
        assert abs(q.psi) <= cfg.alpha and abs(q.delta) <= cfg.alpha


@pytest.mark.parametrize("sign", [-1.0, 0.0, 1.0])
def test_return_map_closed_strip(builtin_cfg, sign):
    q = return_map(builtin_cfg, None, (sign * builtin_cfg.alpha, builtin_cfg.delta_beta))
    assert max(abs(q.psi), abs(q.delta)) <= builtin_cfg.alpha


def test_return_map_errors(builtin_cfg):
    with pytest.raises(DomainError):
        return_map(builtin_cfg, None, (builtin_cfg.alpha * 1.01, 1e-3))
    tiny = builtin_cfg.with_(alpha=1e-4)
    with pytest.raises(CalibrationFailure):
        return_map(tiny, None, (0.0, builtin_cfg.delta_beta))


# ---------------------------------------------------------------- calibration


def test_level_constants():
    e = Eigentriple(-0.5, 1.0, 1.0)
    assert c_eta(e, 0.0) == 1.0
    assert k_eta(e, 0.0) == pytest.approx(math.exp(-6 * math.pi), rel=1e-15)
    assert k_eta(e, 0.0) == pytest.approx(6.5124e-9, rel=1e-4)
    assert c_eta(e, 0.1) == pytest.approx(1.1 * 1.1 / (0.9 * 0.9), rel=1e-15)
    assert c_eta(e, 0.1) == pytest.approx(1.493827, abs=1e-6)


def test_calibrate_rejects_beta():
    with pytest.raises(ParameterError) as info:
        calibrate(LIN, 0.1, 0.0, 0.6)
    assert info.value.condition == "beta_range"


def test_calibrate_identity_outer():
    cfg = calibrate(LIN, 0.1, 0.0, 0.0, alpha_cap=0.5)
    assert cfg.alpha == 0.5
    dev, dd = near_identity_violation(cfg, cfg.field, square_grid(cfg.alpha, 32))
    assert dev == 0.0 and dd == 0.0


def test_calibrated_invariants(builtin_cfg):
    cfg = builtin_cfg
    assert all(cfg.checks().values())
    assert 0 < cfg.delta1 < cfg.delta2 <= cfg.delta_beta <= 2 / 3 * cfg.alpha
    assert cfg.alpha < min(cfg.omega_I, cfg.delta_I1)
    assert cfg.delta1 == cfg.k_eta * cfg.delta2**cfg.c_eta


def test_delta2_hint_is_respected(builtin_spec):
    cfg = calibrate(builtin_spec, 0.1, 0.01, 0.25, delta2_hint=1e-4)
    assert cfg.delta2 <= 1e-4


def test_scenario_json_roundtrip(builtin_cfg):
    obj = json.loads(serialize.dumps(builtin_cfg.to_json()))
    back = ScenarioConfig.from_json(obj)
    assert back == builtin_cfg
    assert back.checks()["delta1_formula"]


def test_edited_delta1_loads_but_fails_check(builtin_cfg):
    obj = builtin_cfg.to_json()
    obj["constants"]["delta1"] *= 1 + 1e-12
    assert not ScenarioConfig.from_json(obj).checks()["delta1_formula"]


# ---------------------------------------------------------------- psi selection


def test_phi_extrema_linear_closed_form(linear_cfg):
    cfg = linear_cfg
    m1, m2 = phi_extrema(cfg)
    assert m1 == pytest.approx(cfg.alpha + math.log(cfg.delta1), abs=1e-9)
    assert m2 == pytest.approx(-cfg.alpha + math.log(cfg.delta2), abs=1e-9)
    assert m2 - m1 == pytest.approx(6 * math.pi - 2 * cfg.alpha, abs=1e-9)


def test_select_psi_linear(linear_cfg):
    cfg = linear_cfg
    m1 = cfg.alpha + math.log(cfg.delta1)
    m2 = -cfg.alpha + math.log(cfg.delta2)
    psi = cfg.psi_eps
    turns = (psi - math.pi / 2) / (2 * math.pi)
    assert turns == pytest.approx(round(turns), abs=1e-12)
    assert m1 + math.pi <= psi <= m2 - math.pi
    assert psi - 2 * math.pi < m1 + math.pi


def test_select_psi_ignores_kappa_scale(linear_cfg):
    scaled = linear_cfg.with_(kappa=((2.0, 0.0), (0.0, 2.0)))
    assert select_psi(scaled) == linear_cfg.psi_eps
