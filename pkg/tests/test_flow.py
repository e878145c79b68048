import math

import numpy as np
import pytest

from shilnikov_lab.errors import BlowupError, DegenerateRadiusError, InitializationError, ParameterError
from shilnikov_lab.fields import Eigentriple, FieldSpec, Nonlinearity, check_hypotheses
from shilnikov_lab.flow import EventKind, EventSpec, Trajectory, check_envelopes, integrate, integrate_polar

LIN = FieldSpec.linear(-0.5, 1.0, 1.0)
BUILTIN = FieldSpec.builtin(-0.6, 8.0, 1.0, 0.05)


def linear_solution(y0, t, s=-0.5, m=1.0, u=1.0):
    c, sn = math.cos(m * t), math.sin(m * t)
    e = math.exp(s * t)
    return np.array([e * (c * y0[0] + sn * y0[1]), e * (-sn * y0[0] + c * y0[1]), math.exp(u * t) * y0[2]])


def test_event_on_unstable_axis():
    traj, ev = integrate(LIN, 0.3, (0, 0, 0.1), 10.0, [EventSpec.hit_y3_level(1.0, "increasing")])
    assert ev is not None and ev.event.kind == EventKind.HIT_Y3_LEVEL
    assert ev.t == pytest.approx(math.log(10), abs=1e-9)
    assert np.allclose(ev.state, (0, 0, 1), atol=1e-12)
    assert traj.times[-1] == ev.t


def test_full_turn_of_linear_rotation():
    traj, ev = integrate(LIN, 0.3, (1, 0, 0), 2 * math.pi)
    assert ev is None
    end = traj.states[-1]
    assert math.hypot(end[0], end[1]) == pytest.approx(math.exp(-math.pi), rel=1e-9)
    assert math.atan2(end[1], end[0]) == pytest.approx(0.0, abs=1e-9)


def test_linear_oracle_over_ten_time_units():
    y0 = np.array([0.6, -0.3, 1e-4])
    traj, _ = integrate(LIN, 0.5, y0, 10.0)
    for t, y in zip(traj.times[::7], traj.states[::7]):
        want = linear_solution(y0, t)
        assert np.linalg.norm(y - want) <= 1e-9 * max(np.linalg.norm(want), 1e-3)


def test_dense_output_matches_nodes():
    traj, _ = integrate(LIN, 0.5, (0.6, -0.3, 0.01), 3.0)
    for k in range(1, len(traj)):
        assert np.allclose(traj(traj.times[k]), traj.states[k], atol=1e-12)
    assert np.all(np.diff(traj.times) > 0)


def test_builtin_event_within_travel_time_bracket():
    eta = check_hypotheses(BUILTIN, 0.1, 0.01).eta_measured
    _, ev = integrate(BUILTIN, 0.1, (1, 0, 0.01), 100.0, [EventSpec.hit_y3_level(1.0)])
    assert math.log(100) / (1 + eta) <= ev.t <= math.log(100) / (1 - eta)


def test_event_idempotence():
    _, ev = integrate(BUILTIN, 0.1, (1, 0, 0.01), 100.0, [EventSpec.hit_y3_level(1.0)])
    _, again = integrate(BUILTIN, 0.1, ev.state, 1.0, [EventSpec.hit_y3_level(1.0, "any")])
    assert again is not None and again.t <= 1e-10


def test_simultaneous_events_resolve_by_order():
    events = [EventSpec.hit_y3_level(0.5), EventSpec.hit_y3_level(0.5)]
    _, ev = integrate(LIN, 0.1, (0, 0, 0.1), 5.0, events)
    assert ev.index == 0
    events = [EventSpec.hit_y3_level(0.9), EventSpec.hit_y3_level(0.5)]
    _, ev = integrate(LIN, 0.1, (0, 0, 0.1), 5.0, events)
    assert ev.index == 1 and ev.t == pytest.approx(math.log(5), abs=1e-9)


def test_exit_b1_event():
    _, ev = integrate(LIN, 0.1, (0.2, 0, 0.5), 5.0, [EventSpec.exit_b1()])
    assert ev.t == pytest.approx(math.log(2 * (1 + 1e-9)), abs=1e-9)


def test_cylinder_event_decreasing():
    _, ev = integrate(LIN, 0.1, (1.5, 0, 0), 5.0, [EventSpec.hit_cylinder_radius(1.0)])
    assert ev.t == pytest.approx(2 * math.log(1.5), abs=1e-9)


def test_blowup():
    with pytest.raises(BlowupError):
        integrate(LIN, 0.1, (0, 0, 1.0), 100.0)


def test_bad_epsilon():
    with pytest.raises(ParameterError):
        integrate(LIN, 0.0, (0, 0, 1.0), 1.0)


def test_polar_linear():
    traj, _ = integrate_polar(LIN, 0.1, (1, 0, 0), 0.0, 1.0)
    z = traj.states[-1]
    assert z[3] == pytest.approx(math.exp(-0.5), rel=1e-10)
    assert z[4] == pytest.approx(-1.0, abs=1e-10)
    shifted, _ = integrate_polar(LIN, 0.1, (1, 0, 0), 2 * math.pi, 1.0)
    assert shifted.states[-1][4] == pytest.approx(2 * math.pi - 1.0, abs=1e-10)
    assert np.allclose(shifted.states[-1][:3], z[:3], atol=1e-12)


def test_polar_consistency_and_rates():
    eta = check_hypotheses(BUILTIN, 0.1, 0.01).eta_measured
    traj, _ = integrate_polar(BUILTIN, 0.1, (math.cos(0.4), math.sin(0.4), 1e-3), 0.4, 6.0, [EventSpec.hit_y3_level(1.0)])
    S = traj.states
    assert np.max(np.hypot(S[:, 0] - S[:, 3] * np.cos(S[:, 4]), S[:, 1] - S[:, 3] * np.sin(S[:, 4]))) <= 1e-8
    assert S[:, 3].min() > 1e-300
    # instantaneous rates from the field itself
    for y in S[::5, :3]:
        from shilnikov_lab.fields import coeff_A_cal, coeff_B_cal

        assert abs(coeff_A_cal(BUILTIN, 0.1, y)) <= eta + 1e-12
        assert abs(coeff_B_cal(BUILTIN, 0.1, y)) <= eta + 1e-12


def test_polar_errors():
    with pytest.raises(InitializationError):
        integrate_polar(LIN, 0.1, (1, 0, 0), 1.0, 1.0)
    with pytest.raises(DegenerateRadiusError):
        integrate_polar(LIN, 0.1, (0, 0, 0.5), 0.0, 1.0)


def _polar_run(spec, t_max=2.0):
    traj, _ = integrate_polar(spec, 0.1, (math.cos(0.1), math.sin(0.1), 0.05), 0.1, t_max, [EventSpec.hit_y3_level(1.0)])
    return traj


def test_envelopes_linear():
    traj = _polar_run(LIN)
    rep = check_envelopes(traj, LIN.eigen, 0.0)
    assert rep.passed and rep.worst_r_violation <= 1e-9 and rep.min_r_slack == pytest.approx(0.0, abs=1e-9)
    rep = check_envelopes(traj, LIN.eigen, 0.05)
    t = traj.times[-1] - traj.times[0]
    assert rep.passed and rep.min_r_slack == pytest.approx(0.05 * traj.times[1], rel=1e-6)
    assert rep.min_phi_slack <= 0.05 * t


def test_envelopes_builtin():
    eta = check_hypotheses(BUILTIN, 0.1, 0.01).eta_measured
    traj = _polar_run(BUILTIN, 10.0)
    assert check_envelopes(traj, BUILTIN.eigen, eta).passed
    assert not check_envelopes(traj, BUILTIN.eigen, 0.0).passed


def test_csv_export(tmp_path):
    traj = _polar_run(LIN)
    p = tmp_path / "traj.csv"
    traj.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "t,y1,y2,y3,r,phi"
    assert len(lines) == len(traj) + 1
    row = [float(v) for v in lines[-1].split(",")]
    assert row[0] == traj.times[-1] and row[1:] == list(traj.states[-1])


def test_user_field_integrates():
    spec = FieldSpec(Eigentriple(-0.5, 1.0, 1.0), Nonlinearity("user", r_V=1.0, func=lambda x: np.zeros(3)))
    _, ev = integrate(spec, 0.1, (0, 0, 0.1), 10.0, [EventSpec.hit_y3_level(1.0)])
    assert ev.t == pytest.approx(math.log(10), abs=1e-9)
