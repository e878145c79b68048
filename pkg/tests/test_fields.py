import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from shilnikov_lab.errors import DegenerateRadiusError, ParameterError, SpectrumError, UsageError
from shilnikov_lab.fields import (
    FD_NOISE,
    Eigentriple,
    FieldSpec,
    Nonlinearity,
    _eval_V_scaled_many,
    check_hypotheses,
    coeff_A_cal,
    coeff_B_cal,
    conjugate_to_blockform,
    eval_A,
    eval_V,
    eval_V_scaled,
    remainder_L,
    remainder_U,
    sample_B1,
)

EIG = Eigentriple(-0.5, 1.0, 1.0)


def _sympy_scaled_builtin():
    """``(1/eps) V(eps x)`` for the builtin field, expanded symbolically."""
    s, m, u, e0, eps, x1, x2, x3 = sp.symbols("sigma mu u eta0 eps x1 x2 x3")
    y1, y2, y3 = eps * x1, eps * x2, eps * x3
    V = sp.Matrix(
        [
            s * y1 + m * y2 + e0 * y1 * y3,
            -m * y1 + s * y2 - e0 * y2 * y3,
            u * y3 + e0 * y3 * (y1**2 + y2**2),
        ]
    )
    expr = sp.simplify(V / eps)
    return sp.lambdify((s, m, u, e0, eps, x1, x2, x3), list(expr), "math")


SYMPY_V = _sympy_scaled_builtin()


@pytest.mark.parametrize(
    "x, want",
    [((1, 0, 0), (-0.5, -1, 0)), ((0, 0, 1), (0, 0, 1)), ((1, 1, 1), (0.5, -1.5, 1))],
)
def test_eval_A(x, want):
    assert np.allclose(eval_A(EIG, x), want, atol=0)


def test_eval_V_examples():
    lin = FieldSpec.linear(-0.5, 1.0, 1.0)
    b = FieldSpec.builtin(-0.5, 1.0, 1.0, 0.1)
    x = np.array([0.3, -0.2, 0.7])
    assert np.array_equal(eval_V(lin, x), eval_A(EIG, x))
    assert np.allclose(eval_V(b, (1, 0, 0)), (-0.5, -1, 0), atol=0)
    assert np.allclose(eval_V(b, (0, 0, 1)), (0, 0, 1), atol=0)


def test_linear_scaling_invariance():
    lin = FieldSpec.linear(-0.5, 1.0, 1.0)
    assert np.allclose(eval_V_scaled(lin, 0.01, (1, 1, 1)), (0.5, -1.5, 1), atol=0)


@settings(max_examples=200)
@given(
    st.floats(0.01, 1.0),
    st.floats(0.0, 0.3),
    st.tuples(*[st.floats(-1, 1)] * 3),
)
def test_scaled_builtin_matches_symbolic_expansion(eps, eta0, x):
    spec = FieldSpec.builtin(-0.5, 1.0, 1.0, eta0)
    want = SYMPY_V(-0.5, 1.0, 1.0, eta0, eps, *x)
    assert np.allclose(eval_V_scaled(spec, eps, x), want, rtol=1e-13, atol=1e-15)


def test_scaled_builtin_worked_point():
    # cubic component scales by eps^2: 0.1 * (0.25, 0, 0.125) on top of A x
    spec = FieldSpec.builtin(-0.5, 1.0, 1.0, 0.1)
    x = (1.0, 0.0, 0.5)
    want = eval_A(EIG, x) + 0.1 * np.array([0.25, 0.0, 0.125])
    assert np.allclose(eval_V_scaled(spec, 0.5, x), want, rtol=1e-15)


def test_scaled_field_tends_to_linear_part():
    spec = FieldSpec.builtin(-0.5, 1.0, 1.0, 0.1)
    x = np.array([0.4, -0.3, 0.8])
    d2 = np.linalg.norm(eval_V_scaled(spec, 1e-2, x) - eval_A(EIG, x))
    d3 = np.linalg.norm(eval_V_scaled(spec, 1e-3, x) - eval_A(EIG, x))
    assert d3 < d2 and d3 / d2 == pytest.approx(0.1, rel=1e-3)


def test_eps_must_be_positive():
    with pytest.raises(ParameterError):
        eval_V_scaled(FieldSpec.linear(-0.5, 1, 1), 0.0, (0, 0, 0))


def test_remainders():
    lin = FieldSpec.linear(-0.5, 1.0, 1.0)
    assert np.array_equal(remainder_L(lin, 0.3, (0.2, 0.1, 0.5)), np.zeros(3))
    b = FieldSpec.builtin(-0.5, 1.0, 1.0, 0.1)
    assert np.allclose(remainder_U(b, 1.0, (0.5, 0.5, 0.5)), (0, 0, 0.025), atol=1e-17)
    assert np.array_equal(remainder_U(b, 1.0, (0.3, 0.4, 0.0)), np.zeros(3))
    assert np.array_equal(remainder_L(b, 1.0, (0.0, 0.0, 0.6)), np.zeros(3))


def test_radial_coefficients():
    b = FieldSpec.builtin(-0.5, 1.0, 1.0, 0.1)
    assert coeff_A_cal(b, 1.0, (1, 0, 0.5)) == pytest.approx(0.05, abs=1e-16)
    assert coeff_B_cal(b, 1.0, (1, 0, 0.5)) == pytest.approx(0.0, abs=1e-16)
    lin = FieldSpec.linear(-0.5, 1.0, 1.0)
    assert coeff_A_cal(lin, 0.2, (0.3, 0.1, 0.2)) == 0 and coeff_B_cal(lin, 0.2, (0.3, 0.1, 0.2)) == 0
    with pytest.raises(DegenerateRadiusError):
        coeff_A_cal(b, 1.0, (0, 0, 0.5))


def test_radial_coefficients_bounded_by_certified_eta(builtin_spec):
    cert = check_hypotheses(builtin_spec, 0.1, 0.01)
    Y = sample_B1(2048, seed=3)
    Y = Y[np.hypot(Y[:, 0], Y[:, 1]) ** 2 > 1e-6]
    worst = max(max(abs(coeff_A_cal(builtin_spec, 0.1, y)), abs(coeff_B_cal(builtin_spec, 0.1, y))) for y in Y)
    assert worst <= cert.eta_measured + 1e-12


def test_certificate_linear_field():
    cert = check_hypotheses(FieldSpec.linear(-0.5, 1.0, 1.0), 0.3, 0.01)
    assert cert.passed and cert.eta_measured <= FD_NOISE
    assert cert.grid_count >= 1000


def test_certificate_builtin_quotients():
    # the analytic bound eta0 covers the two quotients; the Jacobian term is larger at eps = 1
    cert = check_hypotheses(FieldSpec.builtin(-0.5, 1.0, 1.0, 0.1), 1.0, 0.1)
    assert cert.quotient_U <= 0.1 * (1 + 1e-6)
    assert cert.quotient_L <= 0.1 * (1 + 1e-6)
    assert cert.eta_measured == max(cert.quotient_U, cert.quotient_L, cert.jacobian_deviation)


def test_certificate_default_scenario(builtin_spec):
    cert = check_hypotheses(builtin_spec, 0.1, 0.01)
    assert cert.passed and cert.eta_measured <= 0.05 + 1e-6


def test_certificate_flags_hypothesis_H():
    cert = check_hypotheses(FieldSpec.linear(-0.5, 1.0, 0.4), 0.1, 0.01)
    assert not cert.passed and cert.flags["hypothesis_H"] is False


def test_certificate_is_reproducible(builtin_spec):
    a = check_hypotheses(builtin_spec, 0.1, 0.01, seed=7).to_json()
    b = check_hypotheses(builtin_spec, 0.1, 0.01, seed=7).to_json()
    assert a == b


def test_eta_scales_linearly_with_strength():
    vals = [check_hypotheses(FieldSpec.builtin(-0.5, 1.0, 1.0, e0), 1.0, 1.0).eta_measured / e0 for e0 in (0.01, 0.05, 0.1)]
    assert max(vals) / min(vals) - 1 < 0.01


@pytest.mark.parametrize("eps", [1.0, 0.5, 0.1, 0.01])
def test_invariant_subspaces(eps):
    spec = FieldSpec.builtin(-0.6, 8.0, 1.0, 0.05)
    Y = sample_B1(2**14, seed=1)
    L = Y.copy()
    L[:, 2] = 0.0
    U = Y.copy()
    U[:, :2] = 0.0
    assert np.abs(_eval_V_scaled_many(spec, eps, L)[:, 2]).max() <= 1e-14
    assert np.hypot(*_eval_V_scaled_many(spec, eps, U)[:, :2].T).max() <= 1e-14
    for y in Y[::500]:
        assert eval_V_scaled(spec, eps, (y[0], y[1], 0.0))[2] == 0.0


def test_transversality(builtin_cfg):
    spec, e, eta = builtin_cfg.field, builtin_cfg.eigen, builtin_cfg.eta
    assert eval_V_scaled(spec, builtin_cfg.epsilon, (0, 0, 1))[2] >= e.u / 2
    rng = np.random.default_rng(0)
    for a, x3 in zip(rng.uniform(0, 2 * math.pi, 500), rng.uniform(-0.999, 0.999, 500)):
        x = np.array([math.cos(a), math.sin(a), x3])
        v = eval_V_scaled(spec, builtin_cfg.epsilon, x)
        assert v[0] * x[0] + v[1] * x[1] <= (e.sigma + eta) + 1e-15


def test_user_nonlinearity_round_trip():
    spec = FieldSpec(EIG, Nonlinearity("user", r_V=2.0, ref="numpy:zeros_like"))
    again = FieldSpec.from_json(spec.to_json())
    assert again.to_json() == spec.to_json()
    assert np.array_equal(eval_V(again, (1, 2, 3)), eval_A(EIG, (1, 2, 3)))
    with pytest.raises(UsageError):
        Nonlinearity("user")
    with pytest.raises(UsageError):
        Nonlinearity("cubic")


def test_conjugate_block_form_identity():
    eig, I = conjugate_to_blockform(EIG.matrix())
    assert (eig.sigma, eig.mu, eig.u) == pytest.approx((-0.5, 1.0, 1.0), abs=1e-12)
    assert np.allclose(I @ EIG.matrix() @ np.linalg.inv(I), EIG.matrix(), atol=1e-12)


def test_conjugate_random_matrices():
    rng = np.random.default_rng(42)
    for _ in range(100):
        s, m, u = -rng.uniform(0.1, 2), rng.uniform(0.1, 5), rng.uniform(0.1, 3)
        A = Eigentriple(s, m, u).matrix() if s + u > 0 else np.array([[s, m, 0], [-m, s, 0], [0, 0, u]])
        Q = rng.normal(size=(3, 3))
        M = Q @ A @ np.linalg.inv(Q)
        eig, I = conjugate_to_blockform(M)
        assert (eig.sigma, eig.mu, eig.u) == pytest.approx((s, m, u), abs=1e-9)
        assert np.max(np.abs(I @ M @ np.linalg.inv(I) - A)) <= 1e-9 * max(1, np.abs(M).max())


def test_conjugate_rejects_real_spectrum():
    with pytest.raises(SpectrumError):
        conjugate_to_blockform(np.diag([1.0, 2.0, 3.0]))
