"""Pure-Python inner-flow kernel (fallback for the compiled ``_kernel``).

For the closed-form fields (``none`` and ``builtin_quadratic``) the scaled
flow written in log-polar coordinates ``L = ln r``, ``phi`` and with the
height ``s = ln y3`` as independent variable reads

    dL/ds   = (sigma + a e^s cos 2phi) / D
    dphi/ds = (-mu   - a e^s sin 2phi) / D
    dt/ds   = 1 / D,            D = u + b e^(2L)

with ``a = eps*eta0`` and ``b = eps^2*eta0``.  Starting on the entry
cylinder (``L = 0``) at height ``delta`` the exit plane ``y3 = 1`` is the
fixed endpoint ``s = 0``, so no event location is needed.

The integrator is Dormand-Prince 5(4) with RMS error control on
``(L, phi, t)``.  With ``jac=True`` the variational equations for the
derivatives with respect to the initial angle and to ``s0 = ln delta``
are carried along on the same step sequence.

This module must stay line-for-line equivalent to ``_kernel.pyx``.
"""
import math

MAX_STEPS = 1_000_000

_C2, _C3, _C4, _C5 = 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9
_A21 = 1.0 / 5
_A31, _A32 = 3.0 / 40, 9.0 / 40
_A41, _A42, _A43 = 44.0 / 45, -56.0 / 15, 32.0 / 9
_A51, _A52, _A53, _A54 = 19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729
_A61, _A62, _A63, _A64, _A65 = 9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656
_B1, _B3, _B4, _B5, _B6 = 35.0 / 384, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71.0 / 57600,
    -71.0 / 16695,
    71.0 / 1920,
    -17253.0 / 339200,
    22.0 / 525,
    -1.0 / 40,
)


def _rhs(s, y, n, sigma, mu, u, a, b):
    L, phi = y[0], y[1]
    es = math.exp(s)
    c2 = math.cos(2.0 * phi)
    s2 = math.sin(2.0 * phi)
    E = b * math.exp(2.0 * L)
    D = u + E
    fL = (sigma + a * es * c2) / D
    fp = (-mu - a * es * s2) / D
    ft = 1.0 / D
    if n == 3:
        return [fL, fp, ft]
    g = 2.0 * E / D
    jLL, jLp = -fL * g, -2.0 * a * es * s2 / D
    jpL, jpp = -fp * g, -2.0 * a * es * c2 / D
    jtL = -ft * g
    out = [fL, fp, ft]
    for base in (3, 6):
        dL, dp = y[base], y[base + 1]
        out.append(jLL * dL + jLp * dp)
        out.append(jpL * dL + jpp * dp)
        out.append(jtL * dL)
    return out


def inner_flow(sigma, mu, u, a, b, phi0, delta, rtol=1e-12, atol=1e-12, jac=False, _rec=None):
    """Integrate from the chart point with angle ``phi0`` and height ``delta`` to ``y3 = 1``.

    Returns ``(L, phi, t, nsteps)`` or, with ``jac``,
    ``(L, phi, t, nsteps, dpsi, ddelta)`` where ``dpsi`` and ``ddelta`` are
    3-lists of derivatives of ``(L, phi, t)``.
    """
    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    n = 9 if jac else 3
    s = math.log(delta)
    s_end = 0.0
    y = [0.0, phi0, 0.0]
    if jac:
        f0 = _rhs(s, y, 3, sigma, mu, u, a, b)
        y += [0.0, 1.0, 0.0, f0[0], f0[1], f0[2]]
    k1 = _rhs(s, y, n, sigma, mu, u, a, b)
    if _rec is not None:
        _rec.append((s, y[0], y[1], y[2]))
    h = min(-s, 0.05 * min(1.0, u / mu))
    nsteps = 0
    while s < s_end:
        if nsteps >= MAX_STEPS:
            raise RuntimeError("inner_flow: step limit exceeded")
        if s + h >= s_end:
            h = s_end - s
        y2 = [y[i] + h * _A21 * k1[i] for i in range(n)]
        k2 = _rhs(s + _C2 * h, y2, n, sigma, mu, u, a, b)
        y3 = [y[i] + h * (_A31 * k1[i] + _A32 * k2[i]) for i in range(n)]
        k3 = _rhs(s + _C3 * h, y3, n, sigma, mu, u, a, b)
        y4 = [y[i] + h * (_A41 * k1[i] + _A42 * k2[i] + _A43 * k3[i]) for i in range(n)]
        k4 = _rhs(s + _C4 * h, y4, n, sigma, mu, u, a, b)
        y5 = [y[i] + h * (_A51 * k1[i] + _A52 * k2[i] + _A53 * k3[i] + _A54 * k4[i]) for i in range(n)]
        k5 = _rhs(s + _C5 * h, y5, n, sigma, mu, u, a, b)
        y6 = [
            y[i] + h * (_A61 * k1[i] + _A62 * k2[i] + _A63 * k3[i] + _A64 * k4[i] + _A65 * k5[i])
            for i in range(n)
        ]
        k6 = _rhs(s + h, y6, n, sigma, mu, u, a, b)
        yn = [
            y[i] + h * (_B1 * k1[i] + _B3 * k3[i] + _B4 * k4[i] + _B5 * k5[i] + _B6 * k6[i]) for i in range(n)
        ]
        k7 = _rhs(s + h, yn, n, sigma, mu, u, a, b)
        acc = 0.0
        for i in range(3):
            ei = h * (_E1 * k1[i] + _E3 * k3[i] + _E4 * k4[i] + _E5 * k5[i] + _E6 * k6[i] + _E7 * k7[i])
            sc = atol + rtol * max(abs(y[i]), abs(yn[i]))
            acc += (ei / sc) ** 2
        err = math.sqrt(acc / 3.0)
        if err <= 1.0:
            s = s_end if s + h >= s_end else s + h
            y = yn
            k1 = k7
            nsteps += 1
            if _rec is not None:
                _rec.append((s, y[0], y[1], y[2]))
            fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
        else:
            fac = max(0.2, 0.9 * err ** -0.2)
        h *= fac
        if h < 1e-15:
            raise RuntimeError("inner_flow: step size underflow")
    if not jac:
        return y[0], y[1], y[2], nsteps
    dpsi = [y[3], y[4], y[5]]
    ddelta = [-y[6] / delta, -y[7] / delta, -y[8] / delta]
    return y[0], y[1], y[2], nsteps, dpsi, ddelta


def inner_flow_path(sigma, mu, u, a, b, phi0, delta, rtol=1e-12, atol=1e-12):
    """Same integration as :func:`inner_flow`; returns the accepted nodes.

    Each node is ``(s, L, phi, t)`` with ``s = ln y3``; the first node is the
    starting point and the last one lies on the exit plane.
    """
    rec = []
    inner_flow(sigma, mu, u, a, b, phi0, delta, rtol, atol, False, rec)
    return rec
