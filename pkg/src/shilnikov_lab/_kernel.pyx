# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled inner-flow kernel.

Same algorithm and step control as ``_kernel_py.inner_flow``; see that
module for the equations.
"""
from libc.math cimport exp, cos, sin, log, sqrt, fabs
from libc.stdlib cimport malloc, free

DEF NMAX = 9
DEF MAX_STEPS = 1000000

cdef double C2 = 1.0 / 5, C3 = 3.0 / 10, C4 = 4.0 / 5, C5 = 8.0 / 9
cdef double A21 = 1.0 / 5
cdef double A31 = 3.0 / 40, A32 = 9.0 / 40
cdef double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9
cdef double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561, A54 = -212.0 / 729
cdef double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176, A65 = -5103.0 / 18656
cdef double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192, B5 = -2187.0 / 6784, B6 = 11.0 / 84
cdef double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920
cdef double E5 = -17253.0 / 339200, E6 = 22.0 / 525, E7 = -1.0 / 40


cdef void rhs(double s, double* y, int n, double sigma, double mu, double u,
              double a, double b, double* out) nogil:
    cdef double es = exp(s)
    cdef double c2 = cos(2.0 * y[1])
    cdef double s2 = sin(2.0 * y[1])
    cdef double E = b * exp(2.0 * y[0])
    cdef double D = u + E
    cdef double fL = (sigma + a * es * c2) / D
    cdef double fp = (-mu - a * es * s2) / D
    cdef double ft = 1.0 / D
    cdef double g, jLL, jLp, jpL, jpp, jtL
    cdef int base
    out[0] = fL
    out[1] = fp
    out[2] = ft
    if n == 3:
        return
    g = 2.0 * E / D
    jLL = -fL * g
    jLp = -2.0 * a * es * s2 / D
    jpL = -fp * g
    jpp = -2.0 * a * es * c2 / D
    jtL = -ft * g
    for base in range(3, 9, 3):
        out[base] = jLL * y[base] + jLp * y[base + 1]
        out[base + 1] = jpL * y[base] + jpp * y[base + 1]
        out[base + 2] = jtL * y[base]


cdef int integrate(double sigma, double mu, double u, double a, double b,
                   double phi0, double delta, double rtol, double atol,
                   int n, double* y, long* nsteps_out,
                   double* rec, long rec_cap) nogil:
    cdef double k1[NMAX]
    cdef double k2[NMAX]
    cdef double k3[NMAX]
    cdef double k4[NMAX]
    cdef double k5[NMAX]
    cdef double k6[NMAX]
    cdef double k7[NMAX]
    cdef double yt[NMAX]
    cdef double yn[NMAX]
    cdef double f0[3]
    cdef double s = log(delta)
    cdef double s_end = 0.0
    cdef double h, err, acc, ei, sc, fac, ay, ayn
    cdef long nsteps = 0
    cdef int i
    cdef bint last

    y[0] = 0.0
    y[1] = phi0
    y[2] = 0.0
    if n == 9:
        rhs(s, y, 3, sigma, mu, u, a, b, f0)
        y[3] = 0.0
        y[4] = 1.0
        y[5] = 0.0
        y[6] = f0[0]
        y[7] = f0[1]
        y[8] = f0[2]
    rhs(s, y, n, sigma, mu, u, a, b, k1)
    if rec != NULL:
        rec[0] = s
        rec[1] = y[0]
        rec[2] = y[1]
        rec[3] = y[2]
    h = 0.05 * (u / mu if u < mu else 1.0)
    if h > -s:
        h = -s
    while s < s_end:
        if nsteps >= MAX_STEPS:
            return 1
        last = s + h >= s_end
        if last:
            h = s_end - s
        for i in range(n):
            yt[i] = y[i] + h * A21 * k1[i]
        rhs(s + C2 * h, yt, n, sigma, mu, u, a, b, k2)
        for i in range(n):
            yt[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i])
        rhs(s + C3 * h, yt, n, sigma, mu, u, a, b, k3)
        for i in range(n):
            yt[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
        rhs(s + C4 * h, yt, n, sigma, mu, u, a, b, k4)
        for i in range(n):
            yt[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
        rhs(s + C5 * h, yt, n, sigma, mu, u, a, b, k5)
        for i in range(n):
            yt[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
        rhs(s + h, yt, n, sigma, mu, u, a, b, k6)
        for i in range(n):
            yn[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i])
        rhs(s + h, yn, n, sigma, mu, u, a, b, k7)
        acc = 0.0
        for i in range(3):
            ei = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
            ay = fabs(y[i])
            ayn = fabs(yn[i])
            sc = atol + rtol * (ay if ay > ayn else ayn)
            acc += (ei / sc) * (ei / sc)
        err = sqrt(acc / 3.0)
        if err <= 1.0:
            if last:
                s = s_end
            else:
                s = s + h
            for i in range(n):
                y[i] = yn[i]
                k1[i] = k7[i]
            nsteps += 1
            if rec != NULL:
                if nsteps >= rec_cap:
                    return 3
                rec[4 * nsteps] = s
                rec[4 * nsteps + 1] = y[0]
                rec[4 * nsteps + 2] = y[1]
                rec[4 * nsteps + 3] = y[2]
            if err == 0.0:
                fac = 5.0
            else:
                fac = 0.9 * err ** -0.2
                if fac > 5.0:
                    fac = 5.0
                if fac < 0.2:
                    fac = 0.2
        else:
            fac = 0.9 * err ** -0.2
            if fac < 0.2:
                fac = 0.2
        h *= fac
        if h < 1e-15:
            return 2
    nsteps_out[0] = nsteps
    return 0


def inner_flow(double sigma, double mu, double u, double a, double b,
               double phi0, double delta, double rtol=1e-12, double atol=1e-12,
               bint jac=False):
    """See ``_kernel_py.inner_flow``."""
    cdef double y[NMAX]
    cdef long nsteps = 0
    cdef int status
    cdef int n = 9 if jac else 3
    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    with nogil:
        status = integrate(sigma, mu, u, a, b, phi0, delta, rtol, atol, n, y, &nsteps, NULL, 0)
    if status == 1:
        raise RuntimeError("inner_flow: step limit exceeded")
    if status == 2:
        raise RuntimeError("inner_flow: step size underflow")
    if not jac:
        return y[0], y[1], y[2], nsteps
    return (y[0], y[1], y[2], nsteps,
            [y[3], y[4], y[5]],
            [-y[6] / delta, -y[7] / delta, -y[8] / delta])


def inner_flow_path(double sigma, double mu, double u, double a, double b,
                    double phi0, double delta, double rtol=1e-12, double atol=1e-12):
    """See ``_kernel_py.inner_flow_path``."""
    cdef double y[NMAX]
    cdef long nsteps = 0
    cdef int status
    cdef long cap = 100000
    cdef long i
    cdef double* rec
    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    rec = <double*> malloc(4 * cap * sizeof(double))
    if rec == NULL:
        raise MemoryError()
    try:
        with nogil:
            status = integrate(sigma, mu, u, a, b, phi0, delta, rtol, atol, 3, y, &nsteps, rec, cap)
        if status == 1:
            raise RuntimeError("inner_flow: step limit exceeded")
        if status == 2:
            raise RuntimeError("inner_flow: step size underflow")
        if status == 3:
            raise RuntimeError("inner_flow_path: node buffer exhausted")
        return [(rec[4 * i], rec[4 * i + 1], rec[4 * i + 2], rec[4 * i + 3]) for i in range(nsteps + 1)]
    finally:
        free(rec)
