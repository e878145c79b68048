"""Closed-form constants of the symbolic construction."""
from __future__ import annotations

import math

import numpy as np


def c_eta(eigen, eta: float) -> float:
    u, mu = eigen.u, eigen.mu
    return (u + eta) * (mu + eta) / ((u - eta) * (mu - eta))


def k_eta(eigen, eta: float) -> float:
    return math.exp(-6.0 * math.pi * (eigen.u + eta) / (eigen.mu - eta))


def delta1_of(eigen, eta: float, delta2: float) -> float:
    """Lower level ``k_eta * delta2 ** c_eta`` paired with ``delta2``."""
    return k_eta(eigen, eta) * delta2 ** c_eta(eigen, eta)


def exit_exponents(eigen, eta: float) -> tuple[float, float]:
    """Exponents ``(a, b)`` with ``delta**a <= exit radius <= delta**b``.

    ``a = (-sigma + eta)/(u - eta)`` and ``b = (-sigma - eta)/(u + eta)``.
    """
    s, u = eigen.sigma, eigen.u
    return (-s + eta) / (u - eta), (-s - eta) / (u + eta)


def op_norm(M) -> float:
    return float(np.linalg.norm(np.asarray(M, dtype=float), 2))


def delta_beta(eigen, alpha: float, kappa) -> float:
    """Strip height ``(2 alpha / (3 (|kappa| + 1))) ** (3u / -sigma)``."""
    return (2.0 * alpha / (3.0 * (op_norm(kappa) + 1.0))) ** (3.0 * eigen.u / -eigen.sigma)


def level_condition(eigen, eta: float, delta2: float, delta_b: float, kappa) -> bool:
    """``delta2 < delta_beta`` and ``2 sqrt2 delta2 < k^p delta2^(c p) / |kappa^-1|``."""
    if not (0.0 < delta2 < delta_b):
        return False
    p = (-eigen.sigma + eta) / (eigen.u - eta)
    kinv = op_norm(np.linalg.inv(np.asarray(kappa, dtype=float)))
    rhs = k_eta(eigen, eta) ** p * delta2 ** (c_eta(eigen, eta) * p) / kinv
    return 2.0 * math.sqrt(2.0) * delta2 < rhs
