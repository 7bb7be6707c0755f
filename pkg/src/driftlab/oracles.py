"""Closed-form reference solutions used to validate the solver.

These are independent of the scheme: the heat kernel for m = 1 and the
self-similar point-source profile for m > 1, with the source-solution
constants written out so tests can pin them.
"""

from __future__ import annotations

import math

import numpy as np

from .grid import SpaceTimeDomain


def heat_kernel(coords, t: float, center, mass: float = 1.0) -> np.ndarray:
    """Free-space Gaussian at time t > 0 emanating from a point mass."""
    d = len(coords)
    r2 = sum((c - x0) ** 2 for c, x0 in zip(coords, center))
    return mass * (4.0 * math.pi * t) ** (-d / 2.0) * np.exp(-r2 / (4.0 * t))


def source_constants(m: float, d: int, mass: float = 1.0) -> dict:
    """Constants of the self-similar source solution
    u = t^-alpha (C - k |x|^2 t^(-2 beta))_+^(1/(m-1)) with the given mass."""
    if not m > 1:
        raise ValueError("the source profile needs m > 1")
    alpha = d / (d * (m - 1.0) + 2.0)
    beta = alpha / d
    k = alpha * (m - 1.0) / (2.0 * m * d)
    p = 1.0 / (m - 1.0)
    # integral of (1 - |z|^2)_+^p over R^d: pi^(d/2) Gamma(p+1) / Gamma(p+1+d/2)
    unit = math.pi ** (d / 2.0) * math.gamma(p + 1.0) / math.gamma(p + 1.0 + d / 2.0)
    # total mass = C^(p + d/2) k^(-d/2) * unit
    C = (mass * k ** (d / 2.0) / unit) ** (1.0 / (p + d / 2.0))
    return {"alpha": alpha, "beta": beta, "k": k, "p": p, "C": C}


def barenblatt(coords, t: float, m: float, d: int, center, mass: float = 1.0) -> np.ndarray:
    """Self-similar point-source solution of u_t = Lap(u^m), m > 1."""
    c = source_constants(m, d, mass)
    r2 = sum((x - x0) ** 2 for x, x0 in zip(coords, center))
    core = c["C"] - c["k"] * r2 * t ** (-2.0 * c["beta"])
    return t ** (-c["alpha"]) * np.clip(core, 0.0, None) ** c["p"]


def l1_error(domain: SpaceTimeDomain, numeric: np.ndarray, exact: np.ndarray) -> float:
    return domain.cell_volume * float(np.abs(numeric - exact).sum())
