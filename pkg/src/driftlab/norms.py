"""Mixed space-time Lebesgue norms and the gradient functionals used by the
inequality checks.

Conventions: the mixed norm is the Lq2-in-time norm of the Lq1-in-space
norm.  Time quadrature is left-endpoint over the stored slice times
(matching the piecewise-constant-in-time trajectory of the explicit
solver); space quadrature is exact for cell-wise constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import (
    Boundary,
    ScalarField,
    SpaceTimeDomain,
    cell_speed_squared,
    gradient_faces,
    integrate,
)

INF = math.inf


class NormError(ValueError):
    pass


@dataclass(frozen=True)
class ExponentPair:
    """(q1, q2) with infinity allowed; q1 is the space exponent."""

    q1: float
    q2: float

    def __post_init__(self):
        if not (self.q1 > 0 and self.q2 > 0):
            raise NormError(f"exponents must be positive, got ({self.q1}, {self.q2})")

    def inv(self) -> tuple[float, float]:
        return (0.0 if math.isinf(self.q1) else 1.0 / self.q1,
                0.0 if math.isinf(self.q2) else 1.0 / self.q2)


@dataclass(frozen=True)
class GradientFunctionalParams:
    """Knobs of the truncated-gradient functionals: exponents m, q, the
    truncation level A > 0, the damping power xi > 1, and alpha in (0, 2)."""

    m: float
    q: float
    alpha: float = 1.0
    xi: float = 2.0
    A: float = 1.0

    def __post_init__(self):
        if not self.m > 0:
            raise NormError("m must be positive")
        if not self.m + self.q - 1 > 0:
            raise NormError("m + q - 1 must be positive")
        if not (0 < self.alpha < 2):
            raise NormError("alpha must lie in (0, 2)")
        if not self.xi > 1:
            raise NormError("xi must exceed 1")
        if not self.A > 0:
            raise NormError("A must be positive")


def _space_norm(domain: SpaceTimeDomain, slab: np.ndarray, q1: float) -> np.ndarray:
    """Per-slice spatial Lq1 norm; slab has shape (nt, *grid)."""
    flat = np.abs(slab).reshape(slab.shape[0], -1)
    if math.isinf(q1):
        return flat.max(axis=1) if flat.size else np.zeros(slab.shape[0])
    return (domain.cell_volume * (flat ** q1).sum(axis=1)) ** (1.0 / q1)


def mixed_norm(f: ScalarField, e: ExponentPair) -> float:
    """Lq2-in-time of Lq1-in-space over the field's stored extent."""
    if e.q1 < 1 or e.q2 < 1:
        raise NormError(f"mixed_norm requires q1, q2 >= 1, got ({e.q1}, {e.q2})")
    s = _space_norm(f.domain, f.values, e.q1)
    if math.isinf(e.q2):
        return float(s.max()) if s.size else 0.0
    if f.n_slices < 2:
        return 0.0
    dt = np.diff(f.times)
    return float((dt * s[:-1] ** e.q2).sum() ** (1.0 / e.q2))


def sup_l1(u: ScalarField) -> float:
    """Largest spatial mass over the stored slices."""
    return max(integrate(u.domain, u.values[k]) for k in range(u.n_slices))


def _pow_nonneg(arr: np.ndarray, p: float) -> np.ndarray:
    # guard fractional powers against -1e-17-level roundoff in densities
    if p == 1.0:
        return np.maximum(arr, 0.0)
    return np.maximum(arr, 0.0) ** p


def grad_power_alpha(u: ScalarField, m: float, q: float, alpha: float) -> float:
    """Space-time integral of |grad(u^((m+q-1)/2))|^alpha.

    The vector magnitude is assembled per cell from the averaged pair of
    opposing face differences on each axis.
    """
    if u.n_slices < 2:
        return 0.0
    p = 0.5 * (m + q - 1.0)
    dom = u.domain
    dt = np.diff(u.times)
    total = 0.0
    for k in range(u.n_slices - 1):
        w = _pow_nonneg(u.values[k], p)
        faces = gradient_faces(dom, w)
        mag2 = cell_speed_squared(dom, faces)
        total += dt[k] * dom.cell_volume * float((mag2 ** (0.5 * alpha)).sum())
    return total


def _face_pairs(domain: SpaceTimeDomain, cells: np.ndarray, axis: int):
    """(left, right) cell values per face along `axis`, ghosts per boundary."""
    pad = [(0, 0)] * domain.d
    pad[axis] = (1, 1)
    mode = "constant" if domain.boundary is Boundary.DIRICHLET_ZERO else "edge"
    padded = np.pad(cells, pad, mode=mode)
    lo = [slice(None)] * domain.d
    hi = [slice(None)] * domain.d
    lo[axis] = slice(0, domain.N + 1)
    hi[axis] = slice(1, domain.N + 2)
    return padded[tuple(lo)], padded[tuple(hi)]


def weighted_gradient(u: ScalarField, params: GradientFunctionalParams) -> float:
    """Space-time integral of |grad(u^((m+q-1)/2))|^2 / (A^(q-1) + u^(q-1))^xi.

    Evaluated face-wise: the squared gradient lives on faces and the
    denominator uses the face-averaged value of u.
    """
    if u.n_slices < 2:
        return 0.0
    m, q, xi, A = params.m, params.q, params.xi, params.A
    p = 0.5 * (m + q - 1.0)
    dom = u.domain
    dt = np.diff(u.times)
    total = 0.0
    for k in range(u.n_slices - 1):
        cells = u.values[k]
        w = _pow_nonneg(cells, p)
        slab = 0.0
        for axis in range(dom.d):
            wl, wr = _face_pairs(dom, w, axis)
            ul, ur = _face_pairs(dom, cells, axis)
            g = (wr - wl) / dom.h
            ubar = 0.5 * (np.maximum(ul, 0.0) + np.maximum(ur, 0.0))
            denom = (A ** (q - 1.0) + ubar ** (q - 1.0)) ** xi
            slab += float((g * g / denom).sum())
        total += dt[k] * dom.cell_volume * slab
    return total


def drift_energy(u: ScalarField, m: float, drift_at) -> float:
    """Space-time integral of u^(2-m) |V|^2; `drift_at(t)` yields face arrays."""
    if u.n_slices < 2:
        return 0.0
    dom = u.domain
    dt = np.diff(u.times)
    total = 0.0
    for k in range(u.n_slices - 1):
        faces = drift_at(float(u.times[k]))
        v2 = cell_speed_squared(dom, faces)
        total += dt[k] * dom.cell_volume * float(
            (_pow_nonneg(u.values[k], 2.0 - m) * v2).sum()
        )
    return total


def field_abs(u: ScalarField) -> ScalarField:
    return ScalarField(u.domain, u.times, np.abs(u.values))


def drift_magnitude_field(domain: SpaceTimeDomain, times: np.ndarray, drift_at) -> ScalarField:
    """Cell-centered |V| sampled at the given times, for mixed-norm evaluation."""
    times = np.asarray(times, dtype=float)
    vals = np.empty((times.size,) + domain.shape)
    for k, t in enumerate(times):
        vals[k] = np.sqrt(cell_speed_squared(domain, drift_at(float(t))))
    return ScalarField(domain, times, vals)
