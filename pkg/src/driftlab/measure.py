"""Measure-valued forcing: space-time atoms plus an optional absolutely
continuous part and optional initial-time atoms, together with the bounded
mollified approximations the solver consumes.

The mollifier is the compactly supported polynomial bump (1 - s^2)_+^2 of
radius delta_n = max(2h, L/n): the 2h floor keeps atoms resolvable on the
grid, and the spatial weights are renormalized discretely so every
approximation level carries exactly the prescribed mass.  Atom time
profiles keep an analytic antiderivative so the solver can inject the
exact per-step mass regardless of its adaptive step sizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import ScalarField, SpaceTimeDomain, integrate


class MeasureError(ValueError):
    pass


def _bump(s: np.ndarray) -> np.ndarray:
    return np.clip(1.0 - s * s, 0.0, None) ** 2


def _bump_antideriv(s: float) -> float:
    """Antiderivative of (1 - s^2)^2 on [-1, 1], zero at -1."""
    s = min(1.0, max(-1.0, s))
    val = s - 2.0 * s ** 3 / 3.0 + s ** 5 / 5.0
    return val + 8.0 / 15.0  # shift so F(-1) = 0


_BUMP_TOTAL_1D = 16.0 / 15.0
# full-space integral of the radial bump of radius delta in dimension d
_RADIAL_TOTAL = {2: math.pi / 3.0, 3: 32.0 * math.pi / 105.0}


@dataclass(frozen=True)
class Atom:
    x: tuple[float, ...]
    t: float
    mass: float

    def __post_init__(self):
        if not self.mass > 0:
            raise MeasureError("atom mass must be positive")


@dataclass(frozen=True)
class InitialAtom:
    x: tuple[float, ...]
    mass: float

    def __post_init__(self):
        if not self.mass > 0:
            raise MeasureError("initial atom mass must be positive")


@dataclass(frozen=True)
class DensitySpec:
    """Absolutely continuous part, constant in time: a named spatial preset.

    Presets: "uniform" (params: value) and "bump" (params: center, radius,
    height -- the polynomial bump, support must stay inside the box).
    """

    preset: str
    params: dict

    def space_values(self, domain: SpaceTimeDomain) -> np.ndarray:
        if self.preset == "uniform":
            return np.full(domain.shape, float(self.params["value"]))
        if self.preset == "bump":
            center = tuple(float(c) for c in self.params["center"])
            radius = float(self.params["radius"])
            height = float(self.params.get("height", 1.0))
            r2 = np.zeros(domain.shape)
            for ax, c in zip(domain.cell_centers(), center):
                r2 += (ax - c) ** 2
            return height * _bump(np.sqrt(r2) / radius)
        raise MeasureError(f"unknown density preset {self.preset!r}")

    def space_integral(self, domain: SpaceTimeDomain) -> float:
        if self.preset == "uniform":
            return float(self.params["value"]) * domain.L ** domain.d
        if self.preset == "bump":
            center = tuple(float(c) for c in self.params["center"])
            radius = float(self.params["radius"])
            height = float(self.params.get("height", 1.0))
            for c in center:
                if c - radius < 0 or c + radius > domain.L:
                    raise MeasureError("bump density support must stay inside the box")
            return height * _RADIAL_TOTAL[domain.d] * radius ** domain.d
        raise MeasureError(f"unknown density preset {self.preset!r}")


@dataclass(frozen=True)
class MeasureSpec:
    atoms: tuple[Atom, ...] = ()
    density: DensitySpec | None = None
    initial_atoms: tuple[InitialAtom, ...] = ()

    def total_mass(self, domain: SpaceTimeDomain, include_initial: bool = False) -> float:
        total = math.fsum(a.mass for a in self.atoms)
        if self.density is not None:
            total += self.density.space_integral(domain) * domain.T
        if include_initial:
            total += math.fsum(a.mass for a in self.initial_atoms)
        return total


@dataclass(frozen=True)
class TimeBump:
    """Atom time profile clipped to (0, T), normalized to unit mass there."""

    center: float
    delta: float
    T: float

    def _raw(self, t: float) -> float:
        return _bump_antideriv((t - self.center) / self.delta)

    @property
    def retained_fraction(self) -> float:
        return (self._raw(self.T) - self._raw(0.0)) / _BUMP_TOTAL_1D

    def mass_in(self, t0: float, t1: float) -> float:
        """Fraction of the atom's mass arriving in [t0, t1] (within (0, T))."""
        t0, t1 = max(t0, 0.0), min(t1, self.T)
        if t1 <= t0:
            return 0.0
        lo, hi = self._raw(0.0), self._raw(self.T)
        return (self._raw(t1) - self._raw(t0)) / (hi - lo)

    def rate(self, t: float) -> float:
        if t < 0.0 or t > self.T:
            return 0.0
        s = (t - self.center) / self.delta
        norm = (self._raw(self.T) - self._raw(0.0)) * self.delta
        return float(_bump(np.asarray(s))) / norm


def _atom_space_weights(
    domain: SpaceTimeDomain, x: tuple[float, ...], delta: float, what: str
) -> np.ndarray:
    """Cell weights of the radial bump at x, discretely normalized to unit
    discrete integral; rejects atoms losing more than half their mass to
    boundary clipping."""
    if len(x) != domain.d:
        raise MeasureError(f"{what} location has {len(x)} coordinates, domain is {domain.d}-d")
    for c in x:
        if not 0.0 < c < domain.L:
            raise MeasureError(f"{what} must sit strictly inside the box")
    r2 = np.zeros(domain.shape)
    for ax, c in zip(domain.cell_centers(), x):
        r2 += (ax - c) ** 2
    w = _bump(np.sqrt(r2) / delta)
    sampled = domain.cell_volume * math.fsum(w.ravel().tolist())
    full = _RADIAL_TOTAL[domain.d] * delta ** domain.d
    if sampled < 0.5 * full:
        raise MeasureError(
            f"{what} at {x} would lose {(1 - sampled / full) * 100:.0f}% of its "
            f"mollified mass to clipping at level delta = {delta:g}"
        )
    return w / sampled


@dataclass
class MollifiedForcing:
    """Level-n bounded approximation of a MeasureSpec on a fixed grid."""

    domain: SpaceTimeDomain
    spec: MeasureSpec
    n: int
    delta: float
    atom_weights: list[np.ndarray] = field(default_factory=list)
    atom_bumps: list[TimeBump] = field(default_factory=list)
    density_rate: np.ndarray | None = None
    initial_weights: list[np.ndarray] = field(default_factory=list)

    def window_avg(self, t0: float, t1: float) -> np.ndarray:
        """Forcing density averaged over [t0, t1]: injecting dt * window_avg
        adds the exact mollified mass of that window."""
        if not t1 > t0:
            raise MeasureError("window must have positive length")
        out = np.zeros(self.domain.shape)
        for atom, w, bump in zip(self.spec.atoms, self.atom_weights, self.atom_bumps):
            frac = bump.mass_in(t0, t1)
            if frac > 0.0:
                out += (atom.mass * frac / (t1 - t0)) * w
        if self.density_rate is not None:
            overlap = min(t1, self.domain.T) - max(t0, 0.0)
            if overlap > 0.0:
                out += (overlap / (t1 - t0)) * self.density_rate
        return out

    def field_at(self, t: float) -> np.ndarray:
        out = np.zeros(self.domain.shape)
        for atom, w, bump in zip(self.spec.atoms, self.atom_weights, self.atom_bumps):
            out += atom.mass * bump.rate(t) * w
        if self.density_rate is not None and 0.0 <= t <= self.domain.T:
            out += self.density_rate
        return out

    def as_scalar_field(self, times: np.ndarray) -> ScalarField:
        times = np.asarray(times, dtype=float)
        vals = np.stack([self.field_at(float(t)) for t in times])
        return ScalarField(self.domain, times, vals, density=True)

    def initial_state(self) -> np.ndarray:
        """t = 0 state from the initial atoms, mollified in space only."""
        out = np.zeros(self.domain.shape)
        for atom, w in zip(self.spec.initial_atoms, self.initial_weights):
            out += atom.mass * w
        return out

    def total_mass(self) -> float:
        """Discrete space-time mass of the forcing part (excludes mu_0)."""
        parts = [
            atom.mass * integrate(self.domain, w) * bump.mass_in(0.0, self.domain.T)
            for atom, w, bump in zip(self.spec.atoms, self.atom_weights, self.atom_bumps)
        ]
        if self.density_rate is not None:
            parts.append(integrate(self.domain, self.density_rate) * self.domain.T)
        return math.fsum(parts)

    def cylinder_mass(self, box_lo, box_hi, t0: float, t1: float) -> float:
        """Integral of the mollified forcing over (box x [t0, t1]) cut to the
        space-time box, treating each slice as piecewise constant on cells."""
        dom = self.domain
        box_lo = tuple(float(v) for v in box_lo)
        box_hi = tuple(float(v) for v in box_hi)
        if len(box_lo) != dom.d or len(box_hi) != dom.d:
            raise MeasureError("cylinder box must match the spatial dimension")

        frac = np.ones(dom.shape)
        centers1d = dom.axis_centers()
        for axis in range(dom.d):
            lo_edges = centers1d - 0.5 * dom.h
            hi_edges = centers1d + 0.5 * dom.h
            overlap = np.clip(
                np.minimum(hi_edges, box_hi[axis]) - np.maximum(lo_edges, box_lo[axis]),
                0.0,
                dom.h,
            ) / dom.h
            reshape = [1] * dom.d
            reshape[axis] = dom.N
            frac = frac * overlap.reshape(reshape)

        total = 0.0
        for atom, w, bump in zip(self.spec.atoms, self.atom_weights, self.atom_bumps):
            tfrac = bump.mass_in(t0, t1)
            if tfrac > 0.0:
                total += atom.mass * tfrac * dom.cell_volume * float((w * frac).sum())
        if self.density_rate is not None:
            overlap_t = min(t1, dom.T) - max(t0, 0.0)
            if overlap_t > 0.0:
                total += overlap_t * dom.cell_volume * float((self.density_rate * frac).sum())
        return total

    def sup_bound(self) -> float:
        """Upper bound for the forcing density (finite by construction)."""
        peak = 0.0
        for atom, w, bump in zip(self.spec.atoms, self.atom_weights, self.atom_bumps):
            peak += atom.mass * float(w.max()) * bump.rate(bump.center)
        if self.density_rate is not None:
            peak += float(self.density_rate.max())
        return peak


def mollify(spec: MeasureSpec, n: int, domain: SpaceTimeDomain) -> MollifiedForcing:
    """Level-n approximation: radius max(2h, L/n) polynomial bumps around the
    atoms (space and time; initial atoms space only), sampled density,
    everything renormalized so discrete masses match the spec exactly."""
    if n < 1:
        raise MeasureError(f"approximation level must be >= 1, got {n}")
    delta = max(2.0 * domain.h, domain.L / n)
    out = MollifiedForcing(domain=domain, spec=spec, n=n, delta=delta)

    for atom in spec.atoms:
        if not 0.0 < atom.t < domain.T:
            raise MeasureError("atom times must lie strictly inside (0, T)")
        out.atom_weights.append(_atom_space_weights(domain, atom.x, delta, "atom"))
        bump = TimeBump(atom.t, delta, domain.T)
        if bump.retained_fraction < 0.5:
            raise MeasureError(
                f"atom at t = {atom.t:g} would lose more than half of its "
                f"mollified mass to time clipping at delta = {delta:g}"
            )
        out.atom_bumps.append(bump)

    for atom in spec.initial_atoms:
        out.initial_weights.append(_atom_space_weights(domain, atom.x, delta, "initial atom"))

    if spec.density is not None:
        sampled = spec.density.space_values(domain)
        target = spec.density.space_integral(domain)
        got = integrate(domain, sampled)
        if got <= 0.0:
            raise MeasureError("density preset sampled to zero on this grid")
        out.density_rate = sampled * (target / got)

    return out


def weak_pairing(forcing: MollifiedForcing, phi, gauss_points: int = 24) -> float:
    """Integral of phi against the mollified forcing (space-time part only);
    phi(coords_tuple, t) must broadcast over cell-center arrays."""
    dom = forcing.domain
    centers = dom.cell_centers()
    nodes, weights = np.polynomial.legendre.leggauss(gauss_points)
    total = 0.0
    for atom, w, bump in zip(forcing.spec.atoms, forcing.atom_weights, forcing.atom_bumps):
        t0, t1 = max(0.0, bump.center - bump.delta), min(dom.T, bump.center + bump.delta)
        ts = 0.5 * (t1 - t0) * nodes + 0.5 * (t1 + t0)
        ws = 0.5 * (t1 - t0) * weights
        for t, wt in zip(ts, ws):
            slab = dom.cell_volume * float((w * phi(centers, float(t))).sum())
            total += atom.mass * bump.rate(float(t)) * slab * wt
    if forcing.density_rate is not None:
        ts = 0.5 * dom.T * nodes + 0.5 * dom.T
        ws = 0.5 * dom.T * weights
        for t, wt in zip(ts, ws):
            total += wt * dom.cell_volume * float(
                (forcing.density_rate * phi(centers, float(t))).sum()
            )
    return total


def exact_pairing(
    spec: MeasureSpec, domain: SpaceTimeDomain, phi, refine: int = 4, gauss_points: int = 24
) -> float:
    """Reference value of the pairing against the exact measure: atoms are
    point evaluations; the density integral uses a refine-times finer grid."""
    total = 0.0
    for atom in spec.atoms:
        x = tuple(np.asarray([c]) for c in atom.x)
        total += atom.mass * float(np.asarray(phi(x, atom.t)).ravel()[0])
    if spec.density is not None:
        fine = SpaceTimeDomain(domain.d, domain.L, domain.T, domain.N * refine, domain.boundary)
        vals = spec.density.space_values(fine)
        vals = vals * (spec.density.space_integral(domain) / integrate(fine, vals))
        centers = fine.cell_centers()
        nodes, weights = np.polynomial.legendre.leggauss(gauss_points)
        ts = 0.5 * domain.T * nodes + 0.5 * domain.T
        ws = 0.5 * domain.T * weights
        for t, wt in zip(ts, ws):
            total += wt * fine.cell_volume * float((vals * phi(centers, float(t))).sum())
    return total
