"""Membership of (m, d, q1, q2) in the drift scaling classes and in the
admissibility regions of the existence theorems, plus the L1-scaling
transforms of density and drift fields.

All decisions reduce to comparing

    s = d/q1 + (2 + d(m-1))/q2        (1/inf = 0)

against the level 1 + d(m-1) (plain family, valid for m > 1 - 1/d) or
2 + d(m-1) (divergence-free sigma family, valid for m > (1 - 2/d)_+).
Strict inequalities in the theorem conditions are evaluated strictly; a
near-boundary flag (relative 1e-9) is reported alongside so callers can
see knife-edge cases.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .norms import ExponentPair

EQ_RTOL = 1e-12
BOUNDARY_RTOL = 1e-9


class ClassifyError(ValueError):
    pass


class Position(enum.Enum):
    ON_LINE = "on_line"
    SUBCLASS = "subclass"
    SUPERCRITICAL = "supercritical"
    NOT_APPLICABLE = "not_applicable"


class Admissibility(enum.Enum):
    PME = "pme"
    FDE = "fde"
    DIVFREE_PME = "divfree_pme"
    DIVFREE_FDE = "divfree_fde"
    COMPACTNESS = "compactness"


@dataclass(frozen=True)
class DiffusionParams:
    m: float
    d: int

    def __post_init__(self):
        if not self.m > 0:
            raise ClassifyError(f"diffusion exponent must be positive, got {self.m}")
        if self.d < 2:
            raise ClassifyError(f"dimension must be at least 2, got {self.d}")

    @property
    def plain_level(self) -> float:
        return 1.0 + self.d * (self.m - 1.0)

    @property
    def sigma_level(self) -> float:
        return 2.0 + self.d * (self.m - 1.0)

    @property
    def plain_valid(self) -> bool:
        return self.m > 1.0 - 1.0 / self.d

    @property
    def sigma_valid(self) -> bool:
        return self.sigma_level > 0.0


@dataclass(frozen=True)
class ClassVerdict:
    scaling_sum: float
    plain: Position
    sigma: Position
    theorems: frozenset[Admissibility]
    near_boundary: bool

    def to_dict(self) -> dict:
        return {
            "scaling_sum": self.scaling_sum,
            "plain": self.plain.value,
            "sigma": self.sigma.value,
            "theorems": sorted(t.value for t in self.theorems),
            "near_boundary": self.near_boundary,
        }


def _inv(q: float) -> float:
    return 0.0 if math.isinf(q) else 1.0 / q


def _sum(p: DiffusionParams, e: ExponentPair) -> float:
    return p.d * _inv(e.q1) + p.sigma_level * _inv(e.q2)


def _position(s: float, level: float) -> Position:
    if abs(s - level) <= EQ_RTOL * (1.0 + abs(s)):
        return Position.ON_LINE
    return Position.SUBCLASS if s < level else Position.SUPERCRITICAL


class _BoundaryTracker:
    """Strict comparisons that remember whether any call was a near-tie."""

    def __init__(self):
        self.near = False

    def _mark(self, a: float, b: float):
        if math.isfinite(a) and math.isfinite(b):
            if abs(a - b) <= BOUNDARY_RTOL * max(1.0, abs(a), abs(b)):
                self.near = True

    def gt(self, a: float, b: float) -> bool:
        self._mark(a, b)
        return a > b

    def lt(self, a: float, b: float) -> bool:
        self._mark(a, b)
        return a < b

    def ge(self, a: float, b: float) -> bool:
        self._mark(a, b)
        return a >= b

    def le(self, a: float, b: float) -> bool:
        self._mark(a, b)
        return a <= b


def _close(a: float, b: float) -> bool:
    if math.isinf(a) or math.isinf(b):
        return a == b
    return abs(a - b) <= EQ_RTOL * max(1.0, abs(a), abs(b))


def scaling_sum(p: DiffusionParams, e: ExponentPair) -> float:
    """d/q1 + (2 + d(m-1))/q2, the quantity every class test compares."""
    if not p.plain_valid:
        raise ClassifyError(
            f"plain scaling classes need m > 1 - 1/d = {1 - 1/p.d:g}, got m = {p.m}"
        )
    return _sum(p, e)


def classify(p: DiffusionParams, e: ExponentPair, divergence_free: bool = False) -> ClassVerdict:
    """Full verdict: plain and sigma positions plus theorem admissibility."""
    s = scaling_sum(p, e)
    plain = _position(s, p.plain_level)
    if divergence_free and p.sigma_valid:
        sigma = _position(s, p.sigma_level)
    else:
        sigma = Position.NOT_APPLICABLE
    theorems, near = theorem_admissible(p, e, divergence_free)
    return ClassVerdict(s, plain, sigma, theorems, near)


def theorem_admissible(
    p: DiffusionParams, e: ExponentPair, divergence_free: bool = False
) -> tuple[frozenset[Admissibility], bool]:
    """Which existence/compactness conditions the pair satisfies.

    Returns the satisfied labels and a flag marking results decided within
    relative 1e-9 of a region boundary.
    """
    tr = _BoundaryTracker()
    labels = set()
    m, d = p.m, p.d
    q1, q2 = e.q1, e.q2
    s = _sum(p, e)

    if p.plain_valid:
        plain = _position(s, p.plain_level)

        if 1.0 <= m <= 2.0:
            # sub-line region with q1 above md/((2-m)+d(m-1)) and q2 >= 2,
            # or exactly the on-line pair (2/(m-1), 2)
            q1_floor = m * d / ((2.0 - m) + d * (m - 1.0))
            sub_ok = (
                plain is Position.SUBCLASS
                and tr.gt(q1, q1_floor)
                and tr.ge(q2, 2.0)
            )
            pair_q1 = math.inf if m == 1.0 else 2.0 / (m - 1.0)
            line_ok = (
                plain is Position.ON_LINE
                and _close(_inv(q1), _inv(pair_q1))
                and _close(q2, 2.0)
            )
            if sub_ok or line_ok:
                labels.add(Admissibility.PME)

        if 1.0 - 1.0 / d < m < 1.0:
            lvl1 = 1.0 + d * (m - 1.0)
            if (
                plain is Position.SUBCLASS
                and tr.gt(q1, d / lvl1)
                and tr.gt(q2, p.sigma_level / lvl1)
            ):
                labels.add(Admissibility.FDE)

    if divergence_free and p.sigma_valid:
        sigma = _position(s, p.sigma_level)
        pair_ok = math.isinf(q1) and _close(q2, 1.0)

        if m >= 1.0:
            if (
                sigma is Position.SUBCLASS
                and tr.gt(q1, m * d / p.sigma_level)
                and tr.gt(q2, 1.0)
            ) or (sigma is Position.ON_LINE and pair_ok):
                labels.add(Admissibility.DIVFREE_PME)
        else:
            # sigma_valid already enforces m > (1 - 2/d)_+
            if (
                sigma is Position.SUBCLASS
                and tr.gt(q1, d / p.sigma_level)
                and tr.gt(q2, 1.0)
            ) or (sigma is Position.ON_LINE and pair_ok):
                labels.add(Admissibility.DIVFREE_FDE)

    if compactness_admissible(p, e, _tracker=tr):
        labels.add(Admissibility.COMPACTNESS)

    return frozenset(labels), tr.near


def compactness_admissible(p: DiffusionParams, e: ExponentPair, _tracker=None) -> bool:
    """Exponent conditions under which the time derivative stays integrable
    enough for the compactness step (the sigma-level strict inequality with
    the m-dependent box, or the (inf, 1) endpoint for m >= 1)."""
    tr = _tracker if _tracker is not None else _BoundaryTracker()
    m, d = p.m, p.d
    q1, q2 = e.q1, e.q2

    if m >= 1.0 and math.isinf(q1) and _close(q2, 1.0):
        return True
    if not p.sigma_valid:
        return False

    s = _sum(p, e)
    if not tr.lt(s, p.sigma_level):
        return False
    i1, i2 = _inv(q1), _inv(q2)
    if m >= 1.0:
        return tr.lt(i1, p.sigma_level / (m * d)) and tr.lt((m - 1.0) / m, i2) and tr.le(i2, 1.0)
    sigma_floor = (1.0 - 2.0 / d) if d > 2 else 0.0
    if m <= sigma_floor:
        return False
    return tr.le(i1, p.sigma_level / d) and tr.le(i2, 1.0)


def exponents_from_inverse(inv_q1: float, inv_q2: float) -> ExponentPair:
    """Reciprocal parametrization used by the region figures; 0 maps to inf."""
    if inv_q1 < 0 or inv_q2 < 0:
        raise ClassifyError("inverse exponents must be nonnegative")
    q1 = math.inf if inv_q1 == 0.0 else 1.0 / inv_q1
    q2 = math.inf if inv_q2 == 0.0 else 1.0 / inv_q2
    return ExponentPair(q1, q2)


def region_sweep(
    p: DiffusionParams,
    divergence_free: bool = False,
    lattice: int = 61,
    extent: float = 1.5,
):
    """Verdicts on a lattice over (1/q1, 1/q2) in [0, extent]^2, one row per
    point, for visual comparison with the admissibility-region figures."""
    rows = []
    for i in range(lattice):
        for j in range(lattice):
            inv1 = extent * i / (lattice - 1)
            inv2 = extent * j / (lattice - 1)
            e = exponents_from_inverse(inv1, inv2)
            v = classify(p, e, divergence_free)
            rows.append(
                {
                    "inv_q1": inv1,
                    "inv_q2": inv2,
                    "scaling_sum": v.scaling_sum,
                    "plain": v.plain.value,
                    "sigma": v.sigma.value,
                    "theorems": "|".join(sorted(t.value for t in v.theorems)),
                    "near_boundary": int(v.near_boundary),
                }
            )
    return rows


def embedding_factor(
    volume: float, T: float, tight: ExponentPair, loose: ExponentPair
) -> float:
    """|Omega|^(1/q1 - 1/r1) * T^(1/q2 - 1/r2): the bounded-domain factor that
    maps a norm at the larger exponents `loose` to a bound at `tight`."""
    i1, i2 = tight.inv()
    j1, j2 = loose.inv()
    if i1 < j1 or i2 < j2:
        raise ClassifyError("embedding only lowers exponents (raises 1/q)")
    return volume ** (i1 - j1) * T ** (i2 - j2)


def rescale_density(fn, r: float, p: DiffusionParams):
    """u_r(x, t) = r^d u(rx, r^(2+d(m-1)) t); preserves total mass."""
    if not r > 0:
        raise ClassifyError("scaling ratio must be positive")
    a, b = float(r ** p.d), float(r ** p.sigma_level)

    def scaled(x, t):
        return a * fn(tuple(r * xi for xi in x), b * t)

    return scaled


def rescale_drift(fn, r: float, p: DiffusionParams):
    """V_r(x, t) = r^(1+d(m-1)) V(rx, r^(2+d(m-1)) t)."""
    if not r > 0:
        raise ClassifyError("scaling ratio must be positive")
    a, b = float(r ** p.plain_level), float(r ** p.sigma_level)

    def scaled(x, t):
        return tuple(a * c for c in fn(tuple(r * xi for xi in x), b * t))

    return scaled
