"""Drift fields: named analytic presets sampled at face centers per time
step, or static face-sampled arrays loaded from file.

Presets whose discrete divergence vanishes identically (zero, constant,
shear, vortex) carry the divergence_free flag; the solver re-checks the
flag against the sampled field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import FaceVectorField, SpaceTimeDomain
from .norms import ExponentPair


class DriftError(ValueError):
    pass


@dataclass(frozen=True)
class DriftSpec:
    """A named drift preset plus its declared mixed-norm exponents.

    The exponents are a declaration of which (q1, q2) the drift should be
    measured in; every bounded preset has finite norm for any pair.
    """

    preset: str
    params: dict = field(default_factory=dict)
    divergence_free: bool = False
    exponents: ExponentPair | None = None

    def __post_init__(self):
        if self.preset not in _PRESETS and self.preset not in ("file", "random"):
            raise DriftError(f"unknown drift preset {self.preset!r}")

    def components(self, d: int):
        """Callable (coords_tuple, t) -> tuple of component arrays."""
        if self.preset in ("file", "random"):
            raise DriftError(f"{self.preset} drifts are sampled, not analytic")
        return _PRESETS[self.preset](self.params, d)

    def sample_faces(self, domain: SpaceTimeDomain, t: float) -> tuple[np.ndarray, ...]:
        if self.preset == "file":
            return _load_file_faces(domain, self.params["path"])
        if self.preset == "random":
            # static white-noise field; seed required for reproducibility
            rng = np.random.default_rng(int(self.params["seed"]))
            amp = float(self.params.get("amplitude", 1.0))
            return tuple(
                amp * rng.standard_normal(domain.face_shape(axis))
                for axis in range(domain.d)
            )
        fn = self.components(domain.d)
        out = []
        for axis in range(domain.d):
            coords = domain.face_centers(axis)
            comps = fn(coords, t)
            out.append(np.broadcast_to(np.asarray(comps[axis], dtype=float),
                                       domain.face_shape(axis)).copy())
        return tuple(out)

    def as_face_field(self, domain: SpaceTimeDomain, t: float) -> FaceVectorField:
        return FaceVectorField(domain, self.sample_faces(domain, t), self.divergence_free)

    def is_zero(self) -> bool:
        return self.preset == "zero"


def _load_file_faces(domain: SpaceTimeDomain, path) -> tuple[np.ndarray, ...]:
    data = np.load(path)
    out = []
    for axis in range(domain.d):
        key = f"v{axis}"
        if key not in data:
            raise DriftError(f"face-sampled drift file lacks array {key!r}")
        arr = np.asarray(data[key], dtype=float)
        if arr.shape != domain.face_shape(axis):
            raise DriftError(
                f"drift file array {key} has shape {arr.shape}, "
                f"expected {domain.face_shape(axis)}"
            )
        out.append(arr)
    return tuple(out)


def _zero(params, d):
    def fn(coords, t):
        return tuple(np.zeros_like(coords[0]) for _ in range(d))
    return fn


def _constant(params, d):
    vec = [float(params.get(k, 0.0)) for k in ("vx", "vy", "vz")[:d]]

    def fn(coords, t):
        return tuple(np.full_like(coords[0], v) for v in vec)
    return fn


def _shear(params, d):
    rate = float(params["rate"])
    center = float(params.get("center", 0.0))

    def fn(coords, t):
        vx = rate * (coords[1] - center)
        rest = tuple(np.zeros_like(coords[0]) for _ in range(d - 1))
        return (vx,) + rest
    return fn


def _vortex(params, d):
    if d != 2:
        raise DriftError("vortex preset is two-dimensional")
    omega = float(params["omega"])
    cx, cy = (float(v) for v in params["center"])

    def fn(coords, t):
        return (-omega * (coords[1] - cy), omega * (coords[0] - cx))
    return fn


def _radial(params, d):
    rate = float(params["rate"])
    center = tuple(float(v) for v in params["center"])
    if len(center) != d:
        raise DriftError("radial center must match the dimension")

    def fn(coords, t):
        return tuple(rate * (coords[i] - center[i]) for i in range(d))
    return fn


def _singular(params, d):
    """Radial direction with |x - c|^(-gamma) magnitude, core-regularized."""
    strength = float(params["strength"])
    gamma = float(params["gamma"])
    center = tuple(float(v) for v in params["center"])
    core = float(params.get("core", 1e-6))
    if len(center) != d:
        raise DriftError("singular center must match the dimension")

    def fn(coords, t):
        r2 = sum((coords[i] - center[i]) ** 2 for i in range(d))
        r = np.maximum(np.sqrt(r2), core)
        scale = strength * r ** (-(gamma + 1.0))
        return tuple(scale * (coords[i] - center[i]) for i in range(d))
    return fn


def _gaussian_pulse(params, d):
    """Time-decaying Gaussian bump along a fixed direction (not div-free)."""
    amplitude = float(params["amplitude"])
    width = float(params["width"])
    tau = float(params["tau"])
    center = tuple(float(v) for v in params.get("center", (0.0,) * d))
    direction = tuple(float(v) for v in params.get("direction", (1.0,) + (0.0,) * (d - 1)))
    norm = math.sqrt(sum(c * c for c in direction))
    direction = tuple(c / norm for c in direction)

    def fn(coords, t):
        r2 = sum((coords[i] - center[i]) ** 2 for i in range(d))
        mag = amplitude * np.exp(-r2 / (width * width)) * math.exp(-t / tau)
        return tuple(mag * direction[i] for i in range(d))
    return fn


_PRESETS = {
    "zero": _zero,
    "constant": _constant,
    "shear": _shear,
    "vortex": _vortex,
    "radial": _radial,
    "singular": _singular,
    "gaussian_pulse": _gaussian_pulse,
}

RANDOM_PRESET = "random"

DIVFREE_PRESETS = frozenset({"zero", "constant", "shear", "vortex"})


def sampled_mixed_norm(
    fn,
    box_lo,
    box_hi,
    t_max: float,
    n_space: int,
    n_time: int,
    e: ExponentPair,
    d: int = 2,
) -> float:
    """Mixed norm of |V| for an analytic vector field sampled on an arbitrary
    box (midpoint in space, left-endpoint in time).  Used for full-space
    scaling checks on truncated domains, independent of SpaceTimeDomain."""
    if e.q1 < 1 or e.q2 < 1:
        raise DriftError("sampled_mixed_norm requires exponents >= 1")
    box_lo = tuple(float(v) for v in box_lo)
    box_hi = tuple(float(v) for v in box_hi)
    hs = [(hi - lo) / n_space for lo, hi in zip(box_lo, box_hi)]
    axes = [lo + (np.arange(n_space) + 0.5) * h for lo, h, hi in zip(box_lo, hs, box_hi)]
    coords = np.meshgrid(*axes, indexing="ij")
    cell = float(np.prod(hs))
    dt = t_max / n_time
    vals = np.empty(n_time)
    for k in range(n_time):
        comps = fn(tuple(coords), k * dt)
        mag = np.sqrt(sum(np.asarray(c, dtype=float) ** 2 for c in comps))
        if math.isinf(e.q1):
            vals[k] = mag.max()
        else:
            vals[k] = (cell * (mag ** e.q1).sum()) ** (1.0 / e.q1)
    if math.isinf(e.q2):
        return float(vals.max())
    return float((dt * vals ** e.q2).sum() ** (1.0 / e.q2))
