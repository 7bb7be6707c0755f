"""Uniform space-time box discretization and the discrete calculus on it.

Cell-centered scalars, face-normal vector components (marker-and-cell
layout), and the gradient/divergence/integration operators shared by the
solver, the norm evaluators, and the fluid module.  All operators are pure
functions of immutable arrays; ghost values are fixed per boundary type
(zero for homogeneous Dirichlet, mirror for no-flux) so every module sees
one boundary semantics.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field

import numpy as np


class Boundary(enum.Enum):
    DIRICHLET_ZERO = "dirichlet_zero"
    NO_FLUX = "no_flux"


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class SpaceTimeDomain:
    """Box [0, L]^d x (0, T) split into N uniform cells per axis.

    Time steps are not fixed here; the solver chooses them adaptively and
    stores the strictly increasing sequence alongside the field data.
    """

    d: int
    L: float
    T: float
    N: int
    boundary: Boundary = Boundary.DIRICHLET_ZERO

    def __post_init__(self):
        if self.d not in (2, 3):
            raise GridError(f"spatial dimension must be 2 or 3, got {self.d}")
        if not (self.L > 0 and self.T > 0):
            raise GridError("box side and final time must be positive")
        if self.N < 4:
            raise GridError(f"need at least 4 cells per axis, got {self.N}")

    @property
    def h(self) -> float:
        return self.L / self.N

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def cell_volume(self) -> float:
        return self.h ** self.d

    @property
    def space_time_volume(self) -> float:
        return self.L ** self.d * self.T

    def axis_centers(self) -> np.ndarray:
        return (np.arange(self.N) + 0.5) * self.h

    def cell_centers(self) -> tuple[np.ndarray, ...]:
        """Meshgrid (ij indexing) of cell-center coordinates."""
        ax = self.axis_centers()
        return tuple(np.meshgrid(*([ax] * self.d), indexing="ij"))

    def face_centers(self, axis: int) -> tuple[np.ndarray, ...]:
        """Coordinates of face centers for the faces normal to `axis`."""
        coords = []
        for a in range(self.d):
            if a == axis:
                coords.append(np.arange(self.N + 1) * self.h)
            else:
                coords.append(self.axis_centers())
        return tuple(np.meshgrid(*coords, indexing="ij"))

    def face_shape(self, axis: int) -> tuple[int, ...]:
        s = [self.N] * self.d
        s[axis] = self.N + 1
        return tuple(s)


@dataclass
class ScalarField:
    """Cell-centered space-time sample: values[k] is the slice at times[k]."""

    domain: SpaceTimeDomain
    times: np.ndarray
    values: np.ndarray
    density: bool = False

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.times.size,) + self.domain.shape:
            raise GridError(
                f"values shape {self.values.shape} does not match "
                f"{self.times.size} slices on grid {self.domain.shape}"
            )
        if self.times.size and np.any(np.diff(self.times) <= 0):
            raise GridError("slice times must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise GridError("field contains non-finite values")
        if self.density and self.values.size:
            floor = -1e-14 * max(float(self.values.max()), 1.0)
            if float(self.values.min()) < floor:
                raise GridError("density field has significantly negative values")

    @property
    def n_slices(self) -> int:
        return self.times.size

    def slice(self, k: int) -> np.ndarray:
        return self.values[k]


@dataclass
class FaceVectorField:
    """One time slice of face-normal components, one array per axis."""

    domain: SpaceTimeDomain
    components: tuple[np.ndarray, ...]
    divergence_free: bool = False

    def __post_init__(self):
        if len(self.components) != self.domain.d:
            raise GridError("need one face component array per axis")
        self.components = tuple(np.asarray(c, dtype=float) for c in self.components)
        for axis, c in enumerate(self.components):
            if c.shape != self.domain.face_shape(axis):
                raise GridError(
                    f"axis {axis} face array has shape {c.shape}, "
                    f"expected {self.domain.face_shape(axis)}"
                )
            if not np.all(np.isfinite(c)):
                raise GridError("face field contains non-finite values")
        if self.divergence_free:
            vmax = self.max_abs()
            if vmax > 0.0:
                div = divergence_cells(self.domain, self.components)
                if float(np.abs(div).max()) > 1e-10 * vmax:
                    raise GridError(
                        "field flagged divergence-free but discrete divergence "
                        f"reaches {float(np.abs(div).max()):.3e} (max |V| = {vmax:.3e})"
                    )

    def max_abs(self) -> float:
        return max(float(np.abs(c).max()) for c in self.components)


def _ghost_pad(domain: SpaceTimeDomain, cells: np.ndarray, axis: int) -> np.ndarray:
    """Append one ghost layer on each side of `axis` per the boundary rule."""
    if domain.boundary is Boundary.DIRICHLET_ZERO:
        pad = [(0, 0)] * domain.d
        pad[axis] = (1, 1)
        return np.pad(cells, pad, mode="constant")
    # mirror: ghost equals the adjacent interior cell
    pad = [(0, 0)] * domain.d
    pad[axis] = (1, 1)
    return np.pad(cells, pad, mode="edge")


def gradient_faces(domain: SpaceTimeDomain, cells: np.ndarray) -> tuple[np.ndarray, ...]:
    """Face-normal differences (f_right - f_left)/h, ghosts per boundary type."""
    cells = np.asarray(cells, dtype=float)
    if cells.shape != domain.shape:
        raise GridError(f"cell array shape {cells.shape} != {domain.shape}")
    out = []
    for axis in range(domain.d):
        padded = _ghost_pad(domain, cells, axis)
        out.append(np.diff(padded, axis=axis) / domain.h)
    return tuple(out)


def divergence_cells(domain: SpaceTimeDomain, faces: tuple[np.ndarray, ...]) -> np.ndarray:
    """Sum of outward face fluxes per cell divided by h (adjoint of the gradient)."""
    div = np.zeros(domain.shape)
    for axis, comp in enumerate(faces):
        comp = np.asarray(comp, dtype=float)
        if comp.shape != domain.face_shape(axis):
            raise GridError(
                f"axis {axis} face array has shape {comp.shape}, "
                f"expected {domain.face_shape(axis)}"
            )
        div += np.diff(comp, axis=axis) / domain.h
    return div


def integrate(domain: SpaceTimeDomain, cells: np.ndarray) -> float:
    """h^d * sum of cell values, compensated summation."""
    cells = np.asarray(cells, dtype=float)
    if cells.shape != domain.shape:
        raise GridError(f"cell array shape {cells.shape} != {domain.shape}")
    return domain.cell_volume * math.fsum(cells.ravel().tolist())


def cell_speed_squared(domain: SpaceTimeDomain, faces: tuple[np.ndarray, ...]) -> np.ndarray:
    """|vector|^2 per cell, each component as the mean of its two bounding faces."""
    out = np.zeros(domain.shape)
    for axis, comp in enumerate(faces):
        lo = [slice(None)] * domain.d
        hi = [slice(None)] * domain.d
        lo[axis] = slice(0, domain.N)
        hi[axis] = slice(1, domain.N + 1)
        avg = 0.5 * (comp[tuple(lo)] + comp[tuple(hi)])
        out += avg * avg
    return out


# --- snapshot serialization -------------------------------------------------
# CSV: one row per cell "i,j[,k],value"; binary: little-endian float64,
# row-major (C order), no header.


def write_field_csv(domain: SpaceTimeDomain, cells: np.ndarray, path) -> None:
    cells = np.asarray(cells, dtype=float)
    header = ["i", "j", "k"][: domain.d] + ["value"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for idx in np.ndindex(*domain.shape):
            writer.writerow(list(idx) + [repr(float(cells[idx]))])


def read_field_csv(domain: SpaceTimeDomain, path) -> np.ndarray:
    cells = np.zeros(domain.shape)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            idx = tuple(int(v) for v in row[: domain.d])
            cells[idx] = float(row[domain.d])
    return cells


def write_field_bin(cells: np.ndarray, path) -> None:
    arr = np.ascontiguousarray(np.asarray(cells, dtype="<f8"))
    with open(path, "wb") as fh:
        fh.write(arr.tobytes())


def read_field_bin(domain: SpaceTimeDomain, path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    arr = np.frombuffer(raw, dtype="<f8").astype(float)
    if arr.size != int(np.prod(domain.shape)):
        raise GridError(f"binary dump holds {arr.size} values, grid needs {np.prod(domain.shape)}")
    return arr.reshape(domain.shape)
