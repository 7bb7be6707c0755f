"""Finite-volume laboratory for nonlinear drift-diffusion equations with
measure forcing: conservative solvers for all diffusion regimes, scaling
classification of drift fields, and numerical verification of the a priori
inequalities the solutions satisfy, including the incompressible-fluid
coupling."""

from .classify import (
    Admissibility,
    ClassVerdict,
    DiffusionParams,
    Position,
    classify,
    compactness_admissible,
    scaling_sum,
    theorem_admissible,
)
from .drift import DriftSpec
from .estimates import EstimateReport
from .grid import Boundary, FaceVectorField, ScalarField, SpaceTimeDomain
from .measure import Atom, DensitySpec, InitialAtom, MeasureSpec, mollify
from .norms import ExponentPair, GradientFunctionalParams, mixed_norm, sup_l1
from .solver import SolverConfig, Trajectory, solve, steklov

__all__ = [
    "Admissibility",
    "Atom",
    "Boundary",
    "ClassVerdict",
    "DensitySpec",
    "DiffusionParams",
    "DriftSpec",
    "EstimateReport",
    "ExponentPair",
    "FaceVectorField",
    "GradientFunctionalParams",
    "InitialAtom",
    "MeasureSpec",
    "Position",
    "ScalarField",
    "SolverConfig",
    "SpaceTimeDomain",
    "Trajectory",
    "classify",
    "compactness_admissible",
    "mixed_norm",
    "mollify",
    "scaling_sum",
    "solve",
    "steklov",
    "sup_l1",
    "theorem_admissible",
]
