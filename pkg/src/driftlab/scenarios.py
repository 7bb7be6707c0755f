"""Scenario configuration, the standard verification suite, and the
orchestration that runs classify -> solve -> verify (-> couple) across a
refinement ladder.

Config format: TOML, schema = 1.  Lengths (L, atom coordinates, radii) are
in box units, times (T, atom times) in the same time unit as T, masses in
density * length^d units.  Exponents may use TOML's inf literal.  Every
randomized choice (only the "random" drift preset) takes an explicit seed.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .classify import DiffusionParams, classify
from .drift import DriftSpec
from .estimates import (
    EstimateReport,
    attach_refinement,
    verify_alpha_gradient,
    verify_interpolation,
    verify_mass,
    verify_parabolic_embedding,
    verify_theorem_estimate,
    verify_weighted_gradient,
)
from .fluid import PotentialSpec, coupled_solve, verify_coupled_energy
from .grid import Boundary, SpaceTimeDomain
from .measure import Atom, DensitySpec, InitialAtom, MeasureSpec
from .norms import ExponentPair
from .oracles import barenblatt, heat_kernel, l1_error
from .solver import SolverConfig, Trajectory, solve

SCHEMA = 1
WORKERS_ENV = "DRIFTLAB_WORKERS"


class ConfigError(ValueError):
    pass


_BOUNDARIES = {"dirichlet": Boundary.DIRICHLET_ZERO, "noflux": Boundary.NO_FLUX}


@dataclass
class Scenario:
    id: str
    d: int = 2
    L: float = 2.0
    T: float = 0.2
    N: int = 64
    boundary: Boundary = Boundary.DIRICHLET_ZERO
    m: float = 1.0
    epsilon: float = 0.0
    cfl_safety: float = 0.9
    mollification: int = 16
    ladder: tuple[int, ...] = (32, 64, 128)
    seed: int = 0
    measure: MeasureSpec = field(default_factory=MeasureSpec)
    drift: DriftSpec = field(default_factory=lambda: DriftSpec("zero", divergence_free=True))
    estimates: tuple[dict, ...] = ()
    couple: dict | None = None
    oracle: str = "none"

    def domain(self, n_cells: int | None = None) -> SpaceTimeDomain:
        return SpaceTimeDomain(self.d, self.L, self.T, n_cells or self.N, self.boundary)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            m=self.m,
            epsilon=self.epsilon,
            boundary=self.boundary,
            cfl_safety=self.cfl_safety,
            t_end=self.T,
        )


def _req(table: dict, key: str, scenario: str):
    if key not in table:
        raise ConfigError(f"scenario {scenario!r}: missing required key {key!r}")
    return table[key]


def _parse_measure(table: dict, d: int, scenario: str) -> MeasureSpec:
    atoms = []
    for row in table.get("atoms", []):
        if len(row) != d + 2:
            raise ConfigError(
                f"scenario {scenario!r}: atom rows need {d + 2} entries "
                f"(coordinates, time, mass), got {row}"
            )
        atoms.append(Atom(tuple(float(v) for v in row[:d]), float(row[d]), float(row[d + 1])))
    initial = []
    for row in table.get("initial_atoms", []):
        if len(row) != d + 1:
            raise ConfigError(
                f"scenario {scenario!r}: initial atom rows need {d + 1} entries, got {row}"
            )
        initial.append(InitialAtom(tuple(float(v) for v in row[:d]), float(row[d])))
    density = None
    if "density" in table:
        dt = dict(table["density"])
        preset = dt.pop("preset", None)
        if preset is None:
            raise ConfigError(f"scenario {scenario!r}: density table needs a preset key")
        density = DensitySpec(preset, dt)
    return MeasureSpec(tuple(atoms), density, tuple(initial))


def _parse_drift(table: dict | None, scenario: str) -> DriftSpec:
    if table is None:
        return DriftSpec("zero", divergence_free=True)
    t = dict(table)
    preset = t.pop("preset", None)
    if preset is None:
        raise ConfigError(f"scenario {scenario!r}: drift table needs a preset key")
    divfree = bool(t.pop("divergence_free", False))
    q1 = t.pop("q1", None)
    q2 = t.pop("q2", None)
    exponents = None
    if q1 is not None or q2 is not None:
        if q1 is None or q2 is None:
            raise ConfigError(f"scenario {scenario!r}: declare both q1 and q2 or neither")
        exponents = ExponentPair(float(q1), float(q2))
    return DriftSpec(preset, t, divergence_free=divfree, exponents=exponents)


def parse_scenario(table: dict) -> Scenario:
    sid = _req(table, "id", "<unnamed>")
    d = int(table.get("d", 2))
    boundary_key = table.get("boundary", "dirichlet")
    if boundary_key not in _BOUNDARIES:
        raise ConfigError(
            f"scenario {sid!r}: boundary must be one of {sorted(_BOUNDARIES)}, "
            f"got {boundary_key!r}"
        )
    scn = Scenario(
        id=str(sid),
        d=d,
        L=float(_req(table, "L", sid)),
        T=float(_req(table, "T", sid)),
        N=int(table.get("N", 64)),
        boundary=_BOUNDARIES[boundary_key],
        m=float(_req(table, "m", sid)),
        epsilon=float(table.get("epsilon", 0.0)),
        cfl_safety=float(table.get("cfl_safety", 0.9)),
        mollification=int(table.get("mollification", 16)),
        ladder=tuple(int(n) for n in table.get("ladder", [32, 64, 128])),
        seed=int(table.get("seed", 0)),
        measure=_parse_measure(table.get("measure", {}), d, sid),
        drift=_parse_drift(table.get("drift"), sid),
        estimates=tuple(dict(e) for e in table.get("estimate", [])),
        couple=dict(table["couple"]) if "couple" in table else None,
        oracle=str(table.get("oracle", "none")),
    )
    if scn.oracle not in ("none", "heat_kernel", "barenblatt"):
        raise ConfigError(f"scenario {sid!r}: unknown oracle {scn.oracle!r}")
    return scn


def parse_suite(text: str) -> list[Scenario]:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    if data.get("schema") != SCHEMA:
        raise ConfigError(f"config must declare schema = {SCHEMA}")
    scenarios = [parse_scenario(t) for t in data.get("scenario", [])]
    ids = [s.id for s in scenarios]
    if len(set(ids)) != len(ids):
        raise ConfigError("scenario ids must be unique in a suite")
    return scenarios


def load_suite(path) -> list[Scenario]:
    with open(path, "rb") as fh:
        text = fh.read().decode("utf-8")
    return parse_suite(text)


def run_estimate(traj: Trajectory, spec: dict) -> EstimateReport:
    kind = spec.get("id")
    if kind == "weighted_gradient":
        return verify_weighted_gradient(
            traj, q=float(spec["q"]), xi=float(spec["xi"]), A=float(spec["A"])
        )
    if kind == "alpha_gradient":
        return verify_alpha_gradient(traj, q=float(spec.get("q", 1.0)), alpha=float(spec["alpha"]))
    if kind == "theorem_gradient":
        return verify_theorem_estimate(traj, alpha=float(spec["alpha"]))
    if kind == "interpolation":
        return verify_interpolation(
            traj, alpha=float(spec["alpha"]), r1=float(spec["r1"]), r2=float(spec["r2"])
        )
    if kind == "parabolic_embedding":
        return verify_parabolic_embedding(traj.field(), p=float(spec["p"]), q=float(spec["q"]))
    raise ConfigError(f"unknown estimate id {kind!r}")


@dataclass
class ScenarioRun:
    scenario: Scenario
    n_cells: int
    trajectory: Trajectory
    reports: list[EstimateReport]
    oracle_l1: float | None
    runtime: float


def oracle_error(scn: Scenario, traj: Trajectory) -> float | None:
    if scn.oracle == "none":
        return None
    if len(scn.measure.initial_atoms) != 1:
        raise ConfigError(f"scenario {scn.id!r}: oracles need exactly one initial atom")
    atom = scn.measure.initial_atoms[0]
    dom = traj.domain
    coords = dom.cell_centers()
    t = float(traj.times[-1])
    if scn.oracle == "heat_kernel":
        exact = heat_kernel(coords, t, atom.x, atom.mass)
    else:
        exact = barenblatt(coords, t, scn.m, scn.d, atom.x, atom.mass)
    return l1_error(dom, traj.slices[-1], exact)


def run_scenario(scn: Scenario, n_cells: int | None = None) -> ScenarioRun:
    start = time.perf_counter()
    dom = scn.domain(n_cells)
    traj = solve(dom, scn.solver_config(), scn.measure, scn.drift, n=scn.mollification)
    reports = [verify_mass(traj)]
    reports += [run_estimate(traj, spec) for spec in scn.estimates]
    return ScenarioRun(
        scenario=scn,
        n_cells=dom.N,
        trajectory=traj,
        reports=reports,
        oracle_l1=oracle_error(scn, traj),
        runtime=time.perf_counter() - start,
    )


def classification_dict(scn: Scenario) -> dict | None:
    e = scn.drift.exponents
    if e is None:
        return None
    p = DiffusionParams(scn.m, scn.d)
    return classify(p, e, scn.drift.divergence_free).to_dict()


def merge_ladder(runs: list[ScenarioRun]) -> list[EstimateReport]:
    """Merge per-resolution reports: the mass bound must pass at every rung;
    the other estimates go through the refinement gate."""
    merged = []
    by_id: dict[str, list] = {}
    for run in runs:
        for rep in run.reports:
            by_id.setdefault(rep.estimate_id, []).append((run.n_cells, rep))
    for eid, series in by_id.items():
        if eid == "mass_bound":
            finest = max(series, key=lambda nr: nr[0])[1]
            rep = EstimateReport(
                eid, "literal", finest.lhs, finest.rhs, finest.ratio,
                all(r.passed for _, r in series),
                params=dict(finest.params),
                refinement=[(n, r.ratio) for n, r in sorted(series)],
            )
            merged.append(rep)
        else:
            merged.append(attach_refinement(series))
    return merged


def run_coupled_scenario(scn: Scenario, n_cells: int | None = None):
    if scn.couple is None:
        raise ConfigError(f"scenario {scn.id!r} has no couple table")
    c = scn.couple
    dom = scn.domain(n_cells)
    rho0 = MeasureSpec(
        initial_atoms=tuple(
            InitialAtom(tuple(float(v) for v in row[: scn.d]), float(row[scn.d]))
            for row in c.get("rho0_atoms", [])
        )
    )
    potential = PotentialSpec(
        c.get("potential", "constant"),
        {"g": float(c.get("g", 1.0))},
    )
    run = coupled_solve(
        dom,
        scn.solver_config(),
        rho0,
        scn.measure,
        potential,
        v0_preset=c.get("v0", "zero"),
        v0_params={
            "amplitude": float(c.get("v0_amplitude", 1.0)),
            "modes": int(c.get("v0_modes", 1)),
        },
        n=scn.mollification,
        fluid_cfl=float(c.get("fluid_cfl", 0.45)),
    )
    return run


def _scenario_bundle(scn: Scenario) -> dict:
    """Full ladder for one scenario; returns its bundle entry."""
    runs = [run_scenario(scn, N) for N in scn.ladder]
    merged = merge_ladder(runs)
    entry = {
        "id": scn.id,
        "ladder": list(scn.ladder),
        "classification": classification_dict(scn),
        "reports": [r.to_dict() for r in sorted(merged, key=lambda r: r.estimate_id)],
    }
    if scn.oracle != "none":
        entry["oracle_l1"] = [[run.n_cells, run.oracle_l1] for run in runs]
    if scn.couple is not None:
        crun = run_coupled_scenario(scn)
        rep = verify_coupled_energy(crun, alpha=float(scn.couple.get("alpha", 1.5)))
        entry["coupled"] = rep.to_dict()
    return entry


def run_suite(scenarios: list[Scenario], outdir=None, workers: int | None = None) -> dict:
    """Run every scenario across its ladder; returns the bundle dict.

    The bundle is byte-deterministic for a given suite: scenario entries are
    ordered by id and contain no timing data.
    """
    scenarios = sorted(scenarios, key=lambda s: s.id)
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "0")) or None
    entries = []
    if workers is not None and workers > 1 and len(scenarios) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(_scenario_bundle, scenarios))
    else:
        entries = [_scenario_bundle(s) for s in scenarios]
    entries.sort(key=lambda e: e["id"])
    all_literal = all(
        rep["passed"]
        for e in entries
        for rep in e["reports"]
        if rep["mode"] == "literal" and rep["applicable"]
    )
    coupled_ok = all(e["coupled"]["passed"] for e in entries if "coupled" in e)
    bundle = {
        "schema": SCHEMA,
        "scenarios": entries,
        "all_literal_passed": bool(all_literal and coupled_ok),
    }
    if outdir is not None:
        os.makedirs(outdir, exist_ok=True)
        with open(os.path.join(outdir, "bundle.json"), "w") as fh:
            json.dump(bundle, fh, sort_keys=True, indent=1)
            fh.write("\n")
    return bundle


def convergence_rows(scn: Scenario, ladder=None) -> list[dict]:
    """Per-resolution oracle errors, estimate ratios, and runtimes."""
    rows = []
    for N in ladder or scn.ladder:
        run = run_scenario(scn, N)
        row = {"N": N, "runtime_s": run.runtime}
        if run.oracle_l1 is not None:
            row["oracle_l1"] = run.oracle_l1
        for rep in run.reports:
            row[f"ratio_{rep.estimate_id}"] = rep.ratio
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# The standard verification suite: ten scenarios spanning the diffusion
# regimes, both boundary types, atom and density forcings, and admissible
# drifts.  Estimate parameters are chosen so every state is resolved from
# the coarsest rung (atom forcings only in the smoothing regimes m <= 1;
# the degenerate m > 1 point-source physics is covered by the closed-form
# profile comparison instead).

_COMMON_ESTIMATES = """
  [[scenario.estimate]]
  id = "weighted_gradient"
  q = 2.0
  xi = 2.0
  A = 1.0

  [[scenario.estimate]]
  id = "alpha_gradient"
  q = 1.5
  alpha = 1.5

  [[scenario.estimate]]
  id = "alpha_gradient"
  q = 1.0
  alpha = 1.5

  [[scenario.estimate]]
  id = "theorem_gradient"
  alpha = 1.5

  [[scenario.estimate]]
  id = "parabolic_embedding"
  p = 1.5
  q = 1.0
"""

STANDARD_SUITE_TOML = f"""
schema = 1

[[scenario]]
id = "s01_heat_atom_dirichlet"
L = 2.0
T = 0.2
m = 1.0
boundary = "dirichlet"
mollification = 16
  [scenario.measure]
  atoms = [[1.0, 1.0, 0.1, 1.0]]
  [scenario.drift]
  preset = "zero"
  divergence_free = true
  q1 = inf
  q2 = inf
{_COMMON_ESTIMATES}
[[scenario]]
id = "s02_heat_density_noflux"
L = 2.0
T = 0.2
m = 1.0
boundary = "noflux"
  [scenario.measure]
  density = {{preset = "bump", center = [1.0, 1.0], radius = 0.6, height = 1.0}}
  [scenario.drift]
  preset = "zero"
  divergence_free = true
  q1 = inf
  q2 = inf
{_COMMON_ESTIMATES}
[[scenario]]
id = "s03_pme15_density_dirichlet"
L = 2.0
T = 0.2
m = 1.5
boundary = "dirichlet"
  [scenario.measure]
  density = {{preset = "bump", center = [1.0, 1.0], radius = 0.6, height = 1.0}}
  [scenario.drift]
  preset = "zero"
  divergence_free = true
  q1 = inf
  q2 = inf
{_COMMON_ESTIMATES}
[[scenario]]
id = "s04_pme15_density_shear_noflux"
L = 2.0
T = 0.2
m = 1.5
boundary = "noflux"
  [scenario.measure]
  density = {{preset = "bump", center = [1.0, 1.0], radius = 0.6, height = 1.0}}
  [scenario.drift]
  preset = "shear"
  rate = 0.8
  center = 1.0
  divergence_free = true
  q1 = inf
  q2 = inf
{_COMMON_ESTIMATES}
[[scenario]]
id = "s05_pme2_density_dirichlet"
L = 2.0
T = 0.2
m = 2.0
boundary = "dirichlet"
  [scenario.measure]
  density = {{preset = "bump", center = [1.0, 1.0], radius = 0.6, height = 2.0}}
  [scenario.drift]
  preset = "zero"
  divergence_free = true
  q1 = inf
  q2 = inf
{_COMMON_ESTIMATES}
[[scenario]]
id = "s06_pme2_density_noflux"
L = 2.0
T = 0.2
m = 2.0
boundary = "noflux"
  [scenario.measure]
  density = {{preset = "bump", center = [0.8, 1.2], radius = 0.5, height = 2.0}}
  [scenario.drift]
  preset = "zero"
  divergence_free = true
  q1 = inf
  q2 = inf
{_COMMON_ESTIMATES}
[[scenario]]
id = "s07_fde_density_dirichlet"
L = 2.0
T = 0.2
m = 0.8
epsilon = 1e-3
boundary = "dirichlet"
  [scenario.measure]
  density = {{preset = "bump", center = [1.0, 1.0], radius = 0.6, height = 1.0}}
  [scenario.drift]
  preset = "zero"
  divergence_free = true
  q1 = inf
  q2 = inf

  # q chosen so the tracked power (m+q-1)/2 >= 1: for smaller q its gradient
  # is singular on the Dirichlet wall layer and stays under-resolved
  [[scenario.estimate]]
  id = "weighted_gradient"
  q = 2.4
  xi = 2.0
  A = 1.0

  [[scenario.estimate]]
  id = "alpha_gradient"
  q = 1.5
  alpha = 1.5

  [[scenario.estimate]]
  id = "alpha_gradient"
  q = 1.0
  alpha = 1.5

  [[scenario.estimate]]
  id = "theorem_gradient"
  alpha = 1.5

  [[scenario.estimate]]
  id = "parabolic_embedding"
  p = 1.5
  q = 1.0

[[scenario]]
id = "s08_fde_atom_vortex_noflux"
L = 2.0
T = 0.2
m = 0.8
epsilon = 1e-3
boundary = "noflux"
mollification = 16
  [scenario.measure]
  atoms = [[1.0, 1.0, 0.1, 1.0]]
  [scenario.drift]
  preset = "vortex"
  omega = 1.0
  center = [1.0, 1.0]
  divergence_free = true
  q1 = inf
  q2 = inf
{_COMMON_ESTIMATES}
[[scenario]]
id = "s09_heat_atom_radial_dirichlet"
L = 2.0
T = 0.2
m = 1.0
boundary = "dirichlet"
mollification = 16
  [scenario.measure]
  atoms = [[1.0, 1.0, 0.1, 1.0]]
  [scenario.drift]
  preset = "radial"
  rate = 0.5
  center = [1.0, 1.0]
  q1 = 8.0
  q2 = 3.0
{_COMMON_ESTIMATES}
[[scenario]]
id = "s10_pme15_density_radial_noflux"
L = 2.0
T = 0.2
m = 1.5
boundary = "noflux"
  [scenario.measure]
  density = {{preset = "bump", center = [1.0, 1.0], radius = 0.6, height = 1.0}}
  [scenario.drift]
  preset = "radial"
  rate = 0.5
  center = [1.0, 1.0]
  q1 = 10.0
  q2 = 4.0
{_COMMON_ESTIMATES}
"""


def standard_suite() -> list[Scenario]:
    return parse_suite(STANDARD_SUITE_TOML)
