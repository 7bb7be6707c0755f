"""Command-line surface: classify, region-sweep, solve, verify, couple,
convergence, suite.

All outputs land under user-given paths; no network access.  Suite runs
honor the DRIFTLAB_WORKERS environment variable (or --workers) for the
process count; report bundles are byte-deterministic across reruns.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import scenarios as scn_mod
from .classify import DiffusionParams, classify, region_sweep
from .drift import DriftSpec
from .estimates import verify_mass
from .fluid import verify_coupled_energy
from .grid import Boundary, SpaceTimeDomain, write_field_bin, write_field_csv
from .measure import Atom, DensitySpec, InitialAtom, MeasureSpec, mollify
from .norms import ExponentPair
from .solver import SolverConfig, Trajectory
from .scenarios import (
    ConfigError,
    Scenario,
    convergence_rows,
    load_suite,
    run_coupled_scenario,
    run_estimate,
    run_scenario,
    run_suite,
)

_BOUNDARY_NAMES = {
    Boundary.DIRICHLET_ZERO: "dirichlet",
    Boundary.NO_FLUX: "noflux",
}


def _json_num(x: float):
    return x if math.isfinite(x) else repr(x)


# --- trajectory dumps --------------------------------------------------------
# A dump directory holds meta.json (domain, solver config, slice times, the
# measure and drift declarations), budget.csv (t, mass, forcing_cum,
# outflux_cum per step) and slice_%04d.bin raw little-endian float64
# row-major snapshots (plus .csv twins when requested).


def write_trajectory(traj: Trajectory, outdir: str, with_csv: bool = False) -> None:
    os.makedirs(outdir, exist_ok=True)
    d = traj.domain
    meta = {
        "schema": scn_mod.SCHEMA,
        "domain": {"d": d.d, "L": d.L, "T": d.T, "N": d.N,
                   "boundary": _BOUNDARY_NAMES[d.boundary]},
        "config": {"m": traj.config.m, "epsilon": traj.config.epsilon,
                   "cfl_safety": traj.config.cfl_safety,
                   "t_end": traj.config.t_end if traj.config.t_end is not None else d.T},
        "mollification": traj.mollification,
        "times": [float(t) for t in traj.times],
        "measure": _measure_dict(traj.measure),
        "drift": _drift_dict(traj.drift),
    }
    with open(os.path.join(outdir, "meta.json"), "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=1)
        fh.write("\n")
    budget = traj.cumulative_budget()
    with open(os.path.join(outdir, "budget.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "mass", "forcing_cum", "outflux_cum"])
        for k in range(traj.step_times.size):
            w.writerow([repr(float(budget["t"][k])), repr(float(budget["mass"][k])),
                        repr(float(budget["forcing_cum"][k])),
                        repr(float(budget["outflux_cum"][k]))])
    for k in range(traj.times.size):
        write_field_bin(traj.slices[k], os.path.join(outdir, f"slice_{k:04d}.bin"))
        if with_csv:
            write_field_csv(d, traj.slices[k], os.path.join(outdir, f"slice_{k:04d}.csv"))


def _measure_dict(spec: MeasureSpec) -> dict:
    out = {
        "atoms": [list(a.x) + [a.t, a.mass] for a in spec.atoms],
        "initial_atoms": [list(a.x) + [a.mass] for a in spec.initial_atoms],
    }
    if spec.density is not None:
        out["density"] = {"preset": spec.density.preset, **spec.density.params}
    return out


def _drift_dict(spec: DriftSpec) -> dict:
    out = {"preset": spec.preset, "divergence_free": spec.divergence_free,
           "params": dict(spec.params)}
    if spec.exponents is not None:
        out["q1"] = _json_num(spec.exponents.q1)
        out["q2"] = _json_num(spec.exponents.q2)
    return out


def _measure_from_dict(d: int, data: dict) -> MeasureSpec:
    atoms = tuple(
        Atom(tuple(float(v) for v in row[:d]), float(row[d]), float(row[d + 1]))
        for row in data.get("atoms", [])
    )
    initial = tuple(
        InitialAtom(tuple(float(v) for v in row[:d]), float(row[d]))
        for row in data.get("initial_atoms", [])
    )
    density = None
    if "density" in data:
        dd = dict(data["density"])
        density = DensitySpec(dd.pop("preset"), dd)
    return MeasureSpec(atoms, density, initial)


def _drift_from_dict(data: dict) -> DriftSpec:
    exponents = None
    if "q1" in data:
        exponents = ExponentPair(float(data["q1"]), float(data["q2"]))
    return DriftSpec(data["preset"], dict(data.get("params", {})),
                     divergence_free=bool(data.get("divergence_free", False)),
                     exponents=exponents)


def read_trajectory(dumpdir: str) -> Trajectory:
    from .grid import read_field_bin

    with open(os.path.join(dumpdir, "meta.json")) as fh:
        meta = json.load(fh)
    dm = meta["domain"]
    boundary = {v: k for k, v in _BOUNDARY_NAMES.items()}[dm["boundary"]]
    domain = SpaceTimeDomain(int(dm["d"]), float(dm["L"]), float(dm["T"]),
                             int(dm["N"]), boundary)
    cm = meta["config"]
    config = SolverConfig(m=float(cm["m"]), epsilon=float(cm["epsilon"]),
                          boundary=boundary, cfl_safety=float(cm["cfl_safety"]),
                          t_end=float(cm["t_end"]))
    times = np.asarray(meta["times"], dtype=float)
    slices = np.stack([
        read_field_bin(domain, os.path.join(dumpdir, f"slice_{k:04d}.bin"))
        for k in range(times.size)
    ])
    rows = []
    with open(os.path.join(dumpdir, "budget.csv"), newline="") as fh:
        rd = csv.reader(fh)
        next(rd)
        for row in rd:
            rows.append([float(v) for v in row])
    budget = np.asarray(rows)
    t = budget[:, 0]
    dt = np.diff(t)
    safe = np.where(dt > 0, dt, 1.0)
    measure = _measure_from_dict(domain.d, meta["measure"])
    drift = _drift_from_dict(meta["drift"])
    return Trajectory(
        domain=domain,
        config=config,
        times=times,
        slices=slices,
        step_times=t,
        step_dt=dt,
        step_mass=budget[:, 1],
        step_forcing=np.diff(budget[:, 2]) / safe,
        step_outflux=np.diff(budget[:, 3]) / safe,
        mollification=int(meta["mollification"]),
        drift=drift,
        measure=measure,
        forcing=mollify(measure, int(meta["mollification"]), domain),
    )


def _find_scenario(path: str, sid: str) -> Scenario:
    suite = load_suite(path)
    for s in suite:
        if s.id == sid:
            return s
    raise ConfigError(f"no scenario with id {sid!r} in {path}")


# --- subcommands -------------------------------------------------------------


def cmd_classify(args) -> int:
    p = DiffusionParams(args.m, args.d)
    e = ExponentPair(args.q1, args.q2)
    verdict = classify(p, e, args.divfree)
    print(json.dumps(verdict.to_dict(), sort_keys=True))
    return 0


def cmd_region_sweep(args) -> int:
    p = DiffusionParams(args.m, args.d)
    rows = region_sweep(p, args.divfree, lattice=args.lattice, extent=args.extent)
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {len(rows)} lattice verdicts to {args.out}")
    return 0


def cmd_solve(args) -> int:
    scn = _find_scenario(args.config, args.scenario)
    run = run_scenario(scn, args.n_cells)
    write_trajectory(run.trajectory, args.out, with_csv=args.csv)
    mass = verify_mass(run.trajectory)
    meta = {
        "scenario": scn.id,
        "N": run.n_cells,
        "steps": int(run.trajectory.n_steps),
        "mass_bound_passed": bool(mass.passed),
    }
    if run.oracle_l1 is not None:
        meta["oracle_l1"] = run.oracle_l1
    with open(os.path.join(args.out, "run.json"), "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=1)
        fh.write("\n")
    print(json.dumps(meta, sort_keys=True))
    return 0


def cmd_verify(args) -> int:
    traj = read_trajectory(args.traj)
    reports = [verify_mass(traj)]
    if args.estimates != "mass":
        wanted = None if args.estimates == "all" else set(args.estimates.split(","))
        specs = [
            {"id": "weighted_gradient", "q": 2.0, "xi": 2.0, "A": 1.0},
            {"id": "alpha_gradient", "q": 1.5, "alpha": 1.5},
            {"id": "alpha_gradient", "q": 1.0, "alpha": 1.5},
            {"id": "theorem_gradient", "alpha": 1.5},
            {"id": "parabolic_embedding", "p": 1.5, "q": 1.0},
        ]
        for spec in specs:
            if wanted is None or spec["id"] in wanted:
                reports.append(run_estimate(traj, spec))
    payload = json.dumps([r.to_dict() for r in reports], sort_keys=True, indent=1)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(payload + "\n")
    print(payload)
    failed = [r for r in reports if r.mode == "literal" and r.applicable and not r.passed]
    return 1 if failed else 0


def cmd_couple(args) -> int:
    scn = _find_scenario(args.config, args.scenario)
    run = run_coupled_scenario(scn, args.n_cells)
    rep = verify_coupled_energy(run)
    os.makedirs(args.out, exist_ok=True)
    dom = run.rho.domain
    for k, t in enumerate(run.snapshot_times):
        write_field_csv(dom, run.rho.slices[k], os.path.join(args.out, f"rho_{k:04d}.csv"))
        u, v = run.v_snapshots[k]
        np.savez(os.path.join(args.out, f"vel_{k:04d}.npz"), u=u, v=v, t=t)
    with open(os.path.join(args.out, "energy.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "mass", "kinetic", "dissipation_cum", "forcing_cum"])
        diss_cum = np.concatenate(([0.0], np.cumsum(run.rho.step_dt * run.dissipation)))
        forc_cum = np.concatenate(([0.0], np.cumsum(run.rho.step_dt * run.rho.step_forcing)))
        for k in range(run.fluid_times.size):
            w.writerow([repr(float(run.fluid_times[k])), repr(float(run.rho.step_mass[k])),
                        repr(float(run.kinetic[k])), repr(float(diss_cum[k])),
                        repr(float(forc_cum[k]))])
    with open(os.path.join(args.out, "report.json"), "w") as fh:
        json.dump(rep.to_dict(), fh, sort_keys=True, indent=1)
        fh.write("\n")
    print(json.dumps(rep.to_dict(), sort_keys=True))
    return 0 if rep.passed else 1


def cmd_convergence(args) -> int:
    scn = _find_scenario(args.config, args.scenario)
    ladder = [int(n) for n in args.ladder.split(",")] if args.ladder else None
    rows = convergence_rows(scn, ladder)
    fields = sorted({k for row in rows for k in row}, key=lambda k: (k != "N", k))
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {len(rows)} ladder rows to {args.out}")
    return 0


def cmd_suite(args) -> int:
    suite = load_suite(args.config)
    bundle = run_suite(suite, outdir=args.out, workers=args.workers)
    n_rep = sum(len(e["reports"]) for e in bundle["scenarios"])
    print(f"{len(bundle['scenarios'])} scenarios, {n_rep} reports, "
          f"all_literal_passed={bundle['all_literal_passed']}")
    return 0 if bundle["all_literal_passed"] else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="driftlab",
        description="drift-diffusion solver, drift classification, and "
                    "inequality verification",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("classify", help="scaling-class verdict for (m, d, q1, q2)")
    c.add_argument("--d", type=int, required=True)
    c.add_argument("--m", type=float, required=True)
    c.add_argument("--q1", type=float, required=True)
    c.add_argument("--q2", type=float, required=True)
    c.add_argument("--divfree", action="store_true")
    c.set_defaults(func=cmd_classify)

    c = sub.add_parser("region-sweep", help="verdict lattice over (1/q1, 1/q2)")
    c.add_argument("--d", type=int, required=True)
    c.add_argument("--m", type=float, required=True)
    c.add_argument("--divfree", action="store_true")
    c.add_argument("--lattice", type=int, default=61)
    c.add_argument("--extent", type=float, default=1.5)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_region_sweep)

    c = sub.add_parser("solve", help="run one scenario and dump the trajectory")
    c.add_argument("--config", required=True)
    c.add_argument("--scenario", required=True)
    c.add_argument("--n-cells", type=int, default=None)
    c.add_argument("--csv", action="store_true", help="also write CSV snapshots")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_solve)

    c = sub.add_parser("verify", help="evaluate estimates on a trajectory dump")
    c.add_argument("--traj", required=True)
    c.add_argument("--estimates", default="all",
                   help="'all', 'mass', or comma-separated estimate ids")
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_verify)

    c = sub.add_parser("couple", help="run a coupled fluid scenario")
    c.add_argument("--config", required=True)
    c.add_argument("--scenario", required=True)
    c.add_argument("--n-cells", type=int, default=None)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_couple)

    c = sub.add_parser("convergence", help="refinement-ladder study for a scenario")
    c.add_argument("--config", required=True)
    c.add_argument("--scenario", required=True)
    c.add_argument("--ladder", default=None, help="comma-separated cell counts")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_convergence)

    c = sub.add_parser("suite", help="run a full suite and write the report bundle")
    c.add_argument("--config", required=True)
    c.add_argument("--out", default=None)
    c.add_argument("--workers", type=int, default=None)
    c.set_defaults(func=cmd_suite)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
