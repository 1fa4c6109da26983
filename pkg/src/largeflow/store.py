"""Run directories: one ``manifest.json`` plus one CSV per snapshot."""
from __future__ import annotations

import json
import os

import numpy as np

from .fastdiff import Trajectory
from .geometry import parse_shape
from .mesh import DomainSpec, build_mesh, read_field_csv, write_field_csv

MANIFEST = "manifest.json"


def save_trajectory(traj: Trajectory, outdir, extra: dict | None = None) -> str:
    """Write snapshots and the manifest; returns the manifest path."""
    os.makedirs(outdir, exist_ok=True)
    files = []
    for i in range(len(traj)):
        name = f"snap_{i:04d}.csv"
        write_field_csv(os.path.join(outdir, name), traj.field(i))
        files.append(name)
    man = traj.manifest()
    dom = traj.mesh.domain
    if dom is not None:
        man["s0"] = dom.s0
    man["snapshot_files"] = files
    if traj.fluxes is not None:
        flux_name = "fluxes.npy"
        np.save(os.path.join(outdir, flux_name), traj.fluxes)
        man["flux_file"] = flux_name
    if extra:
        man.update(extra)
    path = os.path.join(outdir, MANIFEST)
    write_manifest(path, man)
    return path


def write_manifest(path, man: dict) -> None:
    with open(path, "w") as fh:
        json.dump(man, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


def read_manifest(rundir) -> dict:
    with open(os.path.join(rundir, MANIFEST)) as fh:
        return json.load(fh)


def load_trajectory(rundir, mesh=None) -> Trajectory:
    """Rebuild mesh and trajectory from a run directory."""
    man = read_manifest(rundir)
    if mesh is None:
        shape = parse_shape(man["domain"])
        mesh = build_mesh(DomainSpec(shape, man["h"], s0=man.get("s0"), radial=man["radial"]))
    times = np.asarray(man["snapshot_times"], float)
    values = np.array([read_field_csv(os.path.join(rundir, f), mesh).values
                       for f in man["snapshot_files"]])
    fluxes = None
    if "flux_file" in man:
        fluxes = np.load(os.path.join(rundir, man["flux_file"]))
    trace = man.get("z_min_boundary_trace")
    return Trajectory(
        mesh=mesh, times=times, values=values, n=man["n"], p=man["p"], eps=man["eps"],
        tau=man["tau"], fluxes=fluxes,
        eps_schedule=tuple(man["eps_schedule"]) if "eps_schedule" in man else None,
        boundary_trace=np.asarray(trace) if trace is not None else None,
    )
