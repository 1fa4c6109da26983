import numpy as np

from largeflow.geometry import Disk, rectangle
from largeflow.mesh import DomainSpec, Field, build_mesh
from largeflow.plots import loglog_svg
from largeflow.store import load_trajectory, read_manifest, save_trajectory
from largeflow.tvflow import tv_evolve


def test_round_trip_keeps_values_and_fluxes(tmp_path):
    mesh = build_mesh(DomainSpec(rectangle(1, 1), 1 / 8))
    x, y = mesh.centers.T
    traj = tv_evolve(Field(mesh, x * y), 0.1, 0.02, 2.0, snapshot_times=[0.05, 0.1])
    save_trajectory(traj, tmp_path / "run", {"status": "OK"})
    back = load_trajectory(tmp_path / "run")
    assert np.array_equal(back.times, traj.times)
    assert np.array_equal(back.values, traj.values)
    assert np.array_equal(back.fluxes, traj.fluxes)
    assert back.p == 1.0 and back.n == 2.0 and back.eps_schedule == traj.eps_schedule
    man = read_manifest(tmp_path / "run")
    assert man["status"] == "OK" and len(man["z_min_boundary_trace"]) == 3


def test_radial_round_trip(tmp_path):
    mesh = build_mesh(DomainSpec(Disk(1.0), 1 / 32, radial=True))
    traj = tv_evolve(Field(mesh, np.zeros(mesh.n_cells)), 0.1, 0.05, 5.0)
    save_trajectory(traj, tmp_path / "r")
    back = load_trajectory(tmp_path / "r")
    assert back.mesh.radial and back.mesh.n_cells == mesh.n_cells
    assert np.array_equal(back.values, traj.values)


def test_svg_is_well_formed(tmp_path):
    path = tmp_path / "fit.svg"
    loglog_svg(path, np.log([1, 2, 4]), np.log([1, 4, 16]), 2.0, "time exponent", "log t", "log u")
    text = path.read_text()
    assert text.startswith("<svg") and text.rstrip().endswith("</svg>") and "2" in text
