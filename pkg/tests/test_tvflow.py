import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st

from largeflow.exact import example51_initial, example51_value
from largeflow.fastdiff import NoConvergence, SolverSettings
from largeflow.geometry import Disk, rectangle
from largeflow.mesh import DomainSpec, FaceVector, Field, build_mesh
from largeflow.tvflow import (boundary_trace_diagnostic, default_eps_schedule, step_residuals,
                              tv_evolve, tv_resolvent)
from largeflow.verify import CANONICAL_CLAMPS

FIXED_SCHEDULE = (1e-1, 1e-2, 1e-3, 1e-4)


@pytest.fixture(scope="module")
def radial():
    return build_mesh(DomainSpec(Disk(1.0), 1 / 128, radial=True))


@pytest.fixture(scope="module")
def square():
    return build_mesh(DomainSpec(rectangle(1, 1), 1 / 10))


def test_resolvent_of_zero_is_calibrable_plateau(radial):
    # u = 2 tau / R with z(x) = x solves u - tau div z = 0, |z| <= 1, outward trace 1
    u, z = tv_resolvent(Field(radial, np.zeros(radial.n_cells)), 0.1, 10.0)
    np.testing.assert_allclose(u.values, 0.2, atol=1e-3)
    assert np.max(np.abs(z.values)) <= 1 + 1e-8
    assert boundary_trace_diagnostic(z) > 0.99


def test_resolvent_shift_below_lift(radial):
    u, _ = tv_resolvent(Field(radial, np.full(radial.n_cells, 5.0)), 0.1, 100.0)
    np.testing.assert_allclose(u.values, 5.2, atol=1e-3)


def test_resolvent_with_matching_lift_is_identity(radial):
    v = Field(radial, np.full(radial.n_cells, 5.0))
    u, z = tv_resolvent(v, 0.1, 5.0)
    np.testing.assert_allclose(u.values, 5.0, atol=1e-12)
    assert np.max(np.abs(z.values)) <= 1e-12


def test_resolvent_identity_limit(square):
    x, y = square.centers.T
    v = Field(square, np.sin(3 * x) * y)
    u, _ = tv_resolvent(v, 1e-8, 1.0)
    assert np.max(np.abs(u.values - v.values)) <= 1e-5


def test_schedule_validation(square):
    v = Field(square, np.zeros(square.n_cells))
    for bad in [(1e-2, 1e-1), (1e-1, 0.0), (1e-1, 1e-1)]:
        with pytest.raises(ValueError):
            tv_resolvent(v, 0.1, 1.0, bad)
    with pytest.raises(ValueError):
        tv_resolvent(v, 0.0, 1.0)
    assert default_eps_schedule(3.0) == pytest.approx((0.3, 0.03, 0.003, 0.0003))


def test_no_convergence_names_eps(square):
    v = Field(square, np.zeros(square.n_cells))
    with pytest.raises(NoConvergence) as err:
        tv_resolvent(v, 0.5, 50.0, FIXED_SCHEDULE, SolverSettings(max_iter=1))
    assert err.value.eps == FIXED_SCHEDULE[0]


@hsettings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 0.5))
def test_resolvent_sup_bound(seed, tau):
    mesh = build_mesh(DomainSpec(Disk(1.0), 1 / 64, radial=True))
    rng = np.random.default_rng(seed)
    rho = mesh.centers[:, 0]
    v = rng.uniform(0, 3) * (1 + np.cos(rng.integers(1, 5) * np.pi * rho)) / 2
    u, z = tv_resolvent(Field(mesh, v), tau, 100.0)
    assert np.max(u.values) < 100
    assert u.sup() <= np.max(np.abs(v)) + tau * 2.0 / 1.0 + 1e-3
    assert np.max(np.abs(z.values)) <= 1 + 1e-8


@pytest.mark.parametrize("clamp", CANONICAL_CLAMPS)
def test_complete_accretivity_spot_check(square, clamp):
    rng = np.random.default_rng(4)
    x, y = square.centers.T
    tau = 0.05
    v1 = rng.uniform(-1, 1) + np.sin(np.pi * x) * y
    v2 = rng.uniform(-1, 1) + np.cos(2 * y) * x
    u1, _ = tv_resolvent(Field(square, v1), tau, 1.0, FIXED_SCHEDULE)
    u2, _ = tv_resolvent(Field(square, v2), tau, 1.0, FIXED_SCHEDULE)
    a1 = (v1 - u1.values) / tau
    a2 = (v2 - u2.values) / tau
    pairing = np.sum(square.cell_volume * clamp(u1.values - u2.values) * (a1 - a2))
    assert pairing >= -1e-8


def test_calibrable_growth_on_disk(radial):
    traj = tv_evolve(Field(radial, np.zeros(radial.n_cells)), 1.0, 0.01, 100.0, snapshot_times=[0.5, 1.0])
    inner = radial.centers[:, 0] <= 0.8
    np.testing.assert_allclose(traj.final.values[inner], 2.0, rtol=0.02)
    assert np.max(traj.values[-1]) <= 2.0 * 1.0 + 0.05
    assert traj.fluxes.shape == (3, radial.n_faces)
    assert np.max(np.abs(traj.fluxes)) <= 1 + 1e-8


def test_example51_single_lift(radial):
    rho = radial.centers[:, 0]
    u0 = Field(radial, example51_initial(rho))
    traj = tv_evolve(u0, 0.5, 1e-3, 100.0, eps_schedule=FIXED_SCHEDULE, snapshot_times=[0.25, 0.5])
    mask = rho <= 0.9
    exact = example51_value(0.5, rho[mask])
    vol = radial.cell_volume[mask]
    rel = np.sum(vol * np.abs(traj.final.values[mask] - exact)) / np.sum(vol * np.abs(exact))
    assert rel <= 0.05
    assert traj.boundary_trace[-1] >= 0.95
    m = traj.manifest()
    assert m["eps_schedule"] == list(FIXED_SCHEDULE)
    assert len(m["z_min_boundary_trace"]) == len(traj)


def test_sup_bound_with_bounded_data(radial):
    rho = radial.centers[:, 0]
    u0 = Field(radial, 3.0 * (1 - rho ** 2))
    traj = tv_evolve(u0, 0.5, 0.01, 100.0, snapshot_times=np.linspace(0.05, 0.5, 10))
    bound = 3.0 + traj.times * 2.0 / 1.0 + 0.05
    assert np.all(np.max(traj.values, axis=1) <= bound)


@hsettings(max_examples=5, deadline=None)
@given(st.integers(0, 10_000))
def test_tv_l1_contraction(seed):
    mesh = build_mesh(DomainSpec(rectangle(1, 1), 1 / 8))
    rng = np.random.default_rng(seed)
    x, y = mesh.centers.T
    u0 = rng.uniform(0, 2) * np.sin(np.pi * x) * np.sin(np.pi * y)
    v0 = rng.uniform(0, 2) * x * y
    a = tv_evolve(Field(mesh, u0), 0.1, 0.02, 3.0, eps_schedule=FIXED_SCHEDULE)
    b = tv_evolve(Field(mesh, v0), 0.1, 0.02, 3.0, eps_schedule=FIXED_SCHEDULE)
    vol = mesh.cell_volume
    l1 = np.sum(vol * np.abs(a.values - b.values), axis=1)
    assert np.max(l1 - l1[0]) <= 1e-6 * 1.0


def test_boundary_trace_examples(radial):
    faces = radial.face_center[:, 0]
    radial_field = FaceVector(radial, faces)
    assert boundary_trace_diagnostic(radial_field) == 1.0
    assert boundary_trace_diagnostic(FaceVector(radial, np.zeros(radial.n_faces))) == 0.0


def test_step_residuals_small(square):
    x, y = square.centers.T
    traj = tv_evolve(Field(square, x * y), 0.1, 0.01, 1.0, eps_schedule=FIXED_SCHEDULE)
    res = step_residuals(traj)
    assert len(res) == len(traj) - 1
    assert np.max(res) <= 1e-8
    assert traj.stats["max_step_residual_l1"] <= 1e-8
