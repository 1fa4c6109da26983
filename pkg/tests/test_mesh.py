import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from largeflow.geometry import Disk, Polygon, rectangle, GeometryError
from largeflow.mesh import (BadRange, DomainSpec, EmptyDomain, FaceVector, Field, MeshMismatch,
                            OutsideDomain, boundary_distance, build_interval_mesh, build_mesh,
                            divergence, gradient, p_energy, read_field_csv, truncate, write_field_csv)


def test_unit_square_four_cells():
    m = build_mesh(DomainSpec(rectangle(1, 1), 0.5))
    offsets = np.sort(m.centers - 0.5, axis=0)
    assert m.n_cells == 4
    np.testing.assert_allclose(np.abs(m.centers - 0.5), 0.25)
    assert len(m.boundary_faces) == 8 and len(m.interior_faces) == 4


def test_disk_too_coarse_is_empty():
    with pytest.raises(EmptyDomain):
        build_mesh(DomainSpec(Disk(1.0), 2.5))


def test_disk_cell_count_against_monte_carlo_area():
    h = 1 / 64
    m = build_mesh(DomainSpec(Disk(1.0), h))
    rng = np.random.default_rng(1)
    pts = rng.uniform(-1, 1, size=(400_000, 2))
    mc_area = 4.0 * np.mean(np.hypot(pts[:, 0], pts[:, 1]) < 1)
    assert abs(m.n_cells * h * h - mc_area) / mc_area < 0.01
    assert abs(m.n_cells - math.pi / h ** 2) / (math.pi / h ** 2) < 0.01


def test_every_cartesian_cell_has_four_faces():
    m = build_mesh(DomainSpec(Polygon(np.array([[0, 0], [2, 0], [0, 2.0]])), 0.05))
    counts = np.bincount(m.face_left, minlength=m.n_cells)
    counts += np.bincount(m.face_right[m.face_right >= 0], minlength=m.n_cells)
    assert np.all(counts == 4)


@pytest.mark.parametrize("shape", [Disk(1.0), rectangle(2, 1), Polygon(np.array([[0, 0], [2, 0], [0, 2.0]]))])
def test_boundary_faces_sit_on_the_boundary(shape):
    h = 1 / 32
    m = build_mesh(DomainSpec(shape, h))
    fc = m.face_center[m.boundary_faces]
    assert np.max(np.abs(shape.signed_depth(fc))) <= h
    assert np.min(m.cell_depth) > 0
    # continuum normals point outward: moving along them leaves the domain
    assert np.all(shape.signed_depth(fc + 2 * h * m.boundary_normal) < shape.signed_depth(fc))


def test_aligned_rectangle_centres_are_half_a_cell_deep():
    h = 1 / 32
    m = build_mesh(DomainSpec(rectangle(2, 1), h))
    assert np.min(m.cell_depth) >= h / 2 - 1e-12


def test_boundary_distance_examples():
    assert boundary_distance(DomainSpec(Disk(1.0), 0.1), (0.3, 0.0)) == pytest.approx(0.7, abs=1e-15)
    assert boundary_distance(DomainSpec(rectangle(1, 1), 0.1), (0.5, 0.5)) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(OutsideDomain):
        boundary_distance(DomainSpec(Disk(1.0), 0.1), (1.5, 0.0))


def test_boundary_distance_triangle_brute_force():
    verts = np.array([[0, 0], [2, 0], [0, 2.0]])
    tri = Polygon(verts)
    s = np.linspace(0, 1, 200_001)[:, None]
    edges = [verts[i] + s * (verts[(i + 1) % 3] - verts[i]) for i in range(3)]
    samples = np.vstack(edges)
    brute = np.min(np.hypot(samples[:, 0] - 0.4, samples[:, 1] - 0.4))
    got = boundary_distance(DomainSpec(tri, 0.05), (0.4, 0.4))
    assert got == pytest.approx(brute, abs=1e-9)


def test_gradient_examples():
    iv = build_interval_mesh(3, 1.0)
    g = gradient(Field(iv, [0.0, 1.0, 2.0])).values
    np.testing.assert_allclose(g[iv.interior_faces], [1.0, 1.0])
    m = build_mesh(DomainSpec(Disk(1.0), 0.1))
    const = Field(m, np.full(m.n_cells, 3.0))
    assert np.all(gradient(const, 3.0).values == 0.0)


def test_mesh_mismatch():
    a = build_interval_mesh(3)
    b = build_interval_mesh(3)
    with pytest.raises(MeshMismatch):
        Field(a, [1, 2, 3]).inner(Field(b, [1, 2, 3]))
    with pytest.raises(MeshMismatch):
        Field(a, [1, 2])
    with pytest.raises(MeshMismatch):
        FaceVector(a, [1, 2])


_MESHES = {
    "disk2d": build_mesh(DomainSpec(Disk(1.0), 1 / 16)),
    "radial": build_mesh(DomainSpec(Disk(1.0), 1 / 16, radial=True)),
    "triangle": build_mesh(DomainSpec(Polygon(np.array([[0, 0], [2, 0], [0, 2.0]])), 1 / 16)),
}


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(sorted(_MESHES)), st.integers(0, 2 ** 32 - 1))
def test_summation_by_parts(name, seed):
    m = _MESHES[name]
    rng = np.random.default_rng(seed)
    u = Field(m, rng.normal(size=m.n_cells))
    q = FaceVector(m, rng.normal(size=m.n_faces))
    lhs = divergence(q).inner(u)
    rhs = q.inner(gradient(u))
    assert abs(lhs + rhs) <= 1e-12 * max(1.0, abs(lhs), abs(rhs))


def test_truncate_examples():
    iv = build_interval_mesh(3)
    np.testing.assert_array_equal(truncate(Field(iv, [0.0, 2.0, 7.0]), 1, 3).values, [1.0, 2.0, 3.0])
    with pytest.raises(BadRange):
        truncate(Field(iv, [0.0, 2.0, 7.0]), 3, 1)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20), st.floats(-100, 100), st.floats(0, 100))
def test_truncate_idempotent_and_lipschitz(vals, a, width):
    m = build_interval_mesh(len(vals))
    u = Field(m, vals)
    t1 = truncate(u, a, a + width)
    np.testing.assert_array_equal(truncate(t1, a, a + width).values, t1.values)
    shifted = Field(m, np.asarray(vals) + 0.5)
    assert np.all(np.abs(truncate(shifted, a, a + width).values - t1.values) <= 0.5 + 1e-12)


def test_p_energy_examples():
    two = build_interval_mesh(2, 1.0)
    assert p_energy(Field(two, [0.0, 3.0]), 2.0, 1.0, 1.0) == pytest.approx(1.0)
    m = build_mesh(DomainSpec(Disk(1.0), 0.1))
    flat = [Field(m, np.full(m.n_cells, 2.0), t) for t in (0.0, 0.5)]
    assert p_energy(flat, 1.5, 1.0, 0.5) == 0.0
    rng = np.random.default_rng(3)
    u = Field(m, rng.uniform(-2, 2, m.n_cells))
    assert p_energy(u, 1.5, 10.0) == p_energy(u, 1.5, u.sup())


@given(st.floats(0.1, 5), st.floats(0.1, 5), st.floats(1.0, 3.0))
@settings(max_examples=30, deadline=None)
def test_p_energy_nondecreasing_in_k(k1, k2, p):
    m = _MESHES["radial"]
    rng = np.random.default_rng(7)
    u = Field(m, rng.uniform(-6, 6, m.n_cells))
    lo, hi = sorted((k1, k2))
    assert p_energy(u, p, lo) <= p_energy(u, p, hi) + 1e-12


def test_field_csv_round_trip(tmp_path):
    for m in (_MESHES["disk2d"], _MESHES["radial"]):
        u = Field(m, np.random.default_rng(0).normal(size=m.n_cells) * 1e3)
        path = tmp_path / f"{m.kind}.csv"
        write_field_csv(path, u)
        header = path.read_text().splitlines()[0]
        assert header == ("rho,value" if m.radial else "x,y,value")
        np.testing.assert_array_equal(read_field_csv(path, m).values, u.values)


def test_domain_validation():
    with pytest.raises(GeometryError):
        Polygon(np.array([[0, 0], [0, 1.0], [1, 0]]))  # clockwise
    with pytest.raises(GeometryError):
        DomainSpec(rectangle(1, 1), 0.1, s0=0.7)
    with pytest.raises(GeometryError):
        DomainSpec(rectangle(1, 1), 0.1, radial=True)
    with pytest.warns(UserWarning):
        build_mesh(DomainSpec(rectangle(1, 1), 0.5))


def test_radial_volumes_are_areas():
    m = _MESHES["radial"]
    assert m.total_volume == pytest.approx(math.pi, rel=1e-14)
