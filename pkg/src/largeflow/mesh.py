"""Cell-centred finite-volume meshes, fields and discrete calculus.

A cell belongs to the mesh when its centre lies strictly inside the
domain. Faces between two member cells are interior faces; every other
face of a member cell is a boundary face, placed at distance ``h/2`` from
the cell centre and oriented outward.

Discrete inner products use cell volumes for fields and
``area * distance`` for face quantities, which makes ``divergence`` the
exact negative adjoint of ``gradient`` on zero-boundary fields.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .geometry import Disk, GeometryError, OutsideDomain, Polygon

__all__ = [
    "DomainSpec", "Mesh", "Field", "FaceVector", "EmptyDomain", "MeshMismatch",
    "BadRange", "OutsideDomain", "build_mesh", "build_interval_mesh",
    "boundary_distance", "gradient", "divergence", "truncate", "truncate_values",
    "p_energy", "write_field_csv", "read_field_csv",
]


class EmptyDomain(ValueError):
    """No cell centre falls inside the domain."""


class MeshMismatch(ValueError):
    """Operands live on different meshes."""


class BadRange(ValueError):
    """Truncation bounds with a > b."""


@dataclass(frozen=True)
class DomainSpec:
    """Domain geometry plus grid spacing.

    Attributes:
        shape: a ``Disk`` or convex ``Polygon``.
        h: grid spacing.
        s0: interior-ball radius; defaults to the inradius of the shape.
        radial: use the 1D radial discretisation (disks only).
    """

    shape: Disk | Polygon
    h: float
    s0: float | None = None
    radial: bool = False

    def __post_init__(self):
        if not (self.h > 0 and math.isfinite(self.h)):
            raise GeometryError(f"spacing must be positive, got {self.h}")
        inr = self.shape.inradius
        if self.s0 is None:
            object.__setattr__(self, "s0", inr)
        elif not (0 < self.s0 <= inr * (1 + 1e-12)):
            raise GeometryError(f"s0 must lie in (0, inradius={inr}], got {self.s0}")
        if self.radial and not isinstance(self.shape, Disk):
            raise GeometryError("radial mode requires a disk")

    @property
    def inradius(self) -> float:
        return self.shape.inradius

    @property
    def diameter(self) -> float:
        return self.shape.diameter

    @property
    def is_resolved(self) -> bool:
        """At least 8 cells across the inradius."""
        return self.inradius / self.h >= 8 - 1e-9

    def describe(self) -> str:
        return self.shape.describe()


@dataclass(frozen=True, eq=False)
class Mesh:
    """Finite-volume mesh.

    ``kind`` is ``"cartesian"`` (2D), ``"radial"`` (disk, 1D in the radius)
    or ``"interval"`` (1D test meshes). Face ``f`` joins cell
    ``face_left[f]`` to ``face_right[f]``; ``face_right[f] == -1`` marks a
    boundary face, whose orientation is outward.
    """

    kind: str
    h: float
    centers: np.ndarray
    cell_volume: np.ndarray
    face_left: np.ndarray
    face_right: np.ndarray
    face_area: np.ndarray
    face_dist: np.ndarray
    face_center: np.ndarray
    face_normal: np.ndarray
    boundary_normal: np.ndarray
    cell_depth: np.ndarray
    domain: DomainSpec | None = None

    def __post_init__(self):
        for name in ("centers", "cell_volume", "face_left", "face_right", "face_area",
                     "face_dist", "face_center", "face_normal", "boundary_normal", "cell_depth"):
            getattr(self, name).flags.writeable = False

    @property
    def n_cells(self) -> int:
        return len(self.cell_volume)

    @property
    def n_faces(self) -> int:
        return len(self.face_left)

    @property
    def radial(self) -> bool:
        return self.kind == "radial"

    @property
    def is_chain(self) -> bool:
        """Cells form a line, interior faces join consecutive cells."""
        return self.kind in ("radial", "interval")

    @cached_property
    def boundary_faces(self) -> np.ndarray:
        idx = np.flatnonzero(self.face_right < 0)
        idx.flags.writeable = False
        return idx

    @cached_property
    def interior_faces(self) -> np.ndarray:
        idx = np.flatnonzero(self.face_right >= 0)
        idx.flags.writeable = False
        return idx

    @cached_property
    def face_weight(self) -> np.ndarray:
        """Quadrature weight of a face value: area times centre distance."""
        w = self.face_area * self.face_dist
        w.flags.writeable = False
        return w

    @cached_property
    def grad_matrix(self) -> sp.csr_matrix:
        """Sparse map from cell values to face differences (zero boundary)."""
        nf = self.n_faces
        inv = 1.0 / self.face_dist
        rows = [np.arange(nf)]
        cols = [self.face_left]
        vals = [-inv]
        inner = self.interior_faces
        rows.append(inner)
        cols.append(self.face_right[inner])
        vals.append(inv[inner])
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(nf, self.n_cells),
        )

    @property
    def total_volume(self) -> float:
        return float(np.sum(self.cell_volume))

    def coordinates(self) -> np.ndarray:
        """Cell centres as (M, 2) points (radial cells sit on the x axis)."""
        return self.centers

    def face_coordinates(self) -> np.ndarray:
        return self.face_center


@dataclass(frozen=True, eq=False)
class Field:
    """Cell values on a mesh at time ``t`` (read-only)."""

    mesh: Mesh
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(-1)
        if len(vals) != self.mesh.n_cells:
            raise MeshMismatch(f"{len(vals)} values for {self.mesh.n_cells} cells")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def with_values(self, values, t=None) -> "Field":
        return Field(self.mesh, values, self.t if t is None else t)

    def l1(self, mask=None) -> float:
        vol = self.mesh.cell_volume
        vals = np.abs(self.values)
        if mask is not None:
            vol, vals = vol[mask], vals[mask]
        return float(np.sum(vol * vals))

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def inner(self, other: "Field") -> float:
        _same_mesh(self.mesh, other.mesh)
        return float(np.sum(self.mesh.cell_volume * self.values * other.values))


@dataclass(frozen=True, eq=False)
class FaceVector:
    """Normal components on every face (boundary faces oriented outward)."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(-1)
        if len(vals) != self.mesh.n_faces:
            raise MeshMismatch(f"{len(vals)} values for {self.mesh.n_faces} faces")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def inner(self, other: "FaceVector") -> float:
        _same_mesh(self.mesh, other.mesh)
        return float(np.sum(self.mesh.face_weight * self.values * other.values))

    @property
    def boundary_values(self) -> np.ndarray:
        return self.values[self.mesh.boundary_faces]


def _same_mesh(a: Mesh, b: Mesh):
    if a is not b:
        raise MeshMismatch("operands are defined on different meshes")


def build_mesh(domain: DomainSpec) -> Mesh:
    """Build the cell-centred mesh of ``domain``.

    Raises:
        EmptyDomain: no cell centre lies inside the domain.
    """
    if not domain.is_resolved:
        warnings.warn(
            f"spacing {domain.h} gives fewer than 8 cells across the inradius",
            stacklevel=2,
        )
    if domain.radial:
        return _build_radial(domain)
    return _build_cartesian(domain)


def _build_radial(domain: DomainSpec) -> Mesh:
    shape = domain.shape
    R = shape.radius
    m = int(round(R / domain.h))
    if m < 1:
        raise EmptyDomain(f"radius {R} holds no radial cell of width {domain.h}")
    h = R / m
    rho = (np.arange(m) + 0.5) * h
    rface = (np.arange(m) + 1.0) * h
    two_pi = 2.0 * math.pi
    left = np.arange(m)
    right = np.append(np.arange(1, m), -1)
    dist = np.full(m, h)
    dist[-1] = 0.5 * h
    centers = np.column_stack([rho, np.zeros(m)])
    return Mesh(
        kind="radial",
        h=h,
        centers=centers,
        cell_volume=two_pi * rho * h,
        face_left=left,
        face_right=right,
        face_area=two_pi * rface,
        face_dist=dist,
        face_center=np.column_stack([rface, np.zeros(m)]),
        face_normal=np.tile([1.0, 0.0], (m, 1)),
        boundary_normal=np.array([[1.0, 0.0]]),
        cell_depth=R - rho,
        domain=domain,
    )


def _build_cartesian(domain: DomainSpec) -> Mesh:
    shape = domain.shape
    h = domain.h
    lo, hi = shape.bbox()
    ext = hi - lo
    counts = np.floor(ext / h + 1e-9).astype(int)
    if np.any(counts < 1):
        raise EmptyDomain(f"spacing {h} exceeds the domain extent")
    start = lo + 0.5 * (ext - counts * h) + 0.5 * h
    xs = start[0] + h * np.arange(counts[0])
    ys = start[1] + h * np.arange(counts[1])
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    inside = shape.contains(pts)
    if not np.any(inside):
        raise EmptyDomain("no cell centre lies inside the domain")
    index = np.full(counts[0] * counts[1], -1)
    index[inside] = np.arange(int(inside.sum()))
    index = index.reshape(counts[0], counts[1])
    centers = pts[inside]
    ii, jj = np.nonzero(index >= 0)
    order = index[ii, jj]
    ii, jj = ii[np.argsort(order)], jj[np.argsort(order)]

    lefts, rights, normals = [], [], []
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        ni, nj = ii + di, jj + dj
        valid = (ni >= 0) & (ni < counts[0]) & (nj >= 0) & (nj < counts[1])
        nb = np.full(len(ii), -1)
        nb[valid] = index[ni[valid], nj[valid]]
        me = index[ii, jj]
        if di + dj > 0:
            # interior faces are stored once, from the +x/+y side
            take = nb >= 0
            lefts.append(me[take])
            rights.append(nb[take])
            normals.append(np.tile([float(di), float(dj)], (int(take.sum()), 1)))
        take = nb < 0
        lefts.append(me[take])
        rights.append(np.full(int(take.sum()), -1))
        normals.append(np.tile([float(di), float(dj)], (int(take.sum()), 1)))
    left = np.concatenate(lefts)
    right = np.concatenate(rights)
    normal = np.concatenate(normals)
    bnd = right < 0
    dist = np.where(bnd, 0.5 * h, h)
    fcenter = centers[left] + normal * np.where(bnd, 0.5 * h, 0.5 * h)[:, None]
    return Mesh(
        kind="cartesian",
        h=h,
        centers=centers,
        cell_volume=np.full(len(centers), h * h),
        face_left=left,
        face_right=right,
        face_area=np.full(len(left), h),
        face_dist=dist,
        face_center=fcenter,
        face_normal=normal,
        boundary_normal=np.atleast_2d(shape.outward_normal(fcenter[bnd])),
        cell_depth=np.asarray(shape.signed_depth(centers)),
        domain=domain,
    )


def build_interval_mesh(n_cells: int, h: float = 1.0) -> Mesh:
    """1D mesh of ``n_cells`` unit-area cells on [0, n_cells*h] (two boundary faces)."""
    if n_cells < 1:
        raise EmptyDomain("interval mesh needs at least one cell")
    m = n_cells
    x = (np.arange(m) + 0.5) * h
    left = np.concatenate([np.arange(m - 1), [0, m - 1]])
    right = np.concatenate([np.arange(1, m), [-1, -1]])
    dist = np.concatenate([np.full(m - 1, h), [0.5 * h, 0.5 * h]])
    normal = np.concatenate([np.tile([1.0, 0.0], (m - 1, 1)), [[-1.0, 0.0], [1.0, 0.0]]])
    fx = np.concatenate([(np.arange(m - 1) + 1.0) * h, [0.0, m * h]])
    return Mesh(
        kind="interval",
        h=h,
        centers=np.column_stack([x, np.zeros(m)]),
        cell_volume=np.full(m, h),
        face_left=left,
        face_right=right,
        face_area=np.ones(m + 1),
        face_dist=dist,
        face_center=np.column_stack([fx, np.zeros(m + 1)]),
        face_normal=normal,
        boundary_normal=np.array([[-1.0, 0.0], [1.0, 0.0]]),
        cell_depth=np.minimum(x, m * h - x),
    )


def boundary_distance(domain: DomainSpec, point) -> float:
    """Euclidean distance from an interior point to the boundary.

    Raises:
        OutsideDomain: the point is not strictly inside.
    """
    depth = domain.shape.signed_depth(np.asarray(point, dtype=float))
    if not depth > 0:
        raise OutsideDomain(f"point {tuple(point)} is not inside the domain")
    return float(depth)


def _boundary_array(mesh: Mesh, boundary_values) -> np.ndarray:
    nb = len(mesh.boundary_faces)
    vals = np.broadcast_to(np.asarray(boundary_values, dtype=float), (nb,))
    return vals


def face_gradient(mesh: Mesh, u: np.ndarray, boundary_values=0.0) -> np.ndarray:
    """Two-point face differences of raw cell values."""
    g = mesh.grad_matrix @ u
    bf = mesh.boundary_faces
    g[bf] += _boundary_array(mesh, boundary_values) / mesh.face_dist[bf]
    return g


def cell_divergence(mesh: Mesh, q: np.ndarray) -> np.ndarray:
    """Divergence of raw face normal components."""
    return -(mesh.grad_matrix.T @ (mesh.face_weight * q)) / mesh.cell_volume


def gradient(u: Field, boundary_values=0.0) -> FaceVector:
    """Face gradient; boundary faces see the Dirichlet value at distance h/2."""
    return FaceVector(u.mesh, face_gradient(u.mesh, u.values, boundary_values))


def divergence(q: FaceVector, boundary_flux=None) -> Field:
    """Cell divergence of a face vector.

    ``boundary_flux`` optionally replaces the outward components on the
    boundary faces.
    """
    vals = np.array(q.values)
    if boundary_flux is not None:
        vals[q.mesh.boundary_faces] = _boundary_array(q.mesh, boundary_flux)
    return Field(q.mesh, cell_divergence(q.mesh, vals))


def truncate_values(values, a: float, b: float):
    if a > b:
        raise BadRange(f"truncation range [{a}, {b}] is empty")
    return np.clip(values, a, b)


def truncate(u: Field, a: float, b: float) -> Field:
    """Pointwise clamp to [a, b]."""
    return u.with_values(truncate_values(u.values, a, b))


def p_energy(fields: Field | Sequence[Field], p: float, k: float, dt=1.0,
             boundary_value: float | None = None) -> float:
    """Space-time sum of |grad T_k(u)|^p over snapshots.

    Each face contributes ``|g|^p * area * dist * dt`` (``h**2 * dt`` on a
    uniform 2D grid, ``h * dt`` on unit-area 1D meshes). Boundary faces are
    skipped unless a Dirichlet ``boundary_value`` is given, which is then
    truncated like the field.

    Args:
        fields: one field or a sequence of snapshots on one mesh.
        p: exponent, at least 1.
        k: truncation level, positive.
        dt: scalar or per-snapshot time weights.
    """
    if p < 1 or not k > 0:
        raise ValueError("p_energy needs p >= 1 and k > 0")
    seq = [fields] if isinstance(fields, Field) else list(fields)
    if not seq:
        return 0.0
    mesh = seq[0].mesh
    weights = np.broadcast_to(np.asarray(dt, dtype=float), (len(seq),))
    faces = mesh.interior_faces if boundary_value is None else np.arange(mesh.n_faces)
    bval = 0.0 if boundary_value is None else float(np.clip(boundary_value, -k, k))
    fw = mesh.face_weight[faces]
    total = 0.0
    for fld, w in zip(seq, weights):
        _same_mesh(mesh, fld.mesh)
        g = face_gradient(mesh, np.clip(fld.values, -k, k), bval)[faces]
        total += w * float(np.sum(fw * np.abs(g) ** p))
    return total


def write_field_csv(path, fld: Field) -> None:
    """Snapshot file: ``x,y,value`` (``rho,value`` in radial mode), 17 significant digits."""
    mesh = fld.mesh
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if mesh.radial:
            w.writerow(["rho", "value"])
            for r, v in zip(mesh.centers[:, 0], fld.values):
                w.writerow([f"{r:.17g}", f"{v:.17g}"])
        else:
            w.writerow(["x", "y", "value"])
            for (x, y), v in zip(mesh.centers, fld.values):
                w.writerow([f"{x:.17g}", f"{y:.17g}", f"{v:.17g}"])


def read_field_csv(path, mesh: Mesh, t: float = 0.0) -> Field:
    data = np.genfromtxt(path, delimiter=",", names=True)
    data = np.atleast_1d(data)
    coords = ("rho",) if mesh.radial else ("x", "y")
    if len(data) != mesh.n_cells:
        raise MeshMismatch(f"{path}: {len(data)} rows for {mesh.n_cells} cells")
    for j, name in enumerate(coords):
        if np.max(np.abs(data[name] - mesh.centers[:, j])) > 1e-9 * max(1.0, mesh.h):
            raise MeshMismatch(f"{path}: cell coordinates do not match the mesh")
    return Field(mesh, data["value"], t)
