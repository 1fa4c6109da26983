"""Convex planar shapes: disks and strictly convex polygons.

Both shape classes expose the same small surface (area, perimeter,
inradius, membership, distance to the boundary, inward erosion) so the
mesh builder and the Cheeger-set routines can treat them uniformly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class GeometryError(ValueError):
    """Invalid shape description."""


class EmptyShape(GeometryError):
    """An erosion removed every point of the shape."""


class OutsideDomain(GeometryError):
    """A query point does not lie strictly inside the shape."""


def _as_points(points):
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    return np.atleast_2d(pts), single


@dataclass(frozen=True)
class Disk:
    radius: float
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise GeometryError(f"disk radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    @property
    def area(self) -> float:
        return math.pi * self.radius * self.radius

    @property
    def perimeter(self) -> float:
        return 2.0 * math.pi * self.radius

    @property
    def inradius(self) -> float:
        return self.radius

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def bbox(self):
        cx, cy = self.center
        r = self.radius
        return np.array([cx - r, cy - r]), np.array([cx + r, cy + r])

    def _offsets(self, points):
        pts, single = _as_points(points)
        return pts - np.asarray(self.center), single

    def contains(self, points):
        """Strict interior membership."""
        d, single = self._offsets(points)
        inside = np.hypot(d[:, 0], d[:, 1]) < self.radius
        return bool(inside[0]) if single else inside

    def signed_depth(self, points):
        """Distance to the boundary, positive inside and negative outside."""
        d, single = self._offsets(points)
        depth = self.radius - np.hypot(d[:, 0], d[:, 1])
        return float(depth[0]) if single else depth

    def distance_to(self, points):
        """Euclidean distance from points to the closed disk (0 inside)."""
        depth = self.signed_depth(points)
        return np.maximum(-np.asarray(depth), 0.0) if np.ndim(depth) else max(-depth, 0.0)

    def outward_normal(self, points):
        d, single = self._offsets(points)
        norm = np.hypot(d[:, 0], d[:, 1])
        norm[norm == 0] = 1.0
        nrm = d / norm[:, None]
        return nrm[0] if single else nrm

    def erode(self, r: float) -> "Disk":
        if r < 0:
            raise GeometryError("erosion radius must be nonnegative")
        if r >= self.radius:
            raise EmptyShape(f"disk of radius {self.radius} vanishes at erosion {r}")
        return Disk(self.radius - r, self.center)

    def describe(self) -> str:
        if self.center == (0.0, 0.0):
            return f"disk:{self.radius!r}"
        return f"disk:{self.radius!r}@{self.center[0]!r},{self.center[1]!r}"


@dataclass(frozen=True, eq=False)
class Polygon:
    """Strictly convex polygon with counter-clockwise vertices.

    The interior is the intersection of the open half-planes
    ``normals[i] . x < offsets[i]``, one per edge.
    """

    vertices: np.ndarray
    label: str | None = None
    normals: np.ndarray = field(init=False, repr=False)
    offsets: np.ndarray = field(init=False, repr=False)
    _cache: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise GeometryError("polygon needs at least three 2D vertices")
        if not np.all(np.isfinite(v)):
            raise GeometryError("polygon vertices must be finite")
        edges = np.roll(v, -1, axis=0) - v
        nxt = np.roll(edges, -1, axis=0)
        cross = edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0]
        if np.any(cross <= 0):
            raise GeometryError("polygon must be strictly convex and counter-clockwise")
        length = np.hypot(edges[:, 0], edges[:, 1])
        normals = np.column_stack([edges[:, 1], -edges[:, 0]]) / length[:, None]
        v.flags.writeable = False
        normals.flags.writeable = False
        offsets = np.einsum("ij,ij->i", normals, v)
        offsets.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "offsets", offsets)

    @property
    def area(self) -> float:
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    @property
    def perimeter(self) -> float:
        e = np.roll(self.vertices, -1, axis=0) - self.vertices
        return float(np.sum(np.hypot(e[:, 0], e[:, 1])))

    @property
    def diameter(self) -> float:
        if "diameter" not in self._cache:
            v = self.vertices
            d = v[:, None, :] - v[None, :, :]
            self._cache["diameter"] = float(np.sqrt(np.max(np.sum(d * d, axis=-1))))
        return self._cache["diameter"]

    @property
    def inradius(self) -> float:
        if "inradius" not in self._cache:
            self._cache["inradius"] = _polygon_inradius(self)
        return self._cache["inradius"]

    def bbox(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def signed_depth(self, points):
        """Distance to the boundary inside; negative outside (a lower bound there)."""
        pts, single = _as_points(points)
        depth = np.min(self.offsets[None, :] - pts @ self.normals.T, axis=1)
        return float(depth[0]) if single else depth

    def contains(self, points):
        depth = self.signed_depth(points)
        return depth > 0

    def distance_to(self, points):
        """Euclidean distance from points to the closed polygon (0 inside)."""
        pts, single = _as_points(points)
        a = self.vertices
        b = np.roll(a, -1, axis=0)
        ab = b - a
        rel = pts[:, None, :] - a[None, :, :]
        s = np.clip(np.einsum("pkj,kj->pk", rel, ab) / np.sum(ab * ab, axis=1), 0.0, 1.0)
        foot = a[None, :, :] + s[..., None] * ab[None, :, :]
        dist = np.min(np.linalg.norm(pts[:, None, :] - foot, axis=-1), axis=1)
        dist = np.where(self.signed_depth(pts) > 0, 0.0, dist)
        return float(dist[0]) if single else dist

    def outward_normal(self, points):
        """Normal of the nearest edge (edge-line distance)."""
        pts, single = _as_points(points)
        idx = np.argmin(self.offsets[None, :] - pts @ self.normals.T, axis=1)
        nrm = self.normals[idx]
        return nrm[0] if single else nrm

    def clip(self, normal, offset):
        """Vertices of the part with ``normal . x <= offset`` (possibly degenerate)."""
        return _clip_halfplane(self.vertices, np.asarray(normal, float), float(offset))

    def erode(self, r: float) -> "Polygon":
        """Inward offset by ``r``: intersection of the shifted edge half-planes."""
        if r < 0:
            raise GeometryError("erosion radius must be nonnegative")
        if r == 0:
            return self
        pts = self.vertices
        for nrm, off in zip(self.normals, self.offsets):
            pts = _clip_halfplane(pts, nrm, off - r)
            if len(pts) == 0:
                break
        pts = _clean(pts, scale=self.diameter)
        if len(pts) < 3 or _shoelace(pts) <= 1e-14 * self.diameter ** 2:
            raise EmptyShape(f"polygon vanishes at erosion {r}")
        return Polygon(pts)

    def eroded_area(self, r: float) -> float:
        """Area of the erosion, 0 when it is empty or degenerate."""
        try:
            return self.erode(r).area
        except EmptyShape:
            return 0.0

    def describe(self) -> str:
        if self.label:
            return self.label
        return "polygon:" + ";".join(f"{x!r},{y!r}" for x, y in self.vertices)


def rectangle(width: float, height: float, origin=(0.0, 0.0)) -> Polygon:
    """Axis-aligned rectangle with lower-left corner at ``origin``."""
    if not (width > 0 and height > 0):
        raise GeometryError("rectangle sides must be positive")
    x0, y0 = float(origin[0]), float(origin[1])
    verts = [(x0, y0), (x0 + width, y0), (x0 + width, y0 + height), (x0, y0 + height)]
    if x0 == 0.0 and y0 == 0.0:
        label = f"square:{width!r}" if width == height else f"rect:{width!r}x{height!r}"
    else:
        label = None
    return Polygon(np.array(verts), label=label)


def _shoelace(pts) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _clip_halfplane(pts, normal, offset):
    """Sutherland-Hodgman clip of a convex vertex loop against normal.x <= offset."""
    if len(pts) == 0:
        return pts
    vals = (pts @ normal - offset).tolist()
    xy = pts.tolist()
    out = []
    k = len(xy)
    for i in range(k):
        j = i + 1 if i + 1 < k else 0
        fa, fb = vals[i], vals[j]
        if fa <= 0:
            out.append(xy[i])
        if (fa < 0 < fb) or (fb < 0 < fa):
            s = fa / (fa - fb)
            (ax, ay), (bx, by) = xy[i], xy[j]
            out.append([ax + s * (bx - ax), ay + s * (by - ay)])
    return np.array(out) if out else np.empty((0, 2))


def _clean(pts, scale: float):
    """Drop repeated and collinear vertices left behind by clipping."""
    tol = 1e-13 * max(scale, 1.0)
    changed = True
    while changed and len(pts) >= 3:
        changed = False
        keep = []
        k = len(pts)
        for i in range(k):
            prev_pt = pts[i - 1]
            nxt_pt = pts[(i + 1) % k]
            e1 = pts[i] - prev_pt
            e2 = nxt_pt - pts[i]
            if np.hypot(*e1) <= tol:
                changed = True
                continue
            cross = e1[0] * e2[1] - e1[1] * e2[0]
            if cross <= tol * max(np.hypot(*e1), np.hypot(*e2)):
                changed = True
                continue
            keep.append(pts[i])
        pts = np.array(keep) if keep else np.empty((0, 2))
    return pts


def _polygon_inradius(poly: Polygon) -> float:
    """Largest r whose shifted half-planes still intersect, by bisection."""
    lo = 0.0
    hi = 0.5 * min(poly.bbox()[1] - poly.bbox()[0])
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        pts = poly.vertices
        for nrm, off in zip(poly.normals, poly.offsets):
            pts = _clip_halfplane(pts, nrm, off - mid)
        if len(pts) > 0:
            lo = mid
        else:
            hi = mid
    return float(lo)


ConvexShape = Disk | Polygon


def parse_shape(text: str):
    """Parse ``disk:R``, ``disk:R@x,y``, ``square:a``, ``rect:WxH`` or ``polygon:x,y;x,y;...``."""
    kind, _, rest = text.strip().partition(":")
    kind = kind.lower()
    try:
        if kind == "disk":
            rad, _, ctr = rest.partition("@")
            center = tuple(float(c) for c in ctr.split(",")) if ctr else (0.0, 0.0)
            return Disk(float(rad), center)
        if kind == "square":
            a = float(rest)
            return rectangle(a, a)
        if kind in ("rect", "rectangle"):
            w, _, hgt = rest.lower().partition("x")
            return rectangle(float(w), float(hgt))
        if kind == "polygon":
            verts = [tuple(float(c) for c in pair.split(",")) for pair in rest.split(";") if pair]
            return Polygon(np.array(verts), label=text.strip())
    except (TypeError, ValueError) as exc:
        if isinstance(exc, GeometryError):
            raise
        raise GeometryError(f"cannot parse shape {text!r}: {exc}") from exc
    raise GeometryError(f"unknown shape kind {kind!r}")
