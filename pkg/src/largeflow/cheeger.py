"""Cheeger sets of convex planar shapes and the large solution of the TV flow.

For a convex set ``C`` the minimiser of ``Per(F) - lam |F|`` over
``F`` inside ``C`` is built as the morphological opening of ``C`` with
radius ``1/lam`` (a core polygon or disk rounded by that radius). The
Cheeger radius solves ``|C eroded by r| = pi r^2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Disk, EmptyShape, OutsideDomain, Polygon

__all__ = [
    "EmptyShape", "UNBOUNDED", "CheegerResult", "Opening", "erode", "opening_measures",
    "cheeger_constant", "c_lambda", "h_field", "tv_large_solution", "variational_gaps",
]

UNBOUNDED = math.inf
"""Returned by :func:`h_field` for points no opening reaches (polygon corners)."""


def erode(shape, r: float):
    """Inward offset of ``shape`` by ``r``; raises ``EmptyShape`` when nothing is left."""
    return shape.erode(r)


@dataclass(frozen=True)
class Opening:
    """Union of all balls of radius ``radius`` inside a shape: ``core`` dilated by ``radius``."""

    core: Disk | Polygon
    radius: float

    @property
    def area(self) -> float:
        return self.core.area + self.core.perimeter * self.radius + math.pi * self.radius ** 2

    @property
    def perimeter(self) -> float:
        return self.core.perimeter + 2.0 * math.pi * self.radius

    def contains(self, points, slack: float = 0.0):
        return np.asarray(self.core.distance_to(points)) <= self.radius * (1 + slack)

    def functional(self, lam: float) -> float:
        return self.perimeter - lam * self.area


def opening_measures(shape, r: float) -> tuple[float, float]:
    """(area, perimeter) of the opening with radius ``r`` by the Steiner formulas."""
    op = Opening(erode(shape, r), r)
    return op.area, op.perimeter


@dataclass(frozen=True)
class CheegerResult:
    r_star: float
    h: float
    core: Disk | Polygon
    calibrable: bool

    @property
    def opening(self) -> Opening:
        return Opening(self.core, self.r_star)


def _area_gap(shape, r: float) -> float:
    if isinstance(shape, Polygon):
        area = shape.eroded_area(r)
    else:
        area = (shape.radius - r) ** 2 * math.pi if r < shape.radius else 0.0
    return area - math.pi * r * r


def cheeger_constant(shape, tol: float = 1e-12) -> CheegerResult:
    """Cheeger radius r* (root of |C eroded by r| = pi r^2) and h = 1/r*.

    Polygons are immutable, so the result is memoised on the shape per ``tol``.
    """
    cache = getattr(shape, "_cache", None)
    key = ("cheeger", tol)
    if cache is not None and key in cache:
        return cache[key]
    res = _cheeger_bisection(shape, tol)
    if cache is not None:
        cache[key] = res
    return res


def _cheeger_bisection(shape, tol: float) -> CheegerResult:
    lo, hi = 0.0, shape.inradius
    if isinstance(shape, Disk):
        hi = shape.radius
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        gap = _area_gap(shape, mid)
        if gap == 0.0:
            lo = hi = mid
            break
        if gap > 0:
            lo = mid
        else:
            hi = mid
    r_star = 0.5 * (lo + hi)
    core = erode(shape, r_star)
    area = Opening(core, r_star).area
    calibrable = abs(area - shape.area) <= 1e-12 * shape.area
    return CheegerResult(r_star=r_star, h=1.0 / r_star, core=core, calibrable=calibrable)


def c_lambda(shape, lam: float, cheeger: CheegerResult | None = None) -> Opening | None:
    """Minimiser of Per - lam*Area inside ``shape``; ``None`` when lam < h."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    res = cheeger or cheeger_constant(shape)
    if lam < res.h * (1.0 - 1e-12):
        return None
    radius = min(1.0 / lam, res.r_star)
    if isinstance(shape, Disk):
        # every opening of a disk with radius below R is the disk itself
        return Opening(Disk(shape.radius - radius, shape.center), radius)
    return Opening(erode(shape, radius), radius)


def _member(shape, point, lam: float, r_star: float) -> bool:
    radius = min(1.0 / lam, r_star)
    try:
        core = erode(shape, radius)
    except EmptyShape:
        return False
    return float(core.distance_to(point)) <= radius * (1 + 1e-14)


def h_field(shape, point, lam_cap: float | None = None, cheeger: CheegerResult | None = None,
            rtol: float = 1e-13) -> float:
    """inf{lam : point in C_lam}, or ``UNBOUNDED`` beyond ``lam_cap`` (default 1e6*h).

    Raises:
        OutsideDomain: point not inside the shape.
    """
    point = np.asarray(point, dtype=float)
    if not shape.contains(point):
        raise OutsideDomain(f"point {tuple(point)} is not inside the shape")
    res = cheeger or cheeger_constant(shape)
    cap = 1e6 * res.h if lam_cap is None else lam_cap
    if _member(shape, point, res.h, res.r_star):
        return res.h
    if not _member(shape, point, cap, res.r_star):
        return UNBOUNDED
    lo, hi = math.log(res.h), math.log(cap)
    while hi - lo > rtol:
        mid = 0.5 * (lo + hi)
        if _member(shape, point, math.exp(mid), res.r_star):
            hi = mid
        else:
            lo = mid
    return math.exp(hi)


def tv_large_solution(shape, t: float, point, **kwargs) -> float:
    """Large solution of the TV flow on a convex set: h_field(point) * t."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    hv = h_field(shape, point, **kwargs)
    if t == 0:
        return 0.0
    return hv * t


def variational_gaps(shape, lam: float, rel: float = 1e-3) -> dict:
    """Functional of C_lam minus the functional of each comparison candidate.

    Candidates: the shape itself, the eroded core alone, openings at radii
    ``(1 +/- rel)/lam`` and inscribed disks (inradius and ``1/lam``). All
    gaps should be nonpositive for a true minimiser.
    """
    res = cheeger_constant(shape)
    best = c_lambda(shape, lam, res)
    if best is None:
        raise ValueError("C_lambda is empty for lambda below the Cheeger constant")
    value = best.functional(lam)
    cands = {"shape": shape.perimeter - lam * shape.area,
             "core": best.core.perimeter - lam * best.core.area}
    for tag, fac in (("opening_minus", 1 - rel), ("opening_plus", 1 + rel)):
        rad = best.radius * fac
        try:
            cands[tag] = Opening(erode(shape, rad), rad).functional(lam)
        except EmptyShape:
            pass
    for tag, rad in (("ball_inradius", shape.inradius), ("ball_radius", min(1.0 / lam, shape.inradius))):
        cands[tag] = 2 * math.pi * rad - lam * math.pi * rad * rad
    return {k: value - v for k, v in cands.items()}
