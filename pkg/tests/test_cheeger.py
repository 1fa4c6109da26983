import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from largeflow.cheeger import (UNBOUNDED, EmptyShape, c_lambda, cheeger_constant, erode, h_field,
                               opening_measures, tv_large_solution, variational_gaps)
from largeflow.geometry import Disk, OutsideDomain, Polygon, rectangle

SQUARE = rectangle(1, 1)
RECT = rectangle(2, 1)
TRIANGLE = Polygon(np.array([[0, 0], [2, 0], [0.5, 1.5]]))
HEXAGON = Polygon(np.array([[math.cos(a), math.sin(a)] for a in np.arange(6) * math.pi / 3]))


def test_erode_examples():
    core = erode(SQUARE, 0.25)
    assert core.area == pytest.approx(0.25, abs=1e-15)
    np.testing.assert_allclose(np.sort(core.vertices, axis=0), [[0.25, 0.25], [0.25, 0.25], [0.75, 0.75], [0.75, 0.75]])
    assert erode(Disk(1.0), 0.3).radius == pytest.approx(0.7)
    with pytest.raises(EmptyShape):
        erode(SQUARE, 0.6)
    with pytest.raises(EmptyShape):
        erode(Disk(1.0), 1.0)


def test_opening_measures_monte_carlo():
    area, per = opening_measures(SQUARE, 0.25)
    assert area == pytest.approx(1 - (4 - math.pi) * 0.0625, rel=1e-14)
    rng = np.random.default_rng(11)
    pts = rng.uniform(0, 1, size=(400_000, 2))
    core = erode(SQUARE, 0.25)
    inside = core.distance_to(pts) <= 0.25
    # binomial standard error ~ 3.6e-4
    assert abs(inside.mean() - area) < 2e-3
    assert per == pytest.approx(2 + 2 * math.pi * 0.25)


def test_opening_limits():
    assert opening_measures(Disk(1.0), 0.37) == pytest.approx((math.pi, 2 * math.pi))
    assert opening_measures(SQUARE, 1e-9) == pytest.approx((1.0, 4.0), abs=1e-8)


def test_cheeger_benchmarks():
    disk = cheeger_constant(Disk(1.0))
    assert disk.r_star == 0.5 and abs(disk.h - 2.0) <= 1e-12 and disk.calibrable
    sq = cheeger_constant(SQUARE)
    assert abs(sq.h - (2 + math.sqrt(math.pi))) <= 1e-9
    assert not sq.calibrable
    rect = cheeger_constant(RECT)
    root = brentq(lambda r: (2 - 2 * r) * (1 - 2 * r) - math.pi * r * r, 0.0, 0.5, xtol=1e-15)
    assert rect.r_star == pytest.approx(root, abs=1e-11)


@pytest.mark.parametrize("shape", [Disk(1.0), Disk(0.3, (1, 2)), SQUARE, RECT, TRIANGLE, HEXAGON])
def test_fixed_point_and_h(shape):
    res = cheeger_constant(shape)
    assert res.h == 1 / res.r_star
    assert abs(res.core.area - math.pi * res.r_star ** 2) <= 1e-10 * math.pi * res.r_star ** 2


@pytest.mark.parametrize("shape", [Disk(1.0), SQUARE, RECT, TRIANGLE, HEXAGON])
@pytest.mark.parametrize("factor", [1.0, 1.001, 1.3, 3.0, 50.0])
def test_variational_candidates(shape, factor):
    lam = cheeger_constant(shape).h * factor
    gaps = variational_gaps(shape, lam)
    assert max(gaps.values()) <= 1e-9


def test_c_lambda_examples():
    full = c_lambda(Disk(1.0), 4.0)
    assert full.area == pytest.approx(math.pi) and full.perimeter == pytest.approx(2 * math.pi)
    assert c_lambda(SQUARE, 1.0) is None
    res = cheeger_constant(SQUARE)
    rounded = c_lambda(SQUARE, res.h)
    assert rounded.radius == pytest.approx(1 / (2 + math.sqrt(math.pi)), rel=1e-11)
    assert rounded.functional(res.h) == pytest.approx(0.0, abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.floats(1.0, 40.0), st.floats(1.0, 40.0), st.integers(0, 1000))
def test_c_lambda_increasing(f1, f2, seed):
    h = cheeger_constant(RECT).h
    lo, hi = sorted((h * f1, h * f2))
    small, big = c_lambda(RECT, lo), c_lambda(RECT, hi)
    pts = np.random.default_rng(seed).uniform([0, 0], [2, 1], size=(2000, 2))
    assert not np.any(small.contains(pts) & ~big.contains(pts, slack=1e-12))


def test_h_field_examples():
    assert h_field(Disk(1.0), (0.3, -0.4)) == 2.0
    assert h_field(SQUARE, (0.5, 0.5)) == pytest.approx(2 + math.sqrt(math.pi), abs=1e-9)
    a = 0.05
    assert h_field(SQUARE, (a, a)) == pytest.approx(1 / (a * (2 + math.sqrt(2))), rel=1e-10)
    assert h_field(SQUARE, (1e-9, 1e-9)) == UNBOUNDED
    with pytest.raises(OutsideDomain):
        h_field(SQUARE, (1.5, 0.5))


def test_h_field_diagonal_brute_force():
    # dense radius sweep with the same membership rule, independent of the bisection
    a = 0.05
    radii = np.linspace(0.01, cheeger_constant(SQUARE).r_star, 200_001)
    member = [r for r in radii if np.hypot(a - r, a - r) <= r]  # core corner at (r, r)
    assert h_field(SQUARE, (a, a)) == pytest.approx(1 / max(member), rel=1e-5)


def test_h_field_grows_towards_corners():
    s = np.linspace(0.02, 0.5, 40)
    vals = [h_field(SQUARE, (x, x)) for x in s]
    assert np.all(np.diff(vals) <= 1e-12)
    hex_vals = [h_field(HEXAGON, 0.999 * f * HEXAGON.vertices[0]) for f in np.linspace(0.05, 0.98, 30)]
    assert np.all(np.diff(hex_vals) >= -1e-12)


def test_tv_large_solution_examples():
    assert tv_large_solution(Disk(1.0), 2.0, (0.1, 0.2)) == 4.0
    assert tv_large_solution(SQUARE, 0.0, (0.5, 0.5)) == 0.0
    assert tv_large_solution(SQUARE, 0.0, (1e-9, 1e-9)) == 0.0
    assert tv_large_solution(SQUARE, 1.0, (0.5, 0.5)) == pytest.approx(2 + math.sqrt(math.pi), abs=1e-9)
