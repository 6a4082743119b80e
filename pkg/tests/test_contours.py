"""Contour extraction, filtering, and curvature checks."""
from __future__ import annotations

import math

import numpy as np
import pytest

from avatum.contours import (
    Contour,
    contour_curvature,
    enclosed_area,
    extract_contours,
    filter_contours,
)
from avatum.errors import GeometryError
from avatum.grid import Field, Grid


def circle_contour(radius: float, n: int, ccw: bool = True, center=(0.0, 0.0)) -> Contour:
    th = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    if not ccw:
        th = th[::-1]
    pts = np.column_stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)])
    return Contour(pts)


def test_disk_indicator_single_contour_area():
    grid = Grid.covering_unit_disk(h=0.02)
    f = Field(grid, (grid.radius <= 0.5).astype(float))
    cs = extract_contours(f, 0.5)
    assert len(cs) == 1
    area = enclosed_area(cs[0])
    tol = 2.0 * grid.h * cs[0].perimeter
    assert abs(area - math.pi * 0.25) < tol


def test_constant_field_no_contours():
    grid = Grid(20, 20, 0.1)
    assert extract_contours(Field(grid, np.full(grid.n_voxels, 2.0)), 0.5) == []


def test_two_disks_descending_size():
    grid = Grid.covering_unit_disk(h=0.02)
    x, y = grid.xy
    f = ((np.hypot(x + 0.4, y) <= 0.3) | (np.hypot(x - 0.5, y) <= 0.12)).astype(float)
    cs = extract_contours(Field(grid, f), 0.5)
    assert len(cs) == 2
    assert len(cs[0]) >= len(cs[1])
    assert enclosed_area(cs[0]) > enclosed_area(cs[1])


def test_filter_keeps_both_at_threshold():
    big = circle_contour(1.0, 100)
    near = circle_contour(1.0, 96)
    kept = filter_contours([big, near], f_min=0.95)
    assert len(kept) == 2


def test_filter_drops_small():
    kept = filter_contours([circle_contour(1.0, 100), circle_contour(0.2, 40)], f_min=0.95)
    assert len(kept) == 1 and len(kept[0]) == 100


def test_filter_single_contour_kept():
    c = circle_contour(0.5, 32)
    assert filter_contours([c], 0.95) == [c]


def test_circle_curvature_ccw():
    c = circle_contour(2.0, 64)
    curv = contour_curvature(c)
    assert np.max(np.abs(curv - 0.5)) / 0.5 < 0.01


def test_circle_curvature_cw_sign():
    c = circle_contour(2.0, 64, ccw=False)
    curv = contour_curvature(c)
    assert np.max(np.abs(curv + 0.5)) / 0.5 < 0.01


def test_ellipse_curvature_at_apex():
    # analytic oracle: curvature of (a cos t, b sin t) is ab/(a^2 sin^2 t + b^2 cos^2 t)^{3/2};
    # at t = 0 that is a/b^2
    a, b = 2.0, 1.0
    t = np.linspace(0.0, 2.0 * math.pi, 256, endpoint=False)
    c = Contour(np.column_stack([a * np.cos(t), b * np.sin(t)]))
    curv = contour_curvature(c)
    assert abs(curv[0] - a / b**2) / (a / b**2) < 0.02


def test_circle_curvature_convergence_order():
    errs = []
    for n in (32, 64, 128, 256):
        curv = contour_curvature(circle_contour(1.0, n))
        errs.append(np.max(np.abs(curv - 1.0)))
    orders = [math.log2(errs[k] / errs[k + 1]) for k in range(3)]
    assert min(orders) >= 1.0  # observed order at least 1 in point spacing


def test_duplicate_points_collapsed():
    th = np.linspace(0.0, 2.0 * math.pi, 32, endpoint=False)
    pts = np.column_stack([np.cos(th), np.sin(th)])
    pts = np.repeat(pts, 2, axis=0)  # duplicate every vertex
    curv = contour_curvature(Contour(pts))
    assert curv.shape == (64,)
    assert np.max(np.abs(curv - 1.0)) < 0.05


def test_too_few_distinct_points_raises():
    with pytest.raises(GeometryError):
        contour_curvature(Contour(np.array([[0, 0], [1, 0], [1, 1], [1.0, 1.0]])))


def test_extracted_disk_total_turning():
    # lattice contours are staircases, so pointwise curvature oscillates;
    # the closed-curve invariant is the total turning, integral of C ds = 2*pi
    grid = Grid.covering_unit_disk(h=0.02)
    f = Field(grid, (grid.radius <= 0.4).astype(float))
    c = extract_contours(f, 0.5)[0]
    assert c.is_ccw()
    contour_curvature(c)  # exercises the staircase path
    from scipy.interpolate import CubicSpline

    ring = np.vstack([c.points, c.points[:1]])
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(ring, axis=0), axis=1))])
    sx = CubicSpline(s, ring[:, 0], bc_type="periodic")
    sy = CubicSpline(s, ring[:, 1], bc_type="periodic")
    t = np.linspace(0.0, s[-1], 20001)
    xp, xpp, yp, ypp = sx(t, 1), sx(t, 2), sy(t, 1), sy(t, 2)
    curv = (xp * ypp - xpp * yp) / (xp**2 + yp**2) ** 1.5
    speed = np.hypot(xp, yp)
    turning = np.trapezoid(curv * speed, t)
    assert abs(turning - 2.0 * math.pi) / (2.0 * math.pi) < 0.01
