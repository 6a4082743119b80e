"""Level-set contour extraction and spline-based signed curvature.

Contours are closed polylines (marching squares with linear interpolation)
oriented counterclockwise, stored without the duplicate endpoint and
treated as periodic.  Signed curvature uses periodic cubic splines of the
coordinates against cumulative arc length, so a CCW-oriented circle of
radius r has curvature +1/r everywhere.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from skimage import measure

from .errors import GeometryError
from .grid import Field, Grid


@dataclass
class Contour:
    """Closed oriented polyline with optional per-point curvature.

    ``points`` has shape (n, 2); the segment from points[-1] back to
    points[0] closes the loop.
    """

    points: np.ndarray
    curvature: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise GeometryError("contour points must have shape (n, 2)")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def closed_points(self) -> np.ndarray:
        """Points with the first vertex repeated at the end."""
        return np.vstack([self.points, self.points[:1]])

    @property
    def arc_length(self) -> np.ndarray:
        """Cumulative arc length at each vertex (s[0] = 0)."""
        seg = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(seg)])

    @property
    def perimeter(self) -> float:
        d = np.diff(self.closed_points, axis=0)
        return float(np.linalg.norm(d, axis=1).sum())

    def signed_area(self) -> float:
        """Shoelace area; positive for counterclockwise orientation."""
        p = self.closed_points
        x, y = p[:, 0], p[:, 1]
        return 0.5 * float(np.sum(x[:-1] * y[1:] - x[1:] * y[:-1]))

    def is_ccw(self) -> bool:
        return self.signed_area() > 0.0

    def reversed(self) -> "Contour":
        return Contour(self.points[::-1].copy())


def extract_contours(fieldobj: Field | np.ndarray, threshold: float, grid: Grid | None = None) -> list[Contour]:
    """All closed level-set polylines of ``field == threshold``.

    Marching squares with linear edge interpolation; each contour is
    returned CCW-oriented and the list is sorted by descending point count.
    A field with no level crossing yields an empty list.
    """
    if isinstance(fieldobj, Field):
        grid = fieldobj.grid
        values = fieldobj.values
    else:
        if grid is None:
            raise GeometryError("grid is required when passing a bare array")
        values = np.asarray(fieldobj, dtype=float).ravel()
    if not np.all(np.isfinite(values)):
        raise GeometryError("cannot contour a non-finite field")

    arr = grid.as_2d(values)
    raw = measure.find_contours(arr, threshold)
    xmin, _, ymin, _ = grid.extent
    out: list[Contour] = []
    for rc in raw:
        # find_contours yields (row, col) = (iy, ix) sample coordinates and
        # repeats the first point for closed loops.
        if len(rc) < 3 or not np.allclose(rc[0], rc[-1]):
            continue  # open contours touch the lattice border; not a tumor boundary
        pts = np.empty((len(rc) - 1, 2))
        pts[:, 0] = xmin + (rc[:-1, 1] + 0.5) * grid.h
        pts[:, 1] = ymin + (rc[:-1, 0] + 0.5) * grid.h
        c = Contour(pts)
        if not c.is_ccw():
            c = c.reversed()
        out.append(c)
    out.sort(key=len, reverse=True)
    return out


def filter_contours(contours: list[Contour], f_min: float = 0.95) -> list[Contour]:
    """Keep contours with at least ``f_min`` times the largest point count.

    Small holes inside the tumor and detached cell clusters fall below the
    cut and therefore carry no surface tension.
    """
    if not 0.0 <= f_min <= 1.0:
        raise GeometryError(f"f_min must be in [0, 1], got {f_min}")
    if not contours:
        return []
    biggest = max(len(c) for c in contours)
    return [c for c in contours if len(c) >= f_min * biggest]


def _collapse_duplicates(points: np.ndarray, tol: float | None = None) -> np.ndarray:
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    if tol is None:
        scale = float(np.median(seg)) if seg.size else 0.0
        tol = max(1e-12, 1e-6 * scale)
    keep = np.concatenate([[True], seg > tol])
    pts = points[keep]
    # the ring wraps: drop a trailing point equal to the first
    while len(pts) > 1 and np.linalg.norm(pts[-1] - pts[0]) <= tol:
        pts = pts[:-1]
    return pts


def contour_curvature(contour: Contour) -> np.ndarray:
    """Per-point signed curvature from periodic cubic splines.

    Both coordinates are fit against cumulative arc length (periodic
    parameterization) and C = (x'y'' - x''y') / (x'^2 + y'^2)^{3/2} is
    evaluated at the original points.  CCW convex contours get C > 0.
    """
    pts = _collapse_duplicates(contour.points)
    if len(pts) < 4:
        raise GeometryError(f"curvature needs >= 4 distinct points, got {len(pts)}")
    ring = np.vstack([pts, pts[:1]])
    seg = np.linalg.norm(np.diff(ring, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    sx = CubicSpline(s, ring[:, 0], bc_type="periodic")
    sy = CubicSpline(s, ring[:, 1], bc_type="periodic")
    t = s[:-1]
    xp, xpp = sx(t, 1), sx(t, 2)
    yp, ypp = sy(t, 1), sy(t, 2)
    denom = (xp**2 + yp**2) ** 1.5
    curv = (xp * ypp - xpp * yp) / denom
    if len(pts) == len(contour.points):
        contour.curvature = curv
        return curv
    # duplicates were collapsed: map curvature back to the original points
    full = np.empty(len(contour.points))
    j = 0
    for k in range(len(contour.points)):
        if j + 1 < len(pts) and np.linalg.norm(contour.points[k] - pts[j]) > 1e-12:
            if np.linalg.norm(contour.points[k] - pts[min(j + 1, len(pts) - 1)]) <= 1e-12:
                j += 1
        full[k] = curv[min(j, len(curv) - 1)]
    contour.curvature = full
    return full


def resample_uniform(contour: Contour, spacing: float, kind: str = "linear") -> Contour:
    """Resample a closed polyline at uniform arc-length spacing.

    Lattice-extracted contours carry sub-voxel point clustering whose
    spline curvature is unbounded; resampling at the voxel scale bounds
    curvature by the geometry the lattice can actually express.  Linear
    chord interpolation is the default (downstream smoothing handles
    differentiability); ``kind="cubic"`` uses periodic splines.
    """
    pts = _collapse_duplicates(contour.points)
    if len(pts) < 4:
        return Contour(pts)
    ring = np.vstack([pts, pts[:1]])
    seg = np.linalg.norm(np.diff(ring, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    n = max(8, int(round(total / spacing)))
    t = np.linspace(0.0, total, n, endpoint=False)
    if kind == "cubic":
        sx = CubicSpline(s, ring[:, 0], bc_type="periodic")
        sy = CubicSpline(s, ring[:, 1], bc_type="periodic")
        return Contour(np.column_stack([sx(t), sy(t)]))
    x = np.interp(t, s, ring[:, 0])
    y = np.interp(t, s, ring[:, 1])
    return Contour(np.column_stack([x, y]))


def lowpass_ring(contour: Contour, min_wavelength: float) -> Contour:
    """Fourier low-pass of a uniformly sampled closed contour.

    Drops coordinate modes with wavelength below ``min_wavelength`` and
    stores the spectrally evaluated signed curvature on the result. Meant
    for contours produced by :func:`resample_uniform`; curvature below the
    lattice wavelength is discretization noise, not geometry.
    """
    pts = contour.points
    n = len(pts)
    if n < 8:
        out = Contour(pts.copy())
        out.curvature = np.zeros(n)
        return out
    z = pts[:, 0] + 1j * pts[:, 1]
    Z = np.fft.fft(z)
    seg = np.linalg.norm(np.diff(np.vstack([pts, pts[:1]]), axis=0), axis=1)
    total = float(seg.sum())
    freqs = np.fft.fftfreq(n, d=total / n)  # cycles per unit arc length
    keep = np.abs(freqs) <= 1.0 / min_wavelength
    Zf = np.where(keep, Z, 0.0)
    zf = np.fft.ifft(Zf)
    # spectral derivatives with respect to arc length
    ik = 2j * math.pi * freqs
    d1 = np.fft.ifft(Zf * ik)
    d2 = np.fft.ifft(Zf * ik * ik)
    xp, yp = d1.real, d1.imag
    xpp, ypp = d2.real, d2.imag
    speed2 = xp**2 + yp**2
    with np.errstate(invalid="ignore", divide="ignore"):
        curv = np.where(
            speed2 > 1e-300,
            (xp * ypp - xpp * yp) / np.maximum(speed2, 1e-300) ** 1.5,
            0.0,
        )
    out = Contour(np.column_stack([zf.real, zf.imag]))
    out.curvature = curv
    return out


def enclosed_area(contour: Contour) -> float:
    """Absolute shoelace area of the polyline."""
    return abs(contour.signed_area())


def dump_contour_csv(contour: Contour, path) -> None:
    """Write "s,x,y,C" rows for a contour (curvature computed if missing)."""
    curv = contour.curvature
    if curv is None:
        curv = contour_curvature(contour)
    s = contour.arc_length
    with open(path, "w") as fh:
        fh.write("s,x,y,C\n")
        for k in range(len(contour.points)):
            fh.write(f"{s[k]!r},{contour.points[k,0]!r},{contour.points[k,1]!r},{curv[k]!r}\n")
