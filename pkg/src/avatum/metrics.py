"""Shape and growth measurements on simulator output.

Roundness 4π·Area/Perimeter², cumulative region volumes, center of mass,
Fourier amplitudes of the boundary radius function, and exponential
growth-rate fits of mode amplitudes.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .contours import Contour
from .errors import ConfigurationError, FittingError, ShapeFlagWarning

N_ANGLES = 512  # resampling resolution for the boundary radius function


def _segments_self_intersect(points: np.ndarray) -> bool:
    """True if any two non-adjacent closed-polyline segments cross."""
    n = len(points)
    if n < 4:
        return False
    p = np.vstack([points, points[:1]])
    a, b = p[:-1], p[1:]
    d = b - a
    # pairwise orientation tests, vectorized over segment pairs
    ax, ay = a[:, 0], a[:, 1]
    dx, dy = d[:, 0], d[:, 1]
    AX, BX = np.meshgrid(ax, ax, indexing="ij")
    AY, BY = np.meshgrid(ay, ay, indexing="ij")
    DX1, DX2 = np.meshgrid(dx, dx, indexing="ij")
    DY1, DY2 = np.meshgrid(dy, dy, indexing="ij")
    rx, ry = BX - AX, BY - AY
    denom = DX1 * DY2 - DY1 * DX2
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (rx * DY2 - ry * DX2) / denom
        u = (rx * DY1 - ry * DX1) / denom
    hit = (denom != 0) & (t > 1e-12) & (t < 1 - 1e-12) & (u > 1e-12) & (u < 1 - 1e-12)
    idx = np.arange(n)
    gap = np.minimum((idx[:, None] - idx[None, :]) % n, (idx[None, :] - idx[:, None]) % n)
    hit &= gap > 1
    return bool(hit.any())


def roundness(contour: Contour) -> float:
    """4π·Area / Perimeter² of a closed polyline; 1 for a circle.

    A self-intersecting polyline is flagged with a warning but still
    measured (shoelace area, polyline perimeter).
    """
    if len(contour) < 4:
        raise ConfigurationError(f"roundness needs >= 4 points, got {len(contour)}")
    area = abs(contour.signed_area())
    perim = contour.perimeter
    if perim <= 0.0:
        raise ConfigurationError("zero-perimeter contour")
    if _segments_self_intersect(contour.points):
        warnings.warn("self-intersecting contour in roundness()", ShapeFlagWarning, stacklevel=2)
    return 4.0 * math.pi * area / perim**2


def region_volumes(masks, h: float) -> tuple[float, float, float]:
    """Cumulative region volumes (V_p, V_q, V_n) from classification masks.

    ``masks`` maps names {"proliferative", "quiescent", "necrotic"} to
    boolean arrays.  Volumes nest like the interface radii: V_n covers the
    necrotic core, V_q adds the quiescent annulus, V_p the whole tumor;
    each voxel counts once regardless of occupancy.
    """
    n_p = int(np.count_nonzero(masks["proliferative"]))
    n_q = int(np.count_nonzero(masks["quiescent"]))
    n_n = int(np.count_nonzero(masks["necrotic"]))
    a = h * h
    V_n = n_n * a
    V_q = V_n + n_q * a
    V_p = V_q + n_p * a
    return (V_p, V_q, V_n)


def center_of_mass(weights: np.ndarray, x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Weight-averaged voxel center (occupancy or density weights)."""
    w = np.asarray(weights, dtype=float).ravel()
    total = w.sum()
    if total <= 0.0:
        raise ConfigurationError("center of mass of an empty tumor")
    return (float(np.dot(w, x) / total), float(np.dot(w, y) / total))


@dataclass
class ModeAmplitudes:
    """Fourier amplitudes a_1..a_kmax of the boundary radius function."""

    amplitudes: np.ndarray
    mean_radius: float
    star_shaped: bool = True


def boundary_modes(contour: Contour, center: tuple[float, float], k_max: int) -> ModeAmplitudes:
    """Fourier amplitudes of r(θ) resampled at 512 uniform angles.

    Rays from ``center`` are intersected with the polyline; a contour that
    is not star-shaped about the center yields several hits per ray and the
    outermost one is kept (flagged).  a_k is the magnitude of the k-th
    discrete Fourier coefficient of r(θ), normalized so a pure
    r(θ) = r0 + A cos(kθ) input returns a_k = A.
    """
    if k_max < 1:
        raise ConfigurationError("k_max must be >= 1")
    cx, cy = center
    p = contour.closed_points - np.asarray([[cx, cy]])
    a = p[:-1]
    d = p[1:] - p[:-1]

    thetas = 2.0 * math.pi * np.arange(N_ANGLES) / N_ANGLES
    ex, ey = np.cos(thetas), np.sin(thetas)

    # solve a + t*d = s*(ex, ey) for each (segment, angle) pair
    ax, ay = a[:, 0][:, None], a[:, 1][:, None]
    dx, dy = d[:, 0][:, None], d[:, 1][:, None]
    denom = dx * ey[None, :] - dy * ex[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (ax * ey[None, :] - ay * ex[None, :]) / denom
        s = (ax * dy - ay * dx) / denom * -1.0
    valid = (np.abs(denom) > 1e-300) & (t >= 0.0) & (t < 1.0) & (s > 0.0)
    s = np.where(valid, s, -np.inf)
    r = s.max(axis=0)
    # rays through a vertex graze two adjacent segments at the same radius;
    # only materially distinct hit radii mean the contour is not star-shaped
    s_min = np.where(valid, np.where(valid, s, np.inf), np.inf).min(axis=0)
    hits = valid.sum(axis=0)
    multi = (hits > 1) & (r - s_min > 1e-9 * np.maximum(r, 1e-30))
    star = not bool(multi.any())
    if not star:
        warnings.warn(
            "contour is not star-shaped about the center: keeping outermost intersections",
            ShapeFlagWarning,
            stacklevel=2,
        )
    missing = ~np.isfinite(r)
    if missing.any():
        # no intersection along some ray (center outside the contour): fall
        # back to the nearest-vertex radius to keep the metric total
        vr = np.linalg.norm(p[:-1], axis=1)
        vth = np.arctan2(p[:-1, 1], p[:-1, 0]) % (2 * math.pi)
        order = np.argsort(vth)
        r[missing] = np.interp(thetas[missing], vth[order], vr[order], period=2 * math.pi)

    coeff = np.fft.rfft(r) / N_ANGLES
    amps = 2.0 * np.abs(coeff[1 : k_max + 1])
    return ModeAmplitudes(amplitudes=amps, mean_radius=float(r.mean()), star_shaped=star)


@dataclass
class ModeSeries:
    """Time series of boundary-mode amplitudes a_k(t) for k = 1..k_max."""

    times: np.ndarray
    amplitudes: np.ndarray  # shape (n_times, k_max)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.amplitudes = np.atleast_2d(np.asarray(self.amplitudes, dtype=float))
        if self.amplitudes.shape[0] != self.times.size:
            raise ConfigurationError("amplitude rows must match the time axis")
        if np.any(np.diff(self.times) <= 0):
            raise ConfigurationError("times must be strictly increasing")

    @property
    def k_max(self) -> int:
        return self.amplitudes.shape[1]

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t,k,a_k\n")
            for i, t in enumerate(self.times):
                for k in range(self.k_max):
                    fh.write(f"{t!r},{k + 1},{self.amplitudes[i, k]!r}\n")


@dataclass
class ModeGrowthFit:
    rate: float
    stderr: float
    n_samples: int
    window: tuple[float, float]
    shrunk: bool = False


def fit_mode_growth(series: ModeSeries, k: int, window: tuple[float, float] | None = None) -> ModeGrowthFit:
    """Least-squares slope of log a_k(t) over a time window.

    The slope is invariant under amplitude rescaling.  Nonpositive
    amplitudes inside the window shrink it (flagged); fewer than 5 usable
    samples is an error.
    """
    if not (1 <= k <= series.k_max):
        raise ConfigurationError(f"mode {k} outside the series range 1..{series.k_max}")
    t = series.times
    a = series.amplitudes[:, k - 1]
    if window is None:
        window = (float(t[0]), float(t[-1]))
    sel = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
    shrunk = False
    if np.any(a[sel] <= 0.0):
        shrunk = True
        # keep the longest positive prefix of the window
        idx = np.nonzero(sel)[0]
        good = a[idx] > 0.0
        if not good[0]:
            raise FittingError("mode amplitude nonpositive at the window start")
        stop = np.argmin(good) if not good.all() else len(good)
        sel = idx[:stop]
    t_w, a_w = t[sel], a[sel]
    if t_w.size < 5:
        raise FittingError(f"need >= 5 samples in the fit window, got {t_w.size}")
    y = np.log(a_w)
    A = np.vstack([t_w, np.ones_like(t_w)]).T
    coef, res, _, _ = np.linalg.lstsq(A, y, rcond=None)
    slope = float(coef[0])
    n = t_w.size
    resid = y - A @ coef
    denom = float(np.sum((t_w - t_w.mean()) ** 2))
    stderr = math.sqrt(float(resid @ resid) / max(n - 2, 1) / denom) if denom > 0 else math.inf
    return ModeGrowthFit(rate=slope, stderr=stderr, n_samples=n,
                         window=(float(t_w[0]), float(t_w[-1])), shrunk=shrunk)


def default_fit_window(series: ModeSeries, k: int, t_start: float = 0.0, span: float = 5.0) -> tuple[float, float]:
    """Window from perturbation imposition until a_k doubles or ``span`` elapses."""
    t = series.times
    a = series.amplitudes[:, k - 1]
    i0 = int(np.searchsorted(t, t_start))
    i0 = min(i0, len(t) - 1)
    a0 = a[i0]
    t_stop = t[i0] + span
    for i in range(i0, len(t)):
        if a0 > 0 and a[i] >= 2.0 * a0:
            t_stop = min(t_stop, t[i])
            break
    return (float(t[i0]), float(t_stop))
