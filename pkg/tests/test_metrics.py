"""Shape metrics: roundness, volumes, boundary modes, growth fits."""
from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from scipy.integrate import quad

from avatum.contours import Contour
from avatum.errors import FittingError, ShapeFlagWarning
from avatum.metrics import (
    ModeSeries,
    boundary_modes,
    center_of_mass,
    default_fit_window,
    fit_mode_growth,
    region_volumes,
    roundness,
)


def polygon(radius_fn, n=256, center=(0.0, 0.0)):
    th = np.linspace(0.0, 2 * math.pi, n, endpoint=False)
    r = np.asarray([radius_fn(t) for t in th])
    return Contour(np.column_stack([center[0] + r * np.cos(th), center[1] + r * np.sin(th)]))


def test_roundness_circle():
    c = polygon(lambda t: 1.0, n=256)
    assert roundness(c) == pytest.approx(1.0, abs=1e-3)


def test_roundness_square():
    sq = Contour(np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float))
    assert roundness(sq) == pytest.approx(math.pi / 4.0, abs=1e-12)


def test_roundness_ellipse_quadrature_oracle():
    # oracle: perimeter of the 2:1 ellipse by quadrature, roundness = 4*pi*A/P^2
    a, b = 2.0, 1.0
    P, err = quad(lambda t: math.hypot(a * math.sin(t), b * math.cos(t)), 0.0, 2 * math.pi)
    assert err < 1e-9
    oracle = 4.0 * math.pi * (math.pi * a * b) / P**2
    assert oracle == pytest.approx(0.8411651810063189, abs=1e-10)  # frozen from the oracle
    th = np.linspace(0.0, 2 * math.pi, 2048, endpoint=False)
    e = Contour(np.column_stack([a * np.cos(th), b * np.sin(th)]))
    assert roundness(e) == pytest.approx(oracle, abs=2e-4)


def test_roundness_isoperimetric_bound():
    rng = np.random.default_rng(2)
    for _ in range(20):
        # star-shaped random blobs are simple closed curves
        amps = rng.uniform(-0.08, 0.08, size=5)
        c = polygon(lambda t: 1.0 + sum(a * math.cos((k + 2) * t) for k, a in enumerate(amps)))
        assert roundness(c) <= 1.0 + 1e-3


def test_roundness_self_intersection_flagged():
    # figure-eight-ish polyline
    pts = np.array([[0, 0], [2, 2], [2, 0], [0, 1.0]])  # asymmetric bowtie
    with pytest.warns(ShapeFlagWarning):
        val = roundness(pts if isinstance(pts, Contour) else Contour(pts))
    assert 0.0 < val


def test_region_volumes_disk():
    h = 0.02
    n = 120
    xs = (np.arange(n) + 0.5) * h - 1.2
    X, Y = np.meshgrid(xs, xs)
    R = np.hypot(X, Y)
    masks = {
        "proliferative": R <= 0.3,
        "quiescent": np.zeros_like(R, dtype=bool),
        "necrotic": np.zeros_like(R, dtype=bool),
    }
    V_p, V_q, V_n = region_volumes(masks, h)
    assert (V_q, V_n) == (0.0, 0.0)
    assert abs(V_p - math.pi * 0.09) < 4 * h * (2 * math.pi * 0.3)


def test_region_volumes_annuli():
    h = 0.02
    n = 120
    xs = (np.arange(n) + 0.5) * h - 1.2
    X, Y = np.meshgrid(xs, xs)
    R = np.hypot(X, Y)
    masks = {
        "necrotic": R <= 0.1,
        "quiescent": (R > 0.1) & (R <= 0.2),
        "proliferative": (R > 0.2) & (R <= 0.3),
    }
    V_p, V_q, V_n = region_volumes(masks, h)
    tol = 4 * h * 2 * math.pi
    assert abs(V_n - math.pi * 0.01) < tol * 0.1
    assert abs(V_q - math.pi * 0.04) < tol * 0.2
    assert abs(V_p - math.pi * 0.09) < tol * 0.3


def test_region_volumes_empty():
    z = np.zeros((4, 4), dtype=bool)
    assert region_volumes({"proliferative": z, "quiescent": z, "necrotic": z}, 0.1) == (0.0, 0.0, 0.0)


def test_center_of_mass():
    h = 0.02
    xs = (np.arange(110) + 0.5) * h - 1.1
    X, Y = np.meshgrid(xs, xs)
    w = (np.hypot(X, Y) <= 0.3).astype(float)
    cx, cy = center_of_mass(w.ravel(), X.ravel(), Y.ravel())
    assert abs(cx) < h and abs(cy) < h
    w2 = (np.hypot(X - 0.1, Y) <= 0.3).astype(float)
    cx2, cy2 = center_of_mass(w2.ravel(), X.ravel(), Y.ravel())
    assert abs(cx2 - 0.1) < h and abs(cy2) < h


def test_boundary_modes_circle_flat():
    c = polygon(lambda t: 0.3, n=512)
    out = boundary_modes(c, (0.0, 0.0), 8)
    assert out.star_shaped
    assert np.all(out.amplitudes < 1e-3 * 0.3)
    assert out.mean_radius == pytest.approx(0.3, rel=1e-3)


def test_boundary_modes_single_mode():
    c = polygon(lambda t: 0.3 + 0.015 * math.cos(2 * t), n=1024)
    out = boundary_modes(c, (0.0, 0.0), 8)
    assert out.amplitudes[1] == pytest.approx(0.015, rel=1e-2)
    others = np.delete(out.amplitudes, 1)
    assert np.all(others < 1e-4)


def test_boundary_modes_high_k_exact():
    for k in (16, 64):
        c = polygon(lambda t: 1.0 + 0.01 * math.cos(k * t), n=4096)
        out = boundary_modes(c, (0.0, 0.0), k)
        assert out.amplitudes[k - 1] == pytest.approx(0.01, rel=1e-2)


def test_boundary_modes_offset_circle_first_mode():
    # oracle: r(theta) of a circle of radius R offset by d has first Fourier
    # amplitude d + O(d^2/R)
    R, d = 0.3, 0.03
    th = np.linspace(0.0, 2 * math.pi, 2048, endpoint=False)
    c = Contour(np.column_stack([d + R * np.cos(th), R * np.sin(th)]))
    out = boundary_modes(c, (0.0, 0.0), 4)
    assert out.amplitudes[0] == pytest.approx(d, rel=2e-2)


def test_boundary_modes_non_star_flagged():
    th = np.linspace(0.0, 2 * math.pi, 512, endpoint=False)
    r = 1.0 + 0.5 * np.cos(3 * th) ** 3  # deep lobes, not star-shaped about (0.6, 0)
    c = Contour(np.column_stack([r * np.cos(th), r * np.sin(th)]))
    with pytest.warns(ShapeFlagWarning):
        out = boundary_modes(c, (0.6, 0.0), 4)
    assert not out.star_shaped
    assert np.all(np.isfinite(out.amplitudes))


def test_fit_mode_growth_exact_exponential():
    t = np.linspace(0.0, 5.0, 60)
    a = 0.01 * np.exp(0.3 * t)
    series = ModeSeries(t, a[:, None])
    fit = fit_mode_growth(series, 1)
    assert fit.rate == pytest.approx(0.3, abs=1e-6)
    assert fit.stderr < 1e-6


def test_fit_mode_growth_constant():
    t = np.linspace(0.0, 5.0, 30)
    series = ModeSeries(t, np.full((30, 1), 0.02))
    assert fit_mode_growth(series, 1).rate == pytest.approx(0.0, abs=1e-12)


def test_fit_mode_growth_scale_invariant():
    t = np.linspace(0.0, 4.0, 40)
    a = 0.01 * np.exp(-0.2 * t)
    f1 = fit_mode_growth(ModeSeries(t, a[:, None]), 1).rate
    f2 = fit_mode_growth(ModeSeries(t, (37.0 * a)[:, None]), 1).rate
    assert f1 == pytest.approx(f2, abs=1e-12)


def test_fit_mode_growth_noise_coverage():
    # Monte-Carlo: the fitted slope is within 3 stderr of truth in >= 95% of
    # noisy replicates
    rng = np.random.default_rng(123)
    t = np.linspace(0.0, 5.0, 50)
    truth = 0.3
    hits = 0
    n_rep = 200
    for _ in range(n_rep):
        a = 0.01 * np.exp(truth * t) * (1.0 + 0.05 * rng.normal(size=t.size))
        fit = fit_mode_growth(ModeSeries(t, np.abs(a)[:, None]), 1)
        if abs(fit.rate - truth) <= 3.0 * fit.stderr:
            hits += 1
    assert hits / n_rep >= 0.95


def test_fit_window_shrinks_on_nonpositive():
    t = np.linspace(0.0, 5.0, 30)
    a = 0.01 * np.exp(0.5 * t)
    a[20:] = 0.0
    fit = fit_mode_growth(ModeSeries(t, a[:, None]), 1)
    assert fit.shrunk
    assert fit.rate == pytest.approx(0.5, abs=1e-6)


def test_fit_window_too_small_raises():
    t = np.linspace(0.0, 1.0, 6)
    a = np.array([0.01, 0.0, 0.0, 0.0, 0.0, 0.0])
    with pytest.raises(FittingError):
        fit_mode_growth(ModeSeries(t, a[:, None]), 1)


def test_default_fit_window_doubling_cap():
    t = np.linspace(0.0, 10.0, 101)
    a = 0.01 * np.exp(0.5 * t)  # doubles at t = ln2/0.5 = 1.386
    series = ModeSeries(t, a[:, None])
    w = default_fit_window(series, 1, t_start=0.0, span=5.0)
    assert w[1] <= 1.5
    a2 = np.full_like(t, 0.01)
    w2 = default_fit_window(ModeSeries(t, a2[:, None]), 1, t_start=0.0, span=5.0)
    assert w2[1] == pytest.approx(5.0, abs=0.11)
