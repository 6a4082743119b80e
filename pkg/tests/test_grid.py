"""Poisson-solve checks against dense direct oracles."""
from __future__ import annotations

import numpy as np
import pytest

from avatum.errors import ConfigurationError
from avatum.grid import Field, Grid, PoissonSystem, solve_laplace


def dense_oracle(grid: Grid, source: np.ndarray, dirichlet: dict[int, float]) -> np.ndarray:
    """Assemble the same reduced 5-point system densely and solve with LU."""
    n = grid.n_voxels
    pinned = np.zeros(n, dtype=bool)
    val = np.zeros(n)
    for i, v in dirichlet.items():
        pinned[i] = True
        val[i] = v
    free = np.nonzero(~pinned)[0]
    pos = {int(i): k for k, i in enumerate(free)}
    m = len(free)
    A = np.zeros((m, m))
    b = source[free].astype(float).copy()
    inv_h2 = 1.0 / grid.h**2
    for k, i in enumerate(free):
        for j in grid.neighbors[:, i]:
            if j < 0:
                continue
            A[k, k] += inv_h2
            if pinned[j]:
                b[k] += val[j] * inv_h2
            else:
                A[k, pos[int(j)]] -= inv_h2
    x = np.linalg.solve(A, b)
    full = val.copy()
    full[free] = x
    return full


def boundary_indices(grid: Grid) -> np.ndarray:
    ix = np.tile(np.arange(grid.nx), grid.ny)
    iy = np.repeat(np.arange(grid.ny), grid.nx)
    edge = (ix == 0) | (ix == grid.nx - 1) | (iy == 0) | (iy == grid.ny - 1)
    return np.nonzero(edge)[0]


def test_zero_source_zero_boundary_gives_zero():
    grid = Grid(12, 12, 0.1)
    phi = solve_laplace(grid, np.zeros(grid.n_voxels), {int(i): 0.0 for i in boundary_indices(grid)})
    assert np.allclose(phi.values, 0.0, atol=1e-12)


def test_constants_are_harmonic():
    grid = Grid(9, 11, 0.05)
    kappa = 3.7
    phi = solve_laplace(grid, np.zeros(grid.n_voxels), {int(i): kappa for i in boundary_indices(grid)})
    assert np.allclose(phi.values, kappa, atol=1e-9)


def test_point_source_matches_dense_lu():
    grid = Grid(64, 64, 1.0 / 64)
    source = np.zeros(grid.n_voxels)
    center = grid.flat_index(32, 32)
    source[center] = 1.0
    dirichlet = {int(i): 0.0 for i in boundary_indices(grid)}
    phi = solve_laplace(grid, source, dirichlet)
    oracle = dense_oracle(grid, source, dirichlet)
    assert np.max(np.abs(phi.values - oracle)) < 1e-8


def test_random_system_matches_dense_lu_small():
    rng = np.random.default_rng(7)
    grid = Grid(17, 13, 0.07)
    source = rng.normal(size=grid.n_voxels)
    dirichlet = {int(i): float(rng.normal()) for i in boundary_indices(grid)[::3]}
    phi = solve_laplace(grid, source, dirichlet)
    oracle = dense_oracle(grid, source, dirichlet)
    assert np.max(np.abs(phi.values - oracle)) < 1e-8


def test_discrete_maximum_principle():
    rng = np.random.default_rng(3)
    grid = Grid(20, 20, 0.1)
    dirichlet = {int(i): float(rng.uniform(-2, 5)) for i in boundary_indices(grid)}
    phi = solve_laplace(grid, np.zeros(grid.n_voxels), dirichlet)
    vals = list(dirichlet.values())
    assert phi.values.min() >= min(vals) - 1e-10
    assert phi.values.max() <= max(vals) + 1e-10


def test_empty_dirichlet_rejected():
    grid = Grid(5, 5, 0.2)
    with pytest.raises(ConfigurationError):
        solve_laplace(grid, np.zeros(grid.n_voxels), {})


def test_nonfinite_source_rejected():
    grid = Grid(5, 5, 0.2)
    s = np.zeros(grid.n_voxels)
    s[3] = np.nan
    with pytest.raises(ConfigurationError):
        solve_laplace(grid, s, {0: 0.0})


def test_direct_path_agrees_with_cg():
    rng = np.random.default_rng(11)
    grid = Grid(30, 30, 0.05)
    source = rng.normal(size=grid.n_voxels)
    didx = boundary_indices(grid)
    dval = rng.normal(size=didx.size)
    system = PoissonSystem(grid, didx, dval)
    direct = system.solve_direct(source)
    iterative = system.solve_cg(source)
    assert np.max(np.abs(direct - iterative)) < 1e-7


def test_green_column_superposition():
    grid = Grid(16, 16, 0.1)
    didx = boundary_indices(grid)
    system = PoissonSystem(grid, didx, np.zeros(didx.size))
    s = np.zeros(grid.n_voxels)
    i1, i2 = grid.flat_index(5, 6), grid.flat_index(9, 8)
    s[i1], s[i2] = 2.0, -1.5
    full = system.solve_direct(s)
    combo = np.zeros(system.n_free)
    combo += 2.0 * system.green_column(int(i1))
    combo += -1.5 * system.green_column(int(i2))
    assert np.max(np.abs(system.expand(combo) - full)) < 1e-12


def test_neumann_zero_face_blocks_coupling():
    # wall down the middle: two independent halves, each pinned separately
    grid = Grid(6, 3, 0.5)
    faces = [(int(grid.flat_index(2, iy)), 0) for iy in range(3)]  # block east face of column 2
    dirichlet = {int(grid.flat_index(0, 1)): 1.0, int(grid.flat_index(5, 1)): -1.0}
    phi = solve_laplace(grid, np.zeros(grid.n_voxels), dirichlet, neumann_zero=faces)
    left = phi.values[grid.as_2d(np.arange(grid.n_voxels))[:, :3].ravel()]
    right = phi.values[grid.as_2d(np.arange(grid.n_voxels))[:, 3:].ravel()]
    assert np.allclose(left, 1.0, atol=1e-9)
    assert np.allclose(right, -1.0, atol=1e-9)


def test_field_validation():
    grid = Grid(4, 4, 0.1)
    with pytest.raises(ConfigurationError):
        Field(grid, np.zeros(7))
