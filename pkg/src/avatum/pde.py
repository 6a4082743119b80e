"""Mean-field tumor solver: moving-boundary density advection.

The cell density ρ (≈ 1 inside the tumor) is advected by the Darcy
velocity −∇p with a first-order upwind finite-volume scheme; oxygen obeys
a stationary diffusion balance whose consumption switches off below a
threshold (solved by implicit pseudo-time sweeps finished at the unique
complementarity fixed point); pressure sources follow the oxygen-defined
regions and the boundary carries the adhesion condition on the first ring
of sub-threshold volumes.  Gaussian noise scaled by the local density
change excites all boundary modes without lattice bias.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .contours import (Contour, contour_curvature, extract_contours, filter_contours,
                       lowpass_ring, resample_uniform)
from .errors import ConfigurationError, NumericalError
from .grid import Field, Grid, PoissonSystem
from .metrics import center_of_mass, region_volumes, roundness

_STRUCTURE4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


@dataclass(frozen=True)
class PdeParams:
    """Effective mean-field parameters (proliferation rate normalized to 1)."""

    mu_prol_eff: float = 1.0
    mu_death_eff: float = 1.35
    lambda_eff: float = 1.15
    kappa_prol: float = 0.94
    kappa_death: float = 0.93
    sigma: float = 0.0
    rho_thresh: float = 0.9
    omega: float = 0.025
    p_ext: float = 0.0
    consumption_cutoff: str = "kappa_death"  # or "kappa_prol"
    oxygen_tol: float = 1e-8
    oxygen_max_iter: int = 10_000
    pseudo_dtau: float = 5.0

    def __post_init__(self):
        for name in ("mu_prol_eff", "mu_death_eff", "lambda_eff", "sigma", "omega"):
            if getattr(self, name) < 0.0:
                raise ConfigurationError(f"{name} must be nonnegative")
        if not (0.0 < self.kappa_death <= self.kappa_prol <= 1.0):
            raise ConfigurationError("need 0 < kappa_death <= kappa_prol <= 1")
        if not (0.0 < self.rho_thresh < 1.0):
            raise ConfigurationError("rho_thresh must lie in (0, 1)")
        if self.consumption_cutoff not in ("kappa_death", "kappa_prol"):
            raise ConfigurationError("consumption_cutoff must be kappa_death or kappa_prol")

    @property
    def cutoff_value(self) -> float:
        return self.kappa_death if self.consumption_cutoff == "kappa_death" else self.kappa_prol


@dataclass
class PdeState:
    rho: np.ndarray
    c: np.ndarray
    p: np.ndarray
    t: float = 0.0


def classify_regions(c: np.ndarray, rho: np.ndarray, params: PdeParams) -> dict[str, np.ndarray]:
    """Region masks on the tumor (rho >= rho_thresh): proliferative where
    oxygen allows division, necrotic below the survival threshold,
    quiescent between, exterior elsewhere."""
    tumor = rho >= params.rho_thresh
    prolif = tumor & (c >= params.kappa_prol)
    necro = tumor & (c < params.kappa_death)
    quiesc = tumor & ~prolif & ~necro
    return {
        "proliferative": prolif,
        "quiescent": quiesc,
        "necrotic": necro,
        "exterior": ~tumor,
    }


class PdeSimulation:
    """Field solvers plus the explicit advection loop."""

    def __init__(self, grid: Grid, params: PdeParams, rho0: np.ndarray, seed: int = 0):
        if grid.radius.max() < 1.0:
            raise ConfigurationError("the lattice must contain the unit oxygen-source ring")
        self.grid = grid
        self.params = params
        self.seed = seed
        self.state = PdeState(
            rho=np.asarray(rho0, dtype=float).copy(),
            c=np.ones(grid.n_voxels),
            p=np.full(grid.n_voxels, params.p_ext),
        )
        ring = np.nonzero(grid.radius >= 1.0)[0]
        self._oxy = PoissonSystem(grid, ring, np.ones(ring.size), scale="h2")
        self._oxy_sweep_lu = None
        self._oxy_sweep_dtau = None
        self.step_index = 0
        self.clamped_mass = 0.0
        self.oxygen_polished = False

    # -- oxygen --------------------------------------------------------------
    def _sweep_operator(self, dtau: float):
        if self._oxy_sweep_lu is None or self._oxy_sweep_dtau != dtau:
            import scipy.sparse as sp
            import scipy.sparse.linalg as spla

            n = self._oxy.n_free
            A = (self._oxy.matrix + sp.eye(n) / dtau).tocsc()
            self._oxy_sweep_lu = spla.splu(A)
            self._oxy_sweep_dtau = dtau
        return self._oxy_sweep_lu

    def solve_oxygen(self, dtau: float | None = None) -> np.ndarray:
        """Implicit pseudo-time iteration to the stationary oxygen balance.

        Consumption -lambda*rho is active where the previous sweep's oxygen
        sits above the cutoff (and rho is above the tumor threshold); the
        sweep operator is (I/dtau - Δ).  After the active set stops moving,
        voxels pinned exactly at the cutoff get fractional consumption so
        the returned field is the unique complementarity fixed point,
        independent of dtau.
        """
        pr = self.params
        dtau = pr.pseudo_dtau if dtau is None else dtau
        lu = self._sweep_operator(dtau)
        free = self._oxy.unknown_idx
        rho_free = self.state.rho[free]
        candidate = rho_free >= pr.rho_thresh
        strength = pr.lambda_eff * rho_free  # consumption per active voxel
        cutoff = pr.cutoff_value

        c_free = self.state.c[free].copy()
        bc = self._oxy.bc_rhs
        m_warm = getattr(self, "_m_warm", None)
        if m_warm is not None and m_warm.size == candidate.size:
            # fractional consumption persists between calls: voxels pinned at
            # the cutoff would otherwise chatter on every re-solve
            m = np.where(candidate, m_warm, 0.0)
        else:
            # cold start: damped implicit pseudo-time sweeps with the plain
            # threshold source carry the field near the balance; the step
            # size only shapes this transient path
            m = (candidate & (c_free >= cutoff)).astype(float)
            hashes: list[int] = []
            for it in range(min(60, pr.oxygen_max_iter)):
                c_new = lu.solve(c_free / dtau + bc - strength * m)
                delta = float(np.max(np.abs(c_new - c_free)))
                c_free = c_new
                mask = candidate & (c_free >= cutoff)
                hashes.append(hash(mask.tobytes()))
                m = mask.astype(float)
                if delta < pr.oxygen_tol:
                    break
                if it >= 3 and hashes[-1] == hashes[-3]:
                    break  # threshold chatter: only the finisher can settle it
        # Finisher: exact active-set solve of the complementarity system.
        # Voxels pinned at the cutoff form a small set V whose fractional
        # consumption follows from a dense Schur complement over cached
        # unit-source responses; finite termination, and the result is the
        # unique static solution, independent of the pseudo-time step.
        c_free, m = self._active_set_solve(m, candidate, strength, cutoff)
        if not np.all(np.isfinite(c_free)):
            raise NumericalError("oxygen iteration produced non-finite values")
        self._m_warm = m.copy()
        c = self._oxy.expand(c_free)
        self.state.c = c
        self._consumption_fraction = m
        return c

    def _active_set_solve(self, m, candidate, strength, cutoff):
        """Exact solution of the oxygen complementarity system.

        Partitions the consuming candidates into ON (full consumption, c
        above the cutoff), OFF (none, c below), and a pinned set V held
        exactly at the cutoff by fractional consumption.  For a trial
        partition, c = c_base - G_V (S_V m_V) with c_base the solve for
        the ON sources, and m_V follows from the dense |V| x |V| Schur
        system G_VV (S_V m_V) = c_base|_V - cutoff.  Out-of-bounds
        fractions and threshold violations move voxels between sets; the
        M-matrix structure makes this terminate.
        """
        tol = self.params.oxygen_tol
        bc = self._oxy.bc_rhs
        lu = self._oxy.lu
        unknown_idx = self._oxy.unknown_idx
        n = unknown_idx.size

        on = candidate & (m >= 1.0 - 1e-12)
        pin = candidate & (m > 1e-12) & (m < 1.0 - 1e-12)
        for it in range(80):
            s_on = np.where(on, strength, 0.0)
            c_base = lu.solve(bc - s_on)
            V = np.nonzero(pin)[0]
            if V.size:
                if V.size > 800:
                    raise NumericalError(
                        "oxygen cutoff interface unexpectedly large",
                        residual=float(V.size),
                    )
                cols = np.column_stack(
                    [self._oxy.green_column(int(unknown_idx[v])) for v in V]
                )
                G_VV = cols[V, :]
                rhs = c_base[V] - cutoff
                q = np.linalg.solve(G_VV, rhs)  # q = S_V * m_V
                m_V = q / np.maximum(strength[V], 1e-300)
                c = c_base - cols @ q
            else:
                m_V = np.empty(0)
                c = c_base

            moved = False
            new_on = on.copy()
            new_pin = pin.copy()
            if V.size:
                over = m_V > 1.0 + 1e-12
                under = m_V < -1e-12
                if over.any():
                    new_pin[V[over]] = False
                    new_on[V[over]] = True
                    moved = True
                if under.any():
                    new_pin[V[under]] = False
                    moved = True
            viol_on = on & (c < cutoff - tol)
            if viol_on.any():
                new_on[viol_on] = False
                new_pin[viol_on] = True
                moved = True
            viol_off = candidate & ~on & ~pin & (c > cutoff + tol)
            if viol_off.any():
                new_pin[viol_off] = True
                moved = True
            if not moved:
                m_out = np.zeros(n)
                m_out[on] = 1.0
                if V.size:
                    m_out[V] = np.clip(m_V, 0.0, 1.0)
                return c, m_out
            on, pin = new_on, new_pin
        raise NumericalError("oxygen active-set iteration did not terminate")

    def _pgs_setup(self):
        """Precompute the red-black sweep structure on the full lattice."""
        grid = self.grid
        nx, ny = grid.nx, grid.ny
        iy, ix = np.divmod(np.arange(grid.n_voxels), nx)
        color = ((ix + iy) % 2).astype(bool)
        unknown = np.zeros(grid.n_voxels, dtype=bool)
        unknown[self._oxy.unknown_idx] = True
        self._pgs_sets = []
        nbr = grid.neighbors
        for col in (False, True):
            sel = np.nonzero(unknown & (color == col))[0]
            self._pgs_sets.append((sel, nbr[:, sel]))

    def _pgs_polish(self, c_free, m, candidate, strength, cutoff, sweeps: int = 2):
        """Projected red-black Gauss-Seidel sweeps on the stationary balance.

        Per voxel 4c_i - sum(c_j) = -h^2 s_i m_i with m_i in [0, 1] admits
        exactly one of: full consumption (c_i above the cutoff), none
        (below), or a fractional rate pinning c_i at the cutoff.  Runs a
        fixed number of sweeps updating c and m together; stationarity of
        the composite outer iteration implies exact complementarity.
        """
        grid = self.grid
        if not hasattr(self, "_pgs_sets"):
            self._pgs_setup()
        h2 = grid.h**2
        c = np.ones(grid.n_voxels)
        c[self._oxy.unknown_idx] = c_free
        s_full = np.zeros(grid.n_voxels)
        s_full[self._oxy.unknown_idx] = strength
        cand_full = np.zeros(grid.n_voxels, dtype=bool)
        cand_full[self._oxy.unknown_idx] = candidate
        m_full = np.zeros(grid.n_voxels)
        m_full[self._oxy.unknown_idx] = m

        for _ in range(sweeps):
            for sel, nbrs in self._pgs_sets:
                s4 = c[nbrs[0]] + c[nbrs[1]] + c[nbrs[2]] + c[nbrs[3]]
                st = s_full[sel]
                full_on = (s4 - h2 * st) / 4.0
                off = s4 / 4.0
                c_new = np.where(
                    cand_full[sel] & (full_on >= cutoff),
                    full_on,
                    np.where(~cand_full[sel] | (off <= cutoff), off, cutoff),
                )
                frac = cand_full[sel] & (full_on < cutoff) & (off > cutoff)
                with np.errstate(divide="ignore", invalid="ignore"):
                    m_new = np.where(
                        frac, (s4 - 4.0 * cutoff) / np.maximum(h2 * st, 1e-300), 0.0
                    )
                m_new = np.where(cand_full[sel] & (full_on >= cutoff), 1.0, m_new)
                c[sel] = c_new
                m_full[sel] = np.clip(m_new, 0.0, 1.0)
        return c[self._oxy.unknown_idx], m_full[self._oxy.unknown_idx]

    # -- pressure ------------------------------------------------------------
    def _boundary_sets(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(ring indices, pocket mask, tumor mask) for the current density."""
        grid = self.grid
        tumor = self.state.rho >= self.params.rho_thresh
        sub = ~tumor
        labels, _ = ndimage.label(grid.as_2d(sub), structure=_STRUCTURE4)
        border = np.unique(np.concatenate([
            labels[0, :], labels[-1, :], labels[:, 0], labels[:, -1]
        ]))
        border = border[border != 0]
        flat = labels.ravel()
        exterior = np.isin(flat, border) & sub
        pocket = sub & ~exterior
        nbr = grid.neighbors
        adjacent = np.zeros(grid.n_voxels, dtype=bool)
        for d in range(4):
            j = nbr[d]
            ok = j >= 0
            adjacent[ok] |= tumor[j[ok]]
        ring = exterior & adjacent
        return np.nonzero(ring)[0], pocket, tumor

    def _ring_pins(self, ring_idx: np.ndarray) -> np.ndarray:
        pr = self.params
        vals = np.full(ring_idx.size, pr.p_ext)
        if pr.sigma == 0.0 or ring_idx.size == 0:
            return vals
        contours = extract_contours(self.state.rho, pr.rho_thresh, grid=self.grid)
        if not contours:
            return vals
        kept = filter_contours(contours, 0.95)
        kept_ids = {id(c) for c in kept}
        pts, curv, is_kept = [], [], []
        for c in contours:
            # resample at the voxel scale and drop sub-lattice wavelengths:
            # the continuum front is smooth, its staircase rendering is not
            rc = resample_uniform(c, 0.5 * self.grid.h)
            if id(c) in kept_ids and len(rc.points) >= 8:
                fc = lowpass_ring(rc, 4.0 * self.grid.h)
                pts.append(fc.points)
                # the lattice cannot express curvature radii below ~2h;
                # anything sharper is contour noise, not geometry
                curv.append(np.clip(fc.curvature, -0.5 / self.grid.h, 0.5 / self.grid.h))
                is_kept.append(np.ones(len(fc.points), dtype=bool))
            else:
                pts.append(rc.points)
                curv.append(np.zeros(len(rc.points)))
                is_kept.append(np.zeros(len(rc.points), dtype=bool))
        pts = np.vstack(pts)
        curv = np.concatenate(curv)
        is_kept = np.concatenate(is_kept)
        x, y = self.grid.xy
        _, nearest = cKDTree(pts).query(np.column_stack([x[ring_idx], y[ring_idx]]))
        # convex bulges (positive CCW curvature) are pinned above ambient so
        # adhesion compresses them; filtered-out contours carry no tension
        return vals + np.where(is_kept[nearest], pr.sigma * curv[nearest], 0.0)

    def solve_pressure(self, masks: dict[str, np.ndarray] | None = None) -> np.ndarray:
        """Darcy pressure with region sources inside the tumor mask.

        Sources are +mu_prol_eff on proliferative and -mu_death_eff on
        necrotic volumes (growth/loss per unit density); the first ring of
        exterior sub-threshold volumes is pinned at ambient plus the
        curvature condition, and enclosed sub-threshold pockets stay free.
        """
        pr = self.params
        tumor = self.state.rho >= pr.rho_thresh
        if not tumor.any():
            raise ConfigurationError("tumor mask is empty: simulation terminated")
        if masks is None:
            masks = classify_regions(self.state.c, self.state.rho, pr)
        key = hash(tumor.tobytes())
        if getattr(self, "_press_key", None) != key:
            # the Dirichlet geometry (ring, pockets, curvature pins) only
            # changes when a voxel crosses the density threshold
            ring_idx, pocket, _ = self._boundary_sets()
            pins = self._ring_pins(ring_idx)
            unknown = tumor | pocket
            self._press_system = PoissonSystem(
                self.grid, ring_idx, pins, scale="h2", unknown_mask=unknown
            )
            self._press_key = key
        system = self._press_system
        s = np.zeros(self.grid.n_voxels)
        s[masks["proliferative"]] = pr.mu_prol_eff
        s[masks["necrotic"]] = -pr.mu_death_eff
        p = system.expand(system.lu.solve(system.reduced_rhs(s)))
        outside = np.ones(self.grid.n_voxels, dtype=bool)
        outside[system.unknown_idx] = False
        outside[system.dirichlet_idx] = False
        p[outside] = pr.p_ext
        self.state.p = p
        # advection needs to know which voxels belong to the tissue medium:
        # across purely exterior edges the infinitely mobile surroundings
        # cannot sustain a pressure difference
        medium = np.zeros(self.grid.n_voxels, dtype=bool)
        medium[system.unknown_idx] = True
        self._medium_mask = medium
        return p

    # -- advection -----------------------------------------------------------
    def advect(self, masks: dict[str, np.ndarray] | None = None) -> float:
        """One explicit upwind step; returns the time increment taken.

        Flux between neighbors carries the donor density from the
        higher-pressure side; the growth source adds mu*rho on the frozen
        step-start region masks; scaled Gaussian noise (one counter-keyed
        draw per voxel) perturbs the density change; negative densities
        clamp to zero and the clamped mass is tallied, not redistributed.
        """
        grid = self.grid
        pr = self.params
        rho = self.state.rho
        p2 = grid.as_2d(self.state.p)
        r2 = grid.as_2d(rho)
        if masks is None:
            masks = classify_regions(self.state.c, rho, pr)

        medium = getattr(self, "_medium_mask", None)
        if medium is None:
            medium = rho >= pr.rho_thresh
        m2 = grid.as_2d(medium)

        flux_div = np.zeros_like(r2)
        inv_h2 = 1.0 / grid.h**2
        # x-direction edges: between (iy, ix) and (iy, ix+1); edges with both
        # sides outside the tissue see the uniform ambient pressure
        act = m2[:, :-1] | m2[:, 1:]
        dp = (p2[:, :-1] - p2[:, 1:]) * act
        donor = np.where(dp >= 0.0, r2[:, :-1], r2[:, 1:])
        f = dp * donor * inv_h2
        flux_div[:, :-1] -= f
        flux_div[:, 1:] += f
        # y-direction edges
        act = m2[:-1, :] | m2[1:, :]
        dp = (p2[:-1, :] - p2[1:, :]) * act
        donor = np.where(dp >= 0.0, r2[:-1, :], r2[1:, :])
        f = dp * donor * inv_h2
        flux_div[:-1, :] -= f
        flux_div[1:, :] += f

        gamma = np.zeros_like(rho)
        gamma[masks["proliferative"]] = pr.mu_prol_eff * rho[masks["proliferative"]]
        gamma[masks["necrotic"]] = -pr.mu_death_eff * rho[masks["necrotic"]]
        F = flux_div.ravel() + gamma
        if not np.all(np.isfinite(F)):
            raise NumericalError("advection produced non-finite fluxes")

        fmax = float(np.max(np.abs(F)))
        dt = grid.h if fmax == 0.0 else min(grid.h, 0.1 / fmax)

        change = dt * F
        if pr.omega > 0.0:
            noise_rng = np.random.Generator(
                np.random.Philox(key=(self.seed & 0xFFFFFFFFFFFFFFFF), counter=[0, 0, 0, self.step_index])
            )
            normals = noise_rng.standard_normal(rho.size)
            change = change + pr.omega * np.sqrt(np.abs(change)) * normals
        new_rho = rho + change
        negative = new_rho < 0.0
        if negative.any():
            self.clamped_mass += float(-new_rho[negative].sum()) * grid.h**2
            new_rho[negative] = 0.0
        self.state.rho = new_rho
        self.state.t += dt
        self.step_index += 1
        return dt

    # -- measurements ---------------------------------------------------------
    def main_contour(self) -> Contour | None:
        contours = extract_contours(self.state.rho, self.params.rho_thresh, grid=self.grid)
        return contours[0] if contours else None

    def metrics_row(self) -> dict[str, float]:
        masks = classify_regions(self.state.c, self.state.rho, self.params)
        V_p, V_q, V_n = region_volumes(masks, self.grid.h)
        row = {
            "t": self.state.t,
            "n_prolif": int(np.count_nonzero(masks["proliferative"])),
            "n_quiesc": int(np.count_nonzero(masks["quiescent"])),
            "n_necrotic": int(np.count_nonzero(masks["necrotic"])),
            "V_p": V_p,
            "V_q": V_q,
            "V_n": V_n,
        }
        contour = self.main_contour()
        row["roundness"] = roundness(contour) if contour is not None and len(contour) >= 4 else math.nan
        if self.state.rho.sum() > 0:
            x, y = self.grid.xy
            row["com_x"], row["com_y"] = center_of_mass(self.state.rho, x, y)
        else:
            row["com_x"] = row["com_y"] = math.nan
        return row


# ---------------------------------------------------------------------------
# spec-level operations
# ---------------------------------------------------------------------------

def solve_pressure_pde(state: PdeState, params: PdeParams, grid: Grid, seed: int = 0) -> Field:
    sim = PdeSimulation(grid, params, state.rho, seed=seed)
    sim.state.c = np.asarray(state.c, dtype=float).copy()
    return Field(grid, sim.solve_pressure())


def solve_oxygen_pde(state: PdeState, params: PdeParams, grid: Grid, dtau: float | None = None,
                     seed: int = 0) -> Field:
    sim = PdeSimulation(grid, params, state.rho, seed=seed)
    sim.state.c = np.asarray(state.c, dtype=float).copy()
    return Field(grid, sim.solve_oxygen(dtau=dtau))


def advect(state: PdeState, params: PdeParams, grid: Grid, seed: int = 0,
           step_index: int = 0) -> tuple[PdeState, float]:
    sim = PdeSimulation(grid, params, state.rho, seed=seed)
    sim.state.c = np.asarray(state.c, dtype=float).copy()
    sim.state.p = np.asarray(state.p, dtype=float).copy()
    sim.state.t = state.t
    sim.step_index = step_index
    dt = sim.advect()
    return sim.state, dt


# ---------------------------------------------------------------------------
# full runs
# ---------------------------------------------------------------------------

def disk_density(grid: Grid, radius: float, mode_k: int | None = None, eps: float = 0.0) -> np.ndarray:
    x, y = grid.xy
    r = np.hypot(x, y)
    if mode_k and eps:
        theta = np.arctan2(y, x)
        rim = radius + eps * radius * np.cos(mode_k * theta)
    else:
        rim = radius
    rho = np.zeros(grid.n_voxels)
    rho[r <= rim] = 1.0
    return rho


@dataclass
class PdeResult:
    grid: Grid
    params: PdeParams
    seed: int
    times: np.ndarray
    series: dict[str, np.ndarray]
    status: str
    n_steps: int
    final_state: PdeState
    clamped_mass: float
    snapshots: list[tuple[float, np.ndarray, np.ndarray, np.ndarray]] = field(default_factory=list)

    @property
    def V_p(self) -> np.ndarray:
        return self.series["V_p"]

    @property
    def V_q(self) -> np.ndarray:
        return self.series["V_q"]

    @property
    def V_n(self) -> np.ndarray:
        return self.series["V_n"]


def simulate_pde(
    params: PdeParams,
    *,
    seed: int = 0,
    t_end: float = 10.0,
    dx: float = 0.02,
    init_radius: float = 0.1,
    perturb_mode_k: int | None = None,
    perturb_eps: float = 0.0,
    snapshot_dt: float = 0.25,
    initial_rho: np.ndarray | None = None,
    keep_snapshots: bool = False,
    grid: Grid | None = None,
    max_steps: int | None = None,
) -> PdeResult:
    """March the mean-field model to ``t_end``.

    Each step classifies regions from the current oxygen, re-solves oxygen
    and pressure, then advects the density; metrics are recorded every
    ``snapshot_dt``.  Reproducible for a fixed seed (the only randomness
    is the counter-keyed density noise).
    """
    if grid is None:
        grid = Grid.covering_unit_disk(h=dx)
    if initial_rho is None:
        initial_rho = disk_density(grid, init_radius, perturb_mode_k, perturb_eps)
    sim = PdeSimulation(grid, params, initial_rho, seed=seed)

    times = [0.0]
    sim.solve_oxygen()
    rows = [sim.metrics_row()]
    snapshots = []
    if keep_snapshots:
        snapshots.append((0.0, sim.state.rho.copy(), sim.state.c.copy(), sim.state.p.copy()))
    next_tick = snapshot_dt
    status = "completed"
    n = 0
    while sim.state.t < t_end:
        if not np.any(sim.state.rho >= params.rho_thresh):
            status = "extinct"
            break
        sim.solve_oxygen()
        masks = classify_regions(sim.state.c, sim.state.rho, params)
        sim.solve_pressure(masks)
        sim.advect(masks)
        n += 1
        while next_tick <= sim.state.t and next_tick <= t_end + 1e-12:
            times.append(next_tick)
            row = sim.metrics_row()
            row["t"] = next_tick
            rows.append(row)
            if keep_snapshots:
                snapshots.append((next_tick, sim.state.rho.copy(), sim.state.c.copy(), sim.state.p.copy()))
            next_tick += snapshot_dt
        if max_steps is not None and n >= max_steps:
            status = "step-cap"
            break

    series = {k: np.asarray([r[k] for r in rows]) for k in rows[0] if k != "t"}
    return PdeResult(
        grid=grid, params=params, seed=seed, times=np.asarray(times), series=series,
        status=status, n_steps=n, final_state=sim.state, clamped_mass=sim.clamped_mass,
        snapshots=snapshots,
    )
