"""Stochastic lattice tumor simulator.

Cells live on a square lattice with occupancy u in {-1, 0, 1, 2}: empty,
one live cell, two live cells (above the carrying capacity of one), or one
necrotic cell.  Doubly occupied voxels act as pressure sources and
degrading necrotic voxels as sinks; the pressure field sets migration
rates, oxygen sets proliferation/death rates, and everything runs as an
exact continuous-time Markov chain (direct stochastic simulation).

Conventions fixed here (see README for the reasoning):

* The pressure solve uses the unscaled graph Laplacian
  ``sum_j (p_i - p_j) = s_i`` with ``s = +mu_prol`` at doubly occupied
  voxels and ``-mu_death`` at necrotic voxels, so a lone source relaxes at
  total rate ~ D2 * mu_prol and mechanics is fast compared to biology.
* Dirichlet values are pinned on the first ring of *empty* voxels around
  the tumor: ``p_ext + sigma * C`` next to the dominant boundary contour
  (counterclockwise-positive curvature, so bulges are compressed), plain
  ``p_ext`` next to filtered-out contours (holes, detached clusters).
  Enclosed empty pockets are free unknowns: they transmit pressure
  passively and can be refilled.
* Oxygen solves ``-Δc = -lambda * a(u)`` (a = live cell count) on the
  disk of radius one with the unit source pinned outside, in continuum
  normalization so the radial closed form is reproduced.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .contours import (Contour, contour_curvature, extract_contours, filter_contours,
                       resample_uniform)
from .errors import ConfigurationError, RateConsistencyError
from .grid import Field, Grid, PoissonSystem
from .metrics import center_of_mass, region_volumes, roundness

# event kinds
MOVE_TO_EMPTY = 0
MOVE_TO_OCCUPIED = 1
PROLIFERATE = 2
DIE = 3
DEGRADE = 4

_OXY_REANCHOR = 4096  # full re-solve cadence for the incremental oxygen updates


@dataclass(frozen=True)
class DlcmParams:
    """Cell-based model parameters (dimensionless, proliferation rate = 1)."""

    mu_prol: float = 1.0
    mu_death: float = 0.5
    mu_deg: float = 0.05
    kappa_prol: float = 0.94
    kappa_death: float = 0.93
    lam: float = 1.0
    sigma: float = 0.0
    d1: float = 25.0
    d2: float = 25.0
    p_ext: float = 0.0
    # discrete strength of one overcrowded voxel's pressure source on the
    # graph Laplacian; fixes the mechanics-to-biology rate ratio together
    # with d1/d2 (see README on calibration)
    source_scale: float = 1.0

    def __post_init__(self):
        for name in ("mu_prol", "mu_death", "mu_deg", "kappa_prol", "kappa_death",
                     "lam", "sigma", "d1", "d2", "source_scale"):
            if getattr(self, name) < 0.0:
                raise ConfigurationError(f"{name} must be nonnegative")
        if not (0.0 < self.kappa_death <= self.kappa_prol <= 1.0):
            raise ConfigurationError("need 0 < kappa_death <= kappa_prol <= 1")


def deg_rate(mu_death: float, delta: float) -> float:
    """Degradation rate that lets a necrotic cell reach a fraction ``delta``
    of the core radius before it disappears: mu_death / (2 log(1/delta))."""
    if not (0.0 < delta < 1.0):
        raise ConfigurationError(f"delta must lie in (0, 1), got {delta}")
    if mu_death < 0.0:
        raise ConfigurationError("mu_death must be nonnegative")
    return mu_death / (2.0 * math.log(1.0 / delta))


@dataclass
class EventSet:
    """Flat arrays of competing Poissonian events."""

    kind: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    rate: np.ndarray
    total: float

    def __len__(self) -> int:
        return self.rate.size


@dataclass
class DlcmState:
    """Occupancy lattice with its clock and random stream."""

    u: np.ndarray
    t: float
    seed: int
    rng: np.random.Generator

    @classmethod
    def fresh(cls, u: np.ndarray, seed: int) -> "DlcmState":
        return cls(u=np.asarray(u, dtype=np.int8).copy(), t=0.0, seed=seed,
                   rng=np.random.default_rng(seed))


# ---------------------------------------------------------------------------
# initial occupancies
# ---------------------------------------------------------------------------

def disk_occupancy(grid: Grid, radius: float, mode_k: int | None = None,
                   eps: float = 0.0) -> np.ndarray:
    """u = 1 on a disk, optionally with a cos(k*theta) rim ripple of
    relative amplitude eps (ripple amplitude = eps * radius)."""
    x, y = grid.xy
    r = np.hypot(x, y)
    if mode_k and eps:
        theta = np.arctan2(y, x)
        rim = radius + eps * radius * np.cos(mode_k * theta)
    else:
        rim = radius
    u = np.zeros(grid.n_voxels, dtype=np.int8)
    u[r <= rim] = 1
    return u


def layered_occupancy(grid: Grid, r_n: float, r_p: float, mode_k: int | None = None,
                      eps: float = 0.0, zeta_n_ratio: float = 0.0) -> np.ndarray:
    """Necrotic core inside r_n, live cells out to r_p, with matched rim and
    core ripples for near-equilibrium starts."""
    x, y = grid.xy
    r = np.hypot(x, y)
    theta = np.arctan2(y, x)
    rim = r_p + (eps * r_p * np.cos(mode_k * theta) if mode_k and eps else 0.0)
    core = r_n + (eps * r_p * zeta_n_ratio * np.cos(mode_k * theta) if mode_k and eps else 0.0)
    u = np.zeros(grid.n_voxels, dtype=np.int8)
    u[r <= rim] = 1
    u[r <= np.minimum(core, rim)] = -1
    return u


# ---------------------------------------------------------------------------
# simulation engine
# ---------------------------------------------------------------------------

class DlcmSimulation:
    """Owns the lattice state plus cached field solvers.

    The oxygen system never changes shape, so it is factorized once and
    updated exactly through cached unit-source responses.  The pressure
    system is re-factorized only when the tumor's shape (the set of
    occupied voxels) changes; source-only changes reuse the factorization.
    """

    def __init__(self, grid: Grid, params: DlcmParams, initial_u: np.ndarray, seed: int = 0):
        if grid.radius.max() < 1.0:
            raise ConfigurationError("the lattice must contain the unit oxygen-source ring")
        self.grid = grid
        self.params = params
        self.state = DlcmState.fresh(initial_u, seed)
        if self.state.u.size != grid.n_voxels:
            raise ConfigurationError("initial occupancy does not match the grid")

        ring = np.nonzero(grid.radius >= 1.0)[0]
        self._oxy = PoissonSystem(grid, ring, np.ones(ring.size), scale="h2")
        self._c_free = None
        self._oxy_updates = 0
        self.c = np.ones(grid.n_voxels)
        self._solve_oxygen_full()

        self._shape_version = 0
        self._pressure_cache_version = -1
        self._pressure_system: PoissonSystem | None = None
        self._contour_main: list[Contour] = []
        self.p = np.full(grid.n_voxels, params.p_ext)
        self._solve_pressure()

    # -- oxygen -------------------------------------------------------------
    def _oxygen_rhs(self) -> np.ndarray:
        a = np.maximum(self.state.u, 0).astype(float)
        return -self.params.lam * a

    def _solve_oxygen_full(self):
        rhs = self._oxygen_rhs()
        self._c_free = self._oxy.lu.solve(self._oxy.reduced_rhs(rhs))
        self.c = self._oxy.expand(self._c_free)
        self._oxy_updates = 0

    def _update_oxygen(self, changes: Iterable[tuple[int, int]]):
        """Apply exact unit-source responses for live-count changes."""
        for voxel, delta_a in changes:
            if delta_a == 0:
                continue
            if self.grid.radius[voxel] >= 1.0:
                continue  # on/behind the pinned oxygen source: c is held at 1 there
            self._c_free += (-self.params.lam * delta_a) * self._oxy.green_column(int(voxel))
            self._oxy_updates += 1
        if self._oxy_updates >= _OXY_REANCHOR:
            self._solve_oxygen_full()
        else:
            self.c[self._oxy.unknown_idx] = self._c_free

    # -- pressure -----------------------------------------------------------
    def _classify_empties(self) -> tuple[np.ndarray, np.ndarray]:
        """(ring, pockets): exterior-connected empties adjacent to the tumor,
        and enclosed empty voxels."""
        grid = self.grid
        empty2d = grid.as_2d(self.state.u == 0)
        labels, _ = ndimage.label(empty2d, structure=np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]]))
        border = np.unique(np.concatenate([
            labels[0, :], labels[-1, :], labels[:, 0], labels[:, -1]
        ]))
        border = border[border != 0]
        flat_labels = labels.ravel()
        exterior = np.isin(flat_labels, border) & (flat_labels != 0)
        pocket = (self.state.u == 0) & ~exterior

        occupied = self.state.u != 0
        nbr = grid.neighbors
        adjacent_to_tumor = np.zeros(grid.n_voxels, dtype=bool)
        for d in range(4):
            j = nbr[d]
            ok = j >= 0
            adjacent_to_tumor[ok] |= occupied[j[ok]]
        ring = exterior & adjacent_to_tumor
        return np.nonzero(ring)[0], pocket

    def _boundary_pins(self, ring_idx: np.ndarray) -> np.ndarray:
        """Dirichlet values on the ring: ambient plus adhesion curvature."""
        vals = np.full(ring_idx.size, self.params.p_ext)
        if self.params.sigma == 0.0 or ring_idx.size == 0:
            self._contour_main = []
            return vals
        indicator = (self.state.u != 0).astype(float)
        contours = extract_contours(indicator, 0.5, grid=self.grid)
        if not contours:
            self._contour_main = []
            return vals
        kept = filter_contours(contours, 0.95)
        kept_ids = {id(c) for c in kept}
        self._contour_main = kept
        pts, curv, is_kept = [], [], []
        for c in contours:
            # voxel-scale resampling bounds the curvature the pins can see
            rc = resample_uniform(c, 0.5 * self.grid.h)
            pts.append(rc.points)
            if id(c) in kept_ids and len(rc.points) >= 4:
                # cap at the sharpest turn the lattice can express (a half
                # turn across one voxel); spline spikes beyond it are noise
                curv.append(np.clip(contour_curvature(rc), -2.0 / self.grid.h, 2.0 / self.grid.h))
                is_kept.append(np.ones(len(rc.points), dtype=bool))
            else:
                curv.append(np.zeros(len(rc.points)))
                is_kept.append(np.zeros(len(rc.points), dtype=bool))
        pts = np.vstack(pts)
        curv = np.concatenate(curv)
        is_kept = np.concatenate(is_kept)
        x, y = self.grid.xy
        tree = cKDTree(pts)
        _, nearest = tree.query(np.column_stack([x[ring_idx], y[ring_idx]]))
        # bulges (positive curvature) are pinned above ambient: net cell-cell
        # adhesion compresses protrusions and backfills indentations
        vals = vals + np.where(is_kept[nearest], self.params.sigma * curv[nearest], 0.0)
        return vals

    def _solve_pressure(self):
        if self._pressure_cache_version != self._shape_version:
            ring_idx, pocket = self._classify_empties()
            if ring_idx.size == 0 and not np.any(self.state.u != 0):
                self._pressure_system = None
                self.p = np.full(self.grid.n_voxels, self.params.p_ext)
                return
            unknown = (self.state.u != 0) | pocket
            pins = self._boundary_pins(ring_idx)
            self._pressure_system = PoissonSystem(
                self.grid, ring_idx, pins, scale="graph", unknown_mask=unknown
            )
            self._pressure_cache_version = self._shape_version
        sys_ = self._pressure_system
        if sys_ is None:
            return
        s = np.zeros(self.grid.n_voxels)
        s[self.state.u == 2] = self.params.source_scale * self.params.mu_prol
        s[self.state.u == -1] = -self.params.source_scale * self.params.mu_death
        p = sys_.expand(sys_.lu.solve(sys_.reduced_rhs(s)))
        outside = np.ones(self.grid.n_voxels, dtype=bool)
        outside[sys_.unknown_idx] = False
        outside[sys_.dirichlet_idx] = False
        p[outside] = self.params.p_ext
        self.p = p

    def refresh_fields(self):
        self._solve_pressure()

    # -- events -------------------------------------------------------------
    def build_events(self) -> EventSet:
        u, p, c = self.state.u, self.p, self.c
        pr = self.params
        nbr = self.grid.neighbors
        kinds, srcs, dsts, rates = [], [], [], []

        occupied = u != 0
        movable = occupied  # live cells and necrotic debris both advect
        if pr.sigma > 0.0:
            empty_nbr = np.zeros(self.grid.n_voxels, dtype=bool)
            for d in range(4):
                j = nbr[d]
                ok = j >= 0
                empty_nbr[ok] |= u[j[ok]] == 0
            rim_single = (u == 1) & empty_nbr

        for d in range(4):
            j = nbr[d]
            valid = j >= 0
            jj = np.where(valid, j, 0)
            dp = p - np.where(valid, p[jj], 0.0)
            pos = dp > 0.0

            m = movable & valid & (u[jj] == 0) & pos
            if m.any():
                i = np.nonzero(m)[0]
                kinds.append(np.full(i.size, MOVE_TO_EMPTY, dtype=np.int8))
                srcs.append(i)
                dsts.append(j[i])
                rates.append(pr.d1 * dp[i])

            m = (u == 2) & valid & (u[jj] == 1) & pos
            if m.any():
                i = np.nonzero(m)[0]
                kinds.append(np.full(i.size, MOVE_TO_OCCUPIED, dtype=np.int8))
                srcs.append(i)
                dsts.append(j[i])
                rates.append(pr.d2 * dp[i])

            if pr.sigma > 0.0:
                m = rim_single & valid & (u[jj] == 1) & pos
                if m.any():
                    i = np.nonzero(m)[0]
                    kinds.append(np.full(i.size, MOVE_TO_OCCUPIED, dtype=np.int8))
                    srcs.append(i)
                    dsts.append(j[i])
                    rates.append(pr.d1 * dp[i])

        m = (u == 1) & (c >= pr.kappa_prol)
        if m.any() and pr.mu_prol > 0.0:
            i = np.nonzero(m)[0]
            kinds.append(np.full(i.size, PROLIFERATE, dtype=np.int8))
            srcs.append(i)
            dsts.append(np.full(i.size, -1))
            rates.append(np.full(i.size, pr.mu_prol))

        m = (u >= 1) & (c < pr.kappa_death)
        if m.any() and pr.mu_death > 0.0:
            i = np.nonzero(m)[0]
            kinds.append(np.full(i.size, DIE, dtype=np.int8))
            srcs.append(i)
            dsts.append(np.full(i.size, -1))
            rates.append(np.full(i.size, pr.mu_death))

        m = u == -1
        if m.any() and pr.mu_deg > 0.0:
            i = np.nonzero(m)[0]
            kinds.append(np.full(i.size, DEGRADE, dtype=np.int8))
            srcs.append(i)
            dsts.append(np.full(i.size, -1))
            rates.append(np.full(i.size, pr.mu_deg))

        if not kinds:
            return EventSet(np.empty(0, np.int8), np.empty(0, np.int64),
                            np.empty(0, np.int64), np.empty(0, float), 0.0)
        rate = np.concatenate(rates)
        if np.any(rate < 0.0):
            raise RateConsistencyError("negative event rate: sign bug in rate assembly")
        return EventSet(
            np.concatenate(kinds), np.concatenate(srcs).astype(np.int64),
            np.concatenate(dsts).astype(np.int64), rate, float(rate.sum()),
        )

    def apply_event(self, kind: int, i: int, j: int) -> tuple[list[tuple[int, int]], bool]:
        """Mutate occupancy; returns (live-count changes, shape changed)."""
        u = self.state.u
        if kind == MOVE_TO_EMPTY:
            if u[i] == -1:
                u[i] = 0
                u[j] = -1
                return ([], True)
            u[i] -= 1
            u[j] += 1
            return ([(i, -1), (j, +1)], True)
        if kind == MOVE_TO_OCCUPIED:
            vacated = u[i] == 1
            u[i] -= 1
            u[j] += 1
            return ([(i, -1), (j, +1)], bool(vacated))
        if kind == PROLIFERATE:
            u[i] = 2
            return ([(i, +1)], False)
        if kind == DIE:
            delta = -int(u[i])
            u[i] = -1
            return ([(i, delta)], False)
        if kind == DEGRADE:
            u[i] = 0
            return ([], True)
        raise ConfigurationError(f"unknown event kind {kind}")

    def step_event(self, events: EventSet) -> float:
        """Sample one event (direct SSA), apply it, and update the fields."""
        if events.total <= 0.0:
            raise ConfigurationError("total event rate is zero: quiescent deadlock")
        rng = self.state.rng
        dt = rng.exponential(1.0 / events.total)
        target = rng.random() * events.total
        k = int(np.searchsorted(np.cumsum(events.rate), target))
        k = min(k, len(events.rate) - 1)
        changes, shape_changed = self.apply_event(
            int(events.kind[k]), int(events.src[k]), int(events.dst[k])
        )
        if shape_changed:
            self._shape_version += 1
        self._update_oxygen(changes)
        self.state.t += dt
        return dt

    # -- measurements --------------------------------------------------------
    def classify(self) -> dict[str, np.ndarray]:
        u, c = self.state.u, self.c
        pr = self.params
        live = u >= 1
        return {
            "proliferative": live & (c >= pr.kappa_prol),
            "quiescent": live & (c < pr.kappa_prol),
            "necrotic": u == -1,
        }

    def main_contour(self) -> Contour | None:
        contours = extract_contours((self.state.u != 0).astype(float), 0.5, grid=self.grid)
        if not contours:
            return None
        return contours[0]

    def metrics_row(self) -> dict[str, float]:
        masks = self.classify()
        u = self.state.u
        V_p, V_q, V_n = region_volumes(masks, self.grid.h)
        a = np.maximum(u, 0)
        row = {
            "t": self.state.t,
            "n_prolif": int(a[masks["proliferative"]].sum()),
            "n_quiesc": int(a[masks["quiescent"]].sum()),
            "n_necrotic": int(np.count_nonzero(masks["necrotic"])),
            "V_p": V_p,
            "V_q": V_q,
            "V_n": V_n,
        }
        contour = self.main_contour()
        row["roundness"] = roundness(contour) if contour is not None and len(contour) >= 4 else math.nan
        w = np.abs(u).astype(float)
        if w.sum() > 0:
            x, y = self.grid.xy
            row["com_x"], row["com_y"] = center_of_mass(w, x, y)
        else:
            row["com_x"] = row["com_y"] = math.nan
        return row


# ---------------------------------------------------------------------------
# spec-level operations (thin functional wrappers over the engine)
# ---------------------------------------------------------------------------

def solve_pressure_dlcm(state: DlcmState, params: DlcmParams, grid: Grid) -> Field:
    if not np.any(state.u != 0):
        raise ConfigurationError("tumor domain is empty: simulation terminated")
    sim = DlcmSimulation(grid, params, state.u, seed=state.seed)
    return Field(grid, sim.p)


def solve_oxygen_dlcm(state: DlcmState, params: DlcmParams, grid: Grid) -> Field:
    sim = DlcmSimulation(grid, params, state.u, seed=state.seed)
    return Field(grid, sim.c)


def build_events(state: DlcmState, pressure: Field, oxygen: Field, params: DlcmParams) -> EventSet:
    sim = DlcmSimulation(pressure.grid, params, state.u, seed=state.seed)
    sim.p = pressure.values
    sim.c = oxygen.values
    return sim.build_events()


def step_event(sim: DlcmSimulation, events: EventSet, rng: np.random.Generator | None = None) -> tuple[DlcmState, float]:
    if rng is not None:
        sim.state.rng = rng
    dt = sim.step_event(events)
    sim.refresh_fields()
    return sim.state, dt


# ---------------------------------------------------------------------------
# full runs
# ---------------------------------------------------------------------------

@dataclass
class DlcmResult:
    grid: Grid
    params: DlcmParams
    seed: int
    times: np.ndarray
    series: dict[str, np.ndarray]
    status: str
    n_events: int
    final_u: np.ndarray
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


def simulate_dlcm(
    params: DlcmParams,
    *,
    seed: int = 0,
    t_end: float = 30.0,
    dx: float = 0.02,
    init_radius: float = 0.05,
    perturb_mode_k: int | None = None,
    perturb_eps: float = 0.0,
    snapshot_dt: float = 0.25,
    field_update_stride: int = 1,
    initial_u: np.ndarray | None = None,
    keep_snapshots: bool = False,
    grid: Grid | None = None,
    max_events: int | None = None,
) -> DlcmResult:
    """Run the event loop to ``t_end`` and record metrics every ``snapshot_dt``.

    Fields are re-solved after every state-changing event by default;
    ``field_update_stride = n`` re-solves every n events as a documented
    approximation.  Runs are bitwise reproducible for a fixed seed, grid,
    and stride policy.
    """
    if field_update_stride < 1:
        raise ConfigurationError("field_update_stride must be >= 1")
    if grid is None:
        grid = Grid.covering_unit_disk(h=dx)
    if initial_u is None:
        initial_u = disk_occupancy(grid, init_radius, perturb_mode_k, perturb_eps)
    sim = DlcmSimulation(grid, params, initial_u, seed=seed)

    times = [0.0]
    rows = [sim.metrics_row()]
    snapshots = []
    if keep_snapshots:
        snapshots.append((0.0, sim.state.u.copy(), sim.c.copy(), sim.p.copy()))
    next_tick = snapshot_dt
    status = "completed"
    n_events = 0
    stride_count = 0

    while sim.state.t < t_end:
        if not np.any(sim.state.u != 0):
            status = "extinct"
            break
        events = sim.build_events()
        if events.total <= 0.0:
            status = "deadlock"
            break
        dt = sim.step_event(events)
        n_events += 1
        stride_count += 1
        if stride_count >= field_update_stride:
            sim.refresh_fields()
            stride_count = 0
        while next_tick <= sim.state.t and next_tick <= t_end + 1e-12:
            times.append(next_tick)
            row = sim.metrics_row()
            row["t"] = next_tick
            rows.append(row)
            if keep_snapshots:
                snapshots.append((next_tick, sim.state.u.copy(), sim.c.copy(), sim.p.copy()))
            next_tick += snapshot_dt
        if max_events is not None and n_events >= max_events:
            status = "event-cap"
            break

    series = {k: np.asarray([r[k] for r in rows]) for k in rows[0] if k != "t"}
    return DlcmResult(
        grid=grid, params=params, seed=seed, times=np.asarray(times),
        series=series, status=status, n_events=n_events,
        final_u=sim.state.u.copy(), snapshots=snapshots,
    )
