"""Reduced radially symmetric tumor model.

With unit cell density inside the tumor the oxygen field has a closed
form, the oxygen-threshold interfaces (r_n, r_q) follow from two algebraic
relations given the rim radius r_p, and the rim obeys the scalar balance

    d(r_p^2)/dt = -mu_death r_n^2 - r_q^2 + r_p^2

in units where the proliferation rate is one.  This module provides the
closed-form oxygen profile, the interface algebra and its inversion, an
RK4 integrator for the volume balance, stationary states, and the single
eigenvalue of the reduced dynamics with the small-tumor stability
guarantee (any equilibrium with r_p <= exp(-1) is stable).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from .errors import (
    ConfigurationError,
    DomainExitError,
    InfeasibleStateError,
    LimitCaseWarning,
    NoEquilibriumError,
)

_XTOL = 1e-15
_RTOL = 4.0 * np.finfo(float).eps


@dataclass(frozen=True)
class RadialState:
    """Interface radii (r_n, r_q, r_p), all relative to the oxygen source at 1."""

    r_n: float
    r_q: float
    r_p: float

    def __post_init__(self):
        eps = 1e-12
        ok = (
            -eps <= self.r_n <= self.r_q + eps
            and self.r_q <= self.r_p + eps
            and self.r_p < 1.0
        )
        if not ok:
            raise ConfigurationError(
                f"radii must satisfy 0 <= r_n <= r_q <= r_p < 1, got "
                f"({self.r_n}, {self.r_q}, {self.r_p})"
            )

    def volumes(self) -> tuple[float, float, float]:
        """Cumulative region areas (V_n, V_q, V_p) = pi r^2."""
        return (math.pi * self.r_n**2, math.pi * self.r_q**2, math.pi * self.r_p**2)


@dataclass(frozen=True)
class RadialParams:
    """Dimensionless parameters of the reduced model.

    lam is the oxygen consumption-to-diffusion ratio; kappa_prol and
    kappa_death the oxygen thresholds for proliferation and survival;
    mu_death the death-to-proliferation rate ratio.  K_prol and K_death
    are the derived oxygen-deficit capacities 4(1-kappa)/lam.
    """

    lam: float
    kappa_prol: float
    kappa_death: float
    mu_death: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ConfigurationError(f"lambda must be positive, got {self.lam}")
        if not (0.0 < self.kappa_death <= self.kappa_prol <= 1.0):
            raise ConfigurationError(
                f"need 0 < kappa_death <= kappa_prol <= 1, got "
                f"({self.kappa_prol}, {self.kappa_death})"
            )
        if self.mu_death < 0:
            raise ConfigurationError(f"mu_death must be nonnegative, got {self.mu_death}")

    @property
    def K_prol(self) -> float:
        return 4.0 * (1.0 - self.kappa_prol) / self.lam

    @property
    def K_death(self) -> float:
        return 4.0 * (1.0 - self.kappa_death) / self.lam

    @classmethod
    def from_K(cls, K_prol: float, K_death: float, mu_death: float, lam: float = 1.0) -> "RadialParams":
        """Build params realizing given deficit capacities (thresholds back-computed)."""
        if K_prol > K_death:
            raise ConfigurationError("K_prol must not exceed K_death")
        return cls(
            lam=lam,
            kappa_prol=1.0 - 0.25 * lam * K_prol,
            kappa_death=1.0 - 0.25 * lam * K_death,
            mu_death=mu_death,
        )


@dataclass
class RadialTrajectory:
    """Sampled reduced-model trajectory with cumulative region volumes."""

    times: np.ndarray
    r_n: np.ndarray
    r_q: np.ndarray
    r_p: np.ndarray
    status: str = "completed"

    @property
    def V_n(self) -> np.ndarray:
        return math.pi * self.r_n**2

    @property
    def V_q(self) -> np.ndarray:
        return math.pi * self.r_q**2

    @property
    def V_p(self) -> np.ndarray:
        return math.pi * self.r_p**2

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t,r_n,r_q,r_p,V_n,V_q,V_p\n")
            for k in range(len(self.times)):
                fh.write(
                    f"{self.times[k]!r},{self.r_n[k]!r},{self.r_q[k]!r},{self.r_p[k]!r},"
                    f"{self.V_n[k]!r},{self.V_q[k]!r},{self.V_p[k]!r}\n"
                )


# ---------------------------------------------------------------------------
# oxygen profile and interface algebra
# ---------------------------------------------------------------------------

def oxygen_profile(state: RadialState, lam: float, r) -> float | np.ndarray:
    """Closed-form radial oxygen level c(r), C^1 across r_n and r_p, c(1) = 1.

    Inside the consuming annulus [r_n, r_p] the profile is
    ``1 + lam/2 (r_p^2 log r_p - r_n^2 log r + (r^2 - r_p^2)/2)``; outside
    the tumor it decays logarithmically to the unit source at radius one;
    below r_n it is constant (no consumption by dead material), equal to
    the death threshold whenever the state satisfies the interface algebra.
    """
    r = np.asarray(r, dtype=float)
    rn, rp = state.r_n, state.r_p

    def annulus(rr):
        logr = np.log(rr)
        return 1.0 + 0.5 * lam * (
            rp**2 * math.log(rp) - rn**2 * logr + 0.5 * (rr**2 - rp**2)
        )

    outside = 1.0 + 0.5 * lam * (rp**2 - rn**2) * np.log(np.maximum(r, rp))
    core_level = annulus(rn) if rn > 0.0 else annulus(max(rp * 1e-300, 1e-300)) if rp == 0 else None
    if rn > 0.0:
        inner = np.full_like(r, float(core_level))
    else:
        # no necrotic core: the annulus branch extends to the center,
        # where -r_n^2 log r vanishes and c(0) = 1 + lam/2 (r_p^2 log r_p - r_p^2/2)
        inner = np.full_like(r, 1.0 + 0.5 * lam * (rp**2 * math.log(rp) - 0.5 * rp**2) if rp > 0 else 1.0)
    mid = annulus(np.maximum(np.minimum(r, rp), max(rn, 1e-300)))
    out = np.where(r >= rp, outside, np.where(r <= rn, inner, mid))
    if rn == 0.0 and rp > 0.0:
        out = np.where(r < rp, annulus(np.maximum(r, 1e-300)), out)
        out = np.where(r == 0.0, inner, out)
    return float(out) if out.ndim == 0 else out


def _deficit_capacity(r_p: float) -> float:
    """Center oxygen deficit 4(1 - c(0))/lam of a fully proliferative disk."""
    return r_p**2 - r_p**2 * math.log(r_p**2)


def _relation_death(r_n: float, r_p: float) -> float:
    """Deficit produced at the necrotic interface: equals K_death at r_n."""
    lg = r_p**2 * math.log(r_p**2)
    if r_n <= 0.0:
        return -lg + r_p**2
    return -lg + r_n**2 * math.log(r_n**2) - r_n**2 + r_p**2


def _relation_prol(r_q: float, r_n: float, r_p: float) -> float:
    """Deficit produced at the quiescent interface: equals K_prol at r_q."""
    lg = r_p**2 * math.log(r_p**2)
    if r_q <= 0.0:
        return -lg + r_p**2
    return -lg + r_n**2 * math.log(r_q**2) - r_q**2 + r_p**2


def interfaces_from_rp(r_p: float, params: RadialParams) -> tuple[float, float]:
    """Invert the interface algebra: (r_n, r_q) for a given rim radius.

    Both relations are monotone on the physical branch, so r_n follows
    from a single bracketed root find (its relation does not involve r_q)
    and r_q from a second one.  Interfaces that do not exist (oxygen
    minimum above the corresponding threshold) come back as 0; a rim
    oxygen level below the proliferation threshold clamps r_q to r_p.
    """
    if not (0.0 < r_p < 1.0):
        raise ConfigurationError(f"r_p must lie in (0, 1), got {r_p}")
    # rim oxygen of the fully proliferative profile; below zero the state
    # cannot be realized by the model's oxygen physics at all
    c_rim = 1.0 + 0.5 * params.lam * r_p**2 * math.log(r_p)
    if c_rim < 0.0:
        raise InfeasibleStateError(
            f"rim oxygen {c_rim:.4f} < 0 for r_p={r_p}: state outside model range"
        )
    G = _deficit_capacity(r_p)
    if params.K_prol >= G:
        return (0.0, 0.0)  # oxygen minimum stays above the proliferation threshold

    if params.K_death >= G:
        r_n = 0.0
    else:
        f = lambda rn: _relation_death(rn, r_p) - params.K_death
        r_n = brentq(f, 0.0, r_p, xtol=_XTOL, rtol=_RTOL, maxiter=200)

    g = lambda rq: _relation_prol(rq, r_n, r_p) - params.K_prol
    g_at_rp = g(r_p)
    if g_at_rp > 0.0:
        # rim oxygen below kappa_prol: no proliferative annulus remains
        warnings.warn("rim oxygen below the proliferation threshold; r_q clamped to r_p",
                      LimitCaseWarning, stacklevel=2)
        return (r_n, r_p)
    if r_n == 0.0:
        r_q2 = G - params.K_prol  # closed form when no necrotic core exists
        return (0.0, math.sqrt(max(r_q2, 0.0)))
    if g(r_n) <= 0.0:
        return (r_n, r_n)  # thresholds coincide: the quiescent annulus collapses
    r_q = brentq(g, r_n, r_p, xtol=_XTOL, rtol=_RTOL, maxiter=200)
    return (r_n, r_q)


def interfaces_residuals(state: RadialState, params: RadialParams) -> tuple[float, float]:
    """Residuals of the two interface relations at a state (diagnostics)."""
    res_d = _relation_death(state.r_n, state.r_p) - params.K_death if state.r_n > 0 else 0.0
    res_p = _relation_prol(state.r_q, state.r_n, state.r_p) - params.K_prol if state.r_q > 0 else 0.0
    return (res_p, res_d)


# ---------------------------------------------------------------------------
# dynamics
# ---------------------------------------------------------------------------

def _rhs_y(y: float, params: RadialParams) -> float:
    """d(r_p^2)/dt as a function of y = r_p^2."""
    r_p = math.sqrt(y)
    r_n, r_q = interfaces_from_rp(r_p, params)
    return y - r_q**2 - params.mu_death * r_n**2


def step(state: RadialState, params: RadialParams, dt: float) -> RadialState:
    """One explicit RK4 step of the volume balance, re-solving interfaces per stage."""
    if not dt > 0.0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    y = state.r_p**2
    try:
        k1 = _rhs_y(y, params)
        k2 = _rhs_y(y + 0.5 * dt * k1, params)
        k3 = _rhs_y(y + 0.5 * dt * k2, params)
        k4 = _rhs_y(y + dt * k3, params)
    except ConfigurationError as exc:
        # an RK stage left (0, 1): the model assumptions end here
        raise DomainExitError(str(exc)) from exc
    y_new = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not (0.0 < y_new < 1.0):
        raise DomainExitError(
            f"r_p^2 left (0, 1) (value {y_new:.6g}); avascular model validity ends"
        )
    r_p = math.sqrt(y_new)
    r_n, r_q = interfaces_from_rp(r_p, params)
    return RadialState(r_n=r_n, r_q=r_q, r_p=r_p)


def simulate_radial(
    params: RadialParams,
    r_p0: float,
    t_end: float,
    dt: float = 1e-3,
    record_dt: float | None = None,
) -> RadialTrajectory:
    """Integrate the reduced model from a fully specified rim radius.

    Records every ``record_dt`` (default: every step is too fine; defaults
    to 100 steps).  Ends early with status "domain-exit" if the radius
    leaves (0, 1).
    """
    if record_dt is None:
        record_dt = 100 * dt
    n_steps = int(round(t_end / dt))
    r_n0, r_q0 = interfaces_from_rp(r_p0, params)
    state = RadialState(r_n0, r_q0, r_p0)
    times = [0.0]
    rows = [(state.r_n, state.r_q, state.r_p)]
    status = "completed"
    t = 0.0
    next_record = record_dt
    for _ in range(n_steps):
        try:
            state = step(state, params, dt)
        except DomainExitError:
            status = "domain-exit"
            break
        t += dt
        if t + 1e-12 >= next_record:
            times.append(t)
            rows.append((state.r_n, state.r_q, state.r_p))
            next_record += record_dt
    if times[-1] < t:
        times.append(t)
        rows.append((state.r_n, state.r_q, state.r_p))
    arr = np.asarray(rows)
    return RadialTrajectory(np.asarray(times), arr[:, 0], arr[:, 1], arr[:, 2], status=status)


def stationary_state(params: RadialParams, r_p_max: float = 0.999) -> RadialState:
    """Smallest rim radius where the volume balance vanishes.

    Scans r_p for a sign change of the balance (positive for small radii,
    where growth is purely proliferative) and polishes with Brent's
    method.  Raises NoEquilibriumError when growth never stalls in (0, 1).
    """
    if not params.mu_death > 0.0:
        raise NoEquilibriumError("mu_death must be positive for a stationary state")

    def f(r_p: float) -> float:
        return _rhs_y(r_p**2, params)

    grid = np.geomspace(1e-4, r_p_max, 800)
    prev_r, prev_f = None, None
    for r in grid:
        try:
            val = f(r)
        except InfeasibleStateError:
            break
        if prev_f is not None and prev_f > 0.0 and val <= 0.0:
            r_root = brentq(f, prev_r, r, xtol=_XTOL, rtol=_RTOL, maxiter=200)
            r_n, r_q = interfaces_from_rp(r_root, params)
            return RadialState(r_n=r_n, r_q=r_q, r_p=r_root)
        prev_r, prev_f = r, val
    raise NoEquilibriumError("no stationary rim radius in (0, 1) for these parameters")


def params_from_equilibrium(r_n: float, r_q: float, r_p: float, lam: float = 1.0) -> RadialParams:
    """Parameters that make (r_n, r_q, r_p) a stationary solution.

    mu_death follows from the vanishing volume balance,
    (K_prol, K_death) by forward evaluation of the interface relations;
    the returned params carry thresholds realizing those capacities at
    the given lambda.
    """
    if not (0.0 < r_n < r_q < r_p < 1.0) and not (0.0 < r_n <= r_q <= r_p < 1.0):
        raise ConfigurationError(
            f"need 0 < r_n <= r_q <= r_p < 1, got ({r_n}, {r_q}, {r_p})"
        )
    if r_n == 0.0:
        raise InfeasibleStateError("r_n = 0 with r_q < r_p leaves mu_death undefined")
    mu_death = (r_p**2 - r_q**2) / r_n**2
    K_prol = _relation_prol(r_q, r_n, r_p)
    K_death = _relation_death(r_n, r_p)
    return RadialParams.from_K(K_prol=K_prol, K_death=K_death, mu_death=mu_death, lam=lam)


# ---------------------------------------------------------------------------
# linear stability of the reduced dynamics
# ---------------------------------------------------------------------------

def _phi(eta: float) -> float:
    """-log(eta)/(1 - eta), continuous at eta = 1."""
    if eta <= 0.0:
        return math.inf
    d = 1.0 - eta
    if abs(d) < 1e-8:
        return 1.0 + 0.5 * d + d * d / 3.0
    return -math.log(eta) / d


def radial_eigenvalue(state: RadialState, mu_death: float) -> float:
    """Eigenvalue of the reduced dynamics linearized at an equilibrium.

    Negative values mean the radially symmetric stationary state attracts.
    The degenerate limits r_n -> 0 and r_q -> r_n are evaluated
    analytically and flagged with a LimitCaseWarning.
    """
    rn, rq, rp = state.r_n, state.r_q, state.r_p
    if not rp > 0.0:
        raise ConfigurationError("r_p must be positive")
    if rn == 0.0:
        # limit eta -> 0: the bracket grows like -2 log r_n while the
        # prefactor decays like log r_p / log r_n
        warnings.warn("r_n = 0: returning the analytic eigenvalue limit",
                      LimitCaseWarning, stacklevel=2)
        return 1.0 + 2.0 * math.log(rp)
    eta = (rn / rq) ** 2 if rq > 0 else 1.0
    if rq == rn:
        warnings.warn("r_q = r_n: quiescent annulus collapsed, analytic limit used",
                      LimitCaseWarning, stacklevel=2)
    return 1.0 - math.log(rp) / math.log(rn) * (mu_death + _phi(eta))


def eigenvalue_from_proof_parameterization(eta: float, mu_death: float, r_p: float) -> float:
    """Eigenvalue at the equilibrium built from (eta, mu_death, r_p).

    The stationarity condition fixes r_q^2 = r_p^2/(1 + mu_death eta) and
    r_n^2 = eta r_q^2; used by the stability sweep over the whole
    parameter family.
    """
    log_rp = math.log(r_p)
    denom = log_rp + 0.5 * math.log(eta / (1.0 + mu_death * eta))
    return 1.0 - log_rp / denom * (mu_death + _phi(eta))


def state_from_proof_parameterization(eta: float, mu_death: float, r_p: float) -> RadialState:
    rq2 = r_p**2 / (1.0 + mu_death * eta)
    rn2 = eta * rq2
    return RadialState(math.sqrt(rn2), math.sqrt(rq2), r_p)
