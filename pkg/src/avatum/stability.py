"""Linear stability of the radially symmetric tumor.

A cos(kθ) ripple of amplitude ε ζ_p on the rim induces first-order ripples
ε ζ_q, ε ζ_n on the oxygen-threshold interfaces, and the rim ripple grows
as exp(Λ(k) t).  Λ(k) splits into a Saffman-Taylor part driven by the
rim velocity and the exterior-to-interior mobility contrast, a mass-growth
part damped by the induced interface ripples, and a surface-tension part
−σ k(k²−1)/r_p³ that never touches k = 1 (pure translation: "creeping"
toward the oxygen source).

``d_ext`` is the exterior-to-tumor Darcy coefficient ratio; ``math.inf``
is accepted as a first-class value and evaluated through the homogeneous
outer-pressure branch rather than as a large float.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .radial import RadialState

__all__ = [
    "StabilityInput",
    "PerturbationResponse",
    "DispersionResult",
    "front_velocity",
    "radial_pressure_profile",
    "perturbation_response",
    "dispersion",
    "dispersion_limit_small_dext",
    "growth_discriminant",
    "sigma_stable",
    "stabilizing_sigma",
    "creeping_rate",
]


@dataclass(frozen=True)
class StabilityInput:
    """Radial state plus the parameters the growth rates depend on."""

    state: RadialState
    mu_death: float
    d_ext: float = math.inf
    sigma: float = 0.0

    def __post_init__(self):
        if not (self.d_ext > 0.0):
            raise ConfigurationError(f"d_ext must be positive (or inf), got {self.d_ext}")
        if self.sigma < 0.0:
            raise ConfigurationError(f"sigma must be nonnegative, got {self.sigma}")
        if self.mu_death < 0.0:
            raise ConfigurationError(f"mu_death must be nonnegative, got {self.mu_death}")


@dataclass(frozen=True)
class PerturbationResponse:
    """First-order interface ripple amplitudes relative to the rim ripple."""

    k: int
    zeta_q_ratio: float
    zeta_n_ratio: float


@dataclass(frozen=True)
class DispersionResult:
    """Mode growth rate with its named diagnostic contributions.

    total = saffman_taylor + growth_baseline + inner + surface, where
    saffman_taylor = (r_p'/r_p)((1-D)/(1+D) k - 1), growth_baseline =
    D/(1+D), inner = -D/(1+D) * (interface-ripple damping, >= 0), and
    surface = -D/(1+D) * sigma k(k^2-1)/r_p^3.
    """

    k: int
    total: float
    saffman_taylor: float
    growth_baseline: float
    inner: float
    surface: float


def _dext_factors(d_ext: float) -> tuple[float, float]:
    """((1-D)/(1+D), D/(1+D)) with the exterior ratio possibly infinite."""
    if math.isinf(d_ext):
        return (-1.0, 1.0)
    return ((1.0 - d_ext) / (1.0 + d_ext), d_ext / (1.0 + d_ext))


def front_velocity(state: RadialState, mu_death: float) -> float:
    """Rim speed r_p' = -(mu_death r_n^2 + r_q^2 - r_p^2) / (2 r_p)."""
    rn, rq, rp = state.r_n, state.r_q, state.r_p
    return -(mu_death * rn**2 + rq**2 - rp**2) / (2.0 * rp)


def growth_discriminant(state: RadialState, mu_death: float) -> float:
    """Relative rim velocity r_p'/r_p; 1/2 in the nutrient-rich phase, 0 at rest."""
    if not state.r_p > 0.0:
        raise ConfigurationError("r_p must be positive")
    return front_velocity(state, mu_death) / state.r_p


def radial_pressure_profile(inp: StabilityInput, r) -> float | np.ndarray:
    """Piecewise radial pressure of the unperturbed tumor.

    Continuous except for the adhesion jump sigma/r_p at the rim; the
    inward flux matches across the interior interfaces (the quiescent
    branch carries the mu_death r_n^2/2 log-slope demanded by the
    divergence theorem).  For an infinite exterior mobility the outer
    pressure is identically the ambient zero.
    """
    st, mu, sig = inp.state, inp.mu_death, inp.sigma
    rn, rq, rp = st.r_n, st.r_q, st.r_p
    r = np.asarray(r, dtype=float)

    coeff_out = mu * rn**2 + rq**2 - rp**2
    if math.isinf(inp.d_ext):
        def p_ext(rr):
            return np.zeros_like(np.asarray(rr, dtype=float))
    else:
        def p_ext(rr):
            return coeff_out / (2.0 * inp.d_ext) * np.log(np.asarray(rr, dtype=float))

    p_rim = float(p_ext(np.asarray(rp))) - (sig / rp if sig else 0.0)

    def p_p(rr):
        return (
            0.5 * (mu * rn**2 + rq**2) * np.log(rr / rp)
            - 0.25 * (rr**2 - rp**2)
            + p_rim
        )

    p_at_rq = float(p_p(np.asarray(max(rq, 1e-300))))

    def p_q(rr):
        return p_at_rq + 0.5 * mu * rn**2 * np.log(rr / max(rq, 1e-300))

    p_at_rn = float(p_q(np.asarray(max(rn, 1e-300)))) if rn > 0 else p_at_rq

    def p_n(rr):
        return p_at_rn + 0.25 * mu * (rr**2 - rn**2)

    rr = np.maximum(r, 1e-300)
    out = np.where(
        r >= rp,
        p_ext(rr),
        np.where(
            r >= rq,
            p_p(rr),
            np.where(r >= rn, p_q(rr) if rn < rq else p_at_rq, p_n(rr)),
        ),
    )
    return float(out) if out.ndim == 0 else out


def _pow_ratio(num: float, den: float, k: int) -> float:
    """(num/den)^k computed in log space for large k to dodge underflow."""
    if num == 0.0:
        return 1.0 if k == 0 else 0.0
    if k > 50:
        return math.exp(k * (math.log(num) - math.log(den)))
    return (num / den) ** k


def perturbation_response(state: RadialState, k: int) -> PerturbationResponse:
    """Closed-form interface ripple ratios ζ_q/ζ_p and ζ_n/ζ_p for mode k.

    Both ratios lie in [0, 1) for nested interfaces and decay geometrically
    in k; the collapse r_q -> r_n is a removable singularity handled by
    its limit, and r_n -> 0 sends the necrotic ratio to zero for k >= 2.
    """
    if k < 1:
        raise ConfigurationError(f"mode number must be >= 1, got {k}")
    rn, rq, rp = state.r_n, state.r_q, state.r_p
    if not rp > 0.0:
        raise ConfigurationError("r_p must be positive")

    rp2k = _pow_ratio(rp, 1.0, 2 * k)
    rn2k = _pow_ratio(rn, 1.0, 2 * k)
    shell = (1.0 - rp2k) / (1.0 - rn2k)

    zeta_n = _pow_ratio(rn, rp, k - 1) * shell

    if rq == 0.0:
        zeta_q = shell if k == 1 else 0.0
        return PerturbationResponse(k=k, zeta_q_ratio=zeta_q, zeta_n_ratio=zeta_n)

    x = rn / rq
    x2 = x * x
    if abs(1.0 - x2) < 1e-12:
        geom = float(k)  # lim (1 - x^{2k})/(1 - x^2) as x -> 1
    else:
        geom = (1.0 - _pow_ratio(rn, rq, 2 * k)) / (1.0 - x2)
    zeta_q = _pow_ratio(rq, rp, k - 1) * geom / k * shell
    return PerturbationResponse(k=k, zeta_q_ratio=zeta_q, zeta_n_ratio=zeta_n)


def _inner_damping(state: RadialState, mu_death: float, k: int) -> float:
    """Interface-ripple damping term r_p^{-k-1}(mu ζ_n r_n^{k+1} + ζ_q r_q^{k+1})/ζ_p."""
    resp = perturbation_response(state, k)
    rn, rq, rp = state.r_n, state.r_q, state.r_p
    return (
        mu_death * _pow_ratio(rn, rp, k + 1) * resp.zeta_n_ratio
        + _pow_ratio(rq, rp, k + 1) * resp.zeta_q_ratio
    )


def dispersion(inp: StabilityInput, k: int) -> DispersionResult:
    """Growth rate Λ(k) of a mode-k rim ripple, with named contributions.

    The rim velocity is computed internally from the state; the rate only
    involves ripple *ratios*, so it is independent of the initiating
    amplitude by construction.  k = 1 is untouched by surface tension.
    """
    if k < 1:
        raise ConfigurationError(f"mode number must be >= 1, got {k}")
    st = inp.state
    saff_factor, dfac = _dext_factors(inp.d_ext)
    rel_velocity = growth_discriminant(st, inp.mu_death)

    saffman = rel_velocity * (saff_factor * k - 1.0)
    baseline = dfac
    inner = -dfac * _inner_damping(st, inp.mu_death, k)
    surface = -dfac * inp.sigma * k * (k**2 - 1.0) / st.r_p**3
    total = saffman + baseline + inner + surface
    return DispersionResult(
        k=k,
        total=total,
        saffman_taylor=saffman,
        growth_baseline=baseline,
        inner=inner,
        surface=surface,
    )


def dispersion_limit_small_dext(state: RadialState, mu_death: float, k: int) -> float:
    """Immovable-exterior limit: Λ(k) = (r_p'/r_p)(k - 1); every mode k >= 2
    grows while the tumor does, untouched by surface tension."""
    if k < 1:
        raise ConfigurationError(f"mode number must be >= 1, got {k}")
    return growth_discriminant(state, mu_death) * (k - 1.0)


def sigma_stable(state: RadialState, k: int) -> float:
    """Surface tension sufficient to stabilize mode k at stationarity: r_p^3/(k(k^2-1))."""
    if k < 2:
        raise ConfigurationError(f"the stabilizing bound is defined for k >= 2, got {k}")
    return state.r_p**3 / (k * (k**2 - 1.0))


def stabilizing_sigma(inp: StabilityInput, k: int) -> float:
    """Exact root of Λ(k) = 0 in sigma (Λ is affine in sigma)."""
    if k < 2:
        raise ConfigurationError(f"sigma only acts on modes k >= 2, got {k}")
    base = dispersion(StabilityInput(inp.state, inp.mu_death, inp.d_ext, 0.0), k)
    _, dfac = _dext_factors(inp.d_ext)
    slope = dfac * k * (k**2 - 1.0) / inp.state.r_p**3
    return base.total / slope


def creeping_rate(inp: StabilityInput) -> float:
    """Translation rate Λ(1) of the whole tumor toward the oxygen source.

    Always nonnegative; vanishes without inner regions and in the stiff
    exterior limit.
    """
    st = inp.state
    rn, rq, rp = st.r_n, st.r_q, st.r_p
    _, dfac = _dext_factors(inp.d_ext)
    return dfac * (inp.mu_death * rn**2 + rq**2) / rp**2 * (rp**2 - rn**2) / (1.0 - rn**2)


def inner_damping_shell_form(state: RadialState, mu_death: float, k: int) -> float:
    """Equivalent damping term written in shell fractions θ = r^2/r_p^2.

    Used by tests to confirm the large-k decay of the damping for r_p < 1.
    """
    rn, rq, rp = state.r_n, state.r_q, state.r_p
    theta_n = (rn / rp) ** 2
    theta_q = (rq / rp) ** 2
    rp2k = _pow_ratio(rp, 1.0, 2 * k)
    tn_k = _pow_ratio(rn, rp, 2 * k)
    tq_k = _pow_ratio(rq, rp, 2 * k)
    front = (1.0 - rp2k) / (1.0 - tn_k * rp2k)
    if abs(theta_q - theta_n) < 1e-14:
        ratio = k * _pow_ratio(rq, rp, 2 * (k - 1))
    else:
        ratio = (tq_k - tn_k) / (theta_q - theta_n)
    return front * (mu_death * tn_k + ratio / k * theta_q)


def spectrum_rows(inp: StabilityInput, k_max: int) -> list[tuple[int, float, float, float, float]]:
    """(k, Λ, saffman_taylor, inner, surface) rows for k = 1..k_max."""
    rows = []
    for k in range(1, k_max + 1):
        d = dispersion(inp, k)
        rows.append((k, d.total, d.saffman_taylor, d.inner, d.surface))
    return rows
