"""Reduced radial model: oracles, round trips, and stability properties."""
from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from scipy.integrate import quad

from avatum.errors import (
    ConfigurationError,
    DomainExitError,
    InfeasibleStateError,
    LimitCaseWarning,
    NoEquilibriumError,
)
from avatum.radial import (
    RadialParams,
    RadialState,
    eigenvalue_from_proof_parameterization,
    interfaces_from_rp,
    interfaces_residuals,
    oxygen_profile,
    params_from_equilibrium,
    radial_eigenvalue,
    simulate_radial,
    state_from_proof_parameterization,
    stationary_state,
    step,
)

# frozen oracle values, see oracle computations in the tests below
K_PROL_123 = 0.2345263465299865   # forward interface relation at (0.1, 0.2, 0.3)
K_DEATH_123 = 0.2506634029187876
EIGEN_123 = -2.5808788679104553   # direct eigenvalue formula at (0.1,0.2,0.3), mu=5


def quadrature_oxygen_oracle(state: RadialState, lam: float, r_eval: float) -> float:
    """Independent oracle: integrate the radial two-point problem.

    c'(r) = -(1/r) * integral_0^r s(s') s' ds' with s = -lam on [r_n, r_p],
    then c(r) = 1 - integral_r^1 c'(s) ds, both by adaptive quadrature.
    """
    rn, rp = state.r_n, state.r_p

    def cprime(r):
        if r <= 0.0:
            return 0.0
        lo, hi = min(rn, r), min(rp, r)
        mass = 0.5 * lam * (hi**2 - lo**2)  # integral of lam*s over the sink range
        return mass / r

    val, err = quad(cprime, r_eval, 1.0, limit=400, points=[state.r_n, state.r_p])
    assert err < 1e-10
    return 1.0 - val


def test_oxygen_outer_dirichlet():
    st = RadialState(0.1, 0.2, 0.3)
    assert oxygen_profile(st, 1.15, 1.0) == pytest.approx(1.0, abs=1e-14)


def test_oxygen_core_equals_death_threshold_for_consistent_state():
    params = params_from_equilibrium(0.1, 0.2, 0.3)
    st = RadialState(0.1, 0.2, 0.3)
    for r in (0.0, 0.05, 0.1):
        assert oxygen_profile(st, params.lam, r) == pytest.approx(params.kappa_death, abs=1e-12)


def test_oxygen_center_against_quadrature_oracle():
    st = RadialState(0.0, 0.0, 0.3)
    lam = 1.15
    oracle = quadrature_oxygen_oracle(st, lam, 0.0)
    assert oracle == pytest.approx(0.9118194073761328, abs=2e-8)  # frozen from the oracle
    assert oxygen_profile(st, lam, 0.0) == pytest.approx(oracle, abs=2e-8)


def test_oxygen_profile_against_quadrature_everywhere():
    st = RadialState(0.1, 0.2, 0.3)
    lam = 2.0
    for r in (0.05, 0.15, 0.25, 0.3, 0.5, 0.9):
        assert oxygen_profile(st, lam, r) == pytest.approx(
            quadrature_oxygen_oracle(st, lam, r), abs=2e-8
        )


def test_oxygen_c1_at_interfaces():
    st = RadialState(0.1, 0.2, 0.3)
    lam = 1.5
    for r0 in (st.r_n, st.r_p):
        slopes = []
        for side in (-1.0, +1.0):
            hs = np.array([1e-4, 5e-5])
            d = [
                (oxygen_profile(st, lam, r0 + side * h) - oxygen_profile(st, lam, r0)) / (side * h)
                for h in hs
            ]
            # Richardson-extrapolate the one-sided slope to O(h^2)
            slopes.append(2.0 * d[1] - d[0])
        assert slopes[0] == pytest.approx(slopes[1], abs=1e-6)


def test_oxygen_monotone_outside_core():
    st = RadialState(0.1, 0.2, 0.3)
    r = np.linspace(0.1, 1.0, 400)
    c = oxygen_profile(st, 1.15, r)
    assert np.all(np.diff(c) >= -1e-14)


def test_interfaces_forward_inverse_roundtrip():
    params = RadialParams.from_K(K_PROL_123, K_DEATH_123, mu_death=5.0)
    r_n, r_q = interfaces_from_rp(0.3, params)
    assert r_n == pytest.approx(0.1, abs=1e-10)
    assert r_q == pytest.approx(0.2, abs=1e-10)
    res_p, res_d = interfaces_residuals(RadialState(r_n, r_q, 0.3), params)
    assert abs(res_p - params.K_prol) <= 1e-10 or abs(res_p) <= 1e-10
    # residuals measured against the K values directly:
    from avatum.radial import _relation_death, _relation_prol
    assert abs(_relation_death(r_n, 0.3) - params.K_death) < 1e-10
    assert abs(_relation_prol(r_q, r_n, 0.3) - params.K_prol) < 1e-10


def test_interfaces_bisection_oracle():
    # plain bisection as an independent inverse of the same relations
    from avatum.radial import _relation_death, _relation_prol

    params = RadialParams.from_K(K_PROL_123, K_DEATH_123, mu_death=5.0)
    lo, hi = 0.0, 0.3
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _relation_death(mid, 0.3) > params.K_death:
            lo = mid
        else:
            hi = mid
    rn_bis = 0.5 * (lo + hi)
    lo, hi = rn_bis, 0.3
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _relation_prol(mid, rn_bis, 0.3) > params.K_prol:
            lo = mid
        else:
            hi = mid
    rq_bis = 0.5 * (lo + hi)
    r_n, r_q = interfaces_from_rp(0.3, params)
    assert r_n == pytest.approx(rn_bis, abs=1e-12)
    assert r_q == pytest.approx(rq_bis, abs=1e-12)


def test_interfaces_abundant_oxygen():
    params = RadialParams(lam=1e-6, kappa_prol=0.94, kappa_death=0.93, mu_death=1.0)
    assert interfaces_from_rp(0.3, params) == (0.0, 0.0)


def test_interfaces_equal_thresholds_collapse():
    params = RadialParams.from_K(K_DEATH_123, K_DEATH_123, mu_death=5.0)
    r_n, r_q = interfaces_from_rp(0.3, params)
    assert r_n == pytest.approx(r_q, abs=1e-9)


def test_interfaces_infeasible_rim():
    params = RadialParams(lam=60.0, kappa_prol=0.94, kappa_death=0.93, mu_death=1.0)
    with pytest.raises(InfeasibleStateError):
        interfaces_from_rp(0.5, params)


def test_exponential_phase_closed_form():
    params = RadialParams(lam=1e-9, kappa_prol=0.94, kappa_death=0.93, mu_death=1.35)
    st = RadialState(0.0, 0.0, 0.05)
    dt, t_end = 1e-3, 1.0
    for _ in range(int(t_end / dt)):
        st = step(st, params, dt)
    assert st.r_p == pytest.approx(0.05 * math.exp(0.5 * t_end), rel=1e-6)


def test_rk4_observed_order():
    params = RadialParams(lam=1e-9, kappa_prol=0.94, kappa_death=0.93, mu_death=1.0)

    def run(dt):
        st = RadialState(0.0, 0.0, 0.1)
        for _ in range(int(round(0.5 / dt))):
            st = step(st, params, dt)
        return st.r_p

    exact = 0.1 * math.exp(0.25)
    e1 = abs(run(0.025) - exact)
    e2 = abs(run(0.0125) - exact)
    assert math.log2(e1 / e2) >= 3.9


def test_stationary_roundtrip():
    params = params_from_equilibrium(0.1, 0.2, 0.3)
    assert params.mu_death == pytest.approx(5.0, abs=1e-12)
    assert params.K_prol == pytest.approx(K_PROL_123, abs=1e-12)
    assert params.K_death == pytest.approx(K_DEATH_123, abs=1e-12)
    eq = stationary_state(params)
    assert eq.r_n == pytest.approx(0.1, abs=1e-8)
    assert eq.r_q == pytest.approx(0.2, abs=1e-8)
    assert eq.r_p == pytest.approx(0.3, abs=1e-8)


def test_stationary_fixed_point_of_step():
    params = params_from_equilibrium(0.1, 0.2, 0.3)
    eq = stationary_state(params)
    moved = step(eq, params, 1e-2)
    assert moved.r_p == pytest.approx(eq.r_p, abs=1e-10)


def test_no_equilibrium_for_abundant_oxygen():
    params = RadialParams(lam=1e-9, kappa_prol=0.94, kappa_death=0.93, mu_death=1.35)
    with pytest.raises(NoEquilibriumError):
        stationary_state(params)


def test_mu_death_limit_no_proliferative_annulus():
    p = params_from_equilibrium(0.1, 0.29999, 0.3)
    assert p.mu_death == pytest.approx(0.0, abs=1e-3)


def test_params_from_equilibrium_rejects_zero_rn():
    with pytest.raises((InfeasibleStateError, ConfigurationError)):
        params_from_equilibrium(0.0, 0.2, 0.3)


def test_eigenvalue_direct_value():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        val = radial_eigenvalue(RadialState(0.1, 0.2, 0.3), 5.0)
    # frozen direct evaluation: 1 - (ln .3/ln .1)(5 + 2 ln 2/0.03*0.04)
    expected = 1.0 - math.log(0.3) / math.log(0.1) * (5.0 + 2.0 * math.log(2.0) / 0.03 * 0.04)
    assert expected == pytest.approx(EIGEN_123, abs=1e-12)
    assert val == pytest.approx(expected, abs=1e-13)


def test_eigenvalue_matches_proof_parameterization():
    for eta, mu, rp in ((0.25, 5.0, 0.3), (0.7, 0.3, 0.2), (0.05, 20.0, 0.35)):
        st = state_from_proof_parameterization(eta, mu, rp)
        assert radial_eigenvalue(st, mu) == pytest.approx(
            eigenvalue_from_proof_parameterization(eta, mu, rp), rel=1e-12
        )


def test_eigenvalue_finite_difference_jacobian_oracle():
    # numerically differentiate the reduced dynamics around the equilibrium
    from avatum.radial import _rhs_y

    params = params_from_equilibrium(0.1, 0.2, 0.3)
    eq = stationary_state(params)
    y = eq.r_p**2
    d = 1e-7 * y
    jac = (_rhs_y(y + d, params) - _rhs_y(y - d, params)) / (2.0 * d)
    lam = radial_eigenvalue(eq, params.mu_death)
    assert jac == pytest.approx(lam, rel=1e-4)


def test_eigenvalue_small_tumor_always_stable_sweep():
    etas = np.geomspace(1e-3, 0.999, 60)
    mus = np.geomspace(1e-2, 1e2, 60)
    for rp in (math.exp(-1.0), 0.2, 0.05):
        vals = [
            eigenvalue_from_proof_parameterization(float(e), float(m), rp)
            for e in etas
            for m in mus
        ]
        assert max(vals) < 0.0


def test_eigenvalue_degenerate_limits_flagged():
    with pytest.warns(LimitCaseWarning):
        v0 = radial_eigenvalue(RadialState(0.0, 0.2, 0.3), 5.0)
    assert v0 == pytest.approx(1.0 + 2.0 * math.log(0.3), abs=1e-12)
    with pytest.warns(LimitCaseWarning):
        v1 = radial_eigenvalue(RadialState(0.2, 0.2, 0.3), 5.0)
    assert v1 == pytest.approx(1.0 - math.log(0.3) / math.log(0.2) * 6.0, abs=1e-12)


def test_step_domain_exit():
    params = RadialParams(lam=1e-9, kappa_prol=0.94, kappa_death=0.93, mu_death=1.0)
    st = RadialState(0.0, 0.0, 0.999)
    with pytest.raises(DomainExitError):
        for _ in range(100):
            st = step(st, params, 0.05)


def test_sigmoid_trajectory_table2_pde_params():
    params = RadialParams(lam=1.15, kappa_prol=0.94, kappa_death=0.93, mu_death=1.35)
    traj = simulate_radial(params, r_p0=0.1, t_end=20.0, dt=1e-3, record_dt=0.1)
    assert traj.status == "completed"
    v = traj.V_p
    # sigmoid: early exponential growth then a plateau below pi e^-2
    assert v[-1] < math.pi * math.exp(-2.0)
    eq = stationary_state(params)
    assert v[-1] == pytest.approx(math.pi * eq.r_p**2, rel=1e-4)
    # plateau value recorded as a regression baseline
    assert eq.r_p == pytest.approx(0.31446894461584074, abs=1e-8)


def test_volume_ordering_along_trajectory():
    params = RadialParams(lam=1.15, kappa_prol=0.94, kappa_death=0.93, mu_death=1.35)
    traj = simulate_radial(params, r_p0=0.1, t_end=8.0, dt=2e-3, record_dt=0.2)
    assert np.all(traj.V_n <= traj.V_q + 1e-15)
    assert np.all(traj.V_q <= traj.V_p + 1e-15)
    assert np.all(np.diff(traj.times) > 0)
