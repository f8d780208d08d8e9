import math

import numpy as np
import pytest

from pnlbleed import experiments as ex
from pnlbleed.closed_form import CallSpec, boundary_cva, bs_call
from pnlbleed.errors import InvalidInputError, UnsupportedModeError
from pnlbleed.montecarlo import MonteCarloConfig

CFG = MonteCarloConfig(n_paths=8000, n_steps=100, seed=123)


def within(est, ref, n_se=3.0, slack=0.0):
    return abs(est.mean - ref) <= n_se * est.std_error + slack


# --- local volatility ----------------------------------------------------------------

def test_local_vol_identity_is_exactly_zero():
    call = CallSpec(100.0, 1.0, 0.2)
    r = ex.run_gatheral_local_vol(0.2, ex.step_local_vol(0.2, 0.2, 0.5), call, CFG)
    assert r["U_mc"].mean == 0.0 and r["U_mc"].std_error == 0.0
    assert r["U_ref"] == pytest.approx(0.0, abs=1e-12)


def test_local_vol_time_dependent_matches_closed_form():
    call = CallSpec(100.0, 1.0, 0.2)
    alpha_hat = ex.step_local_vol(0.25, 0.3, 0.5)
    r = ex.run_gatheral_local_vol(0.2, alpha_hat, call, CFG)
    w = 0.5 * 0.25 ** 2 + 0.5 * 0.3 ** 2
    assert r["U_ref"] == pytest.approx(bs_call(100, 100, w) - bs_call(100, 100, 0.04), rel=1e-10)
    # Euler bias at 100 steps is well under the statistical error
    assert within(r["U_mc"], r["U_ref"])
    assert r["sample_variance_bleed"] < r["sample_variance_direct"]


def test_local_vol_spot_dependent_agrees_with_direct_repricing():
    call = CallSpec(100.0, 1.0, 0.2)
    alpha_hat = ex.step_local_vol(0.2, 0.2, 1.0, spot_barrier=90.0, spot_bump=0.1)
    r = ex.run_gatheral_local_vol(0.2, alpha_hat, call, CFG)
    assert r["U_ref"] is None
    assert r["U_mc"].mean > 0  # more vol below the barrier where gamma is positive
    a, b = r["U_mc"], r["U_direct"]
    assert abs(a.mean - b.mean) <= 3 * (a.std_error + b.std_error)


def test_integrated_variance_of_step():
    assert ex.integrated_variance(ex.step_local_vol(0.1, 0.3, 0.25), 1.0, 100.0) == \
        pytest.approx(0.25 * 0.01 + 0.75 * 0.09, rel=1e-12)


def test_local_vol_needs_positive_alpha():
    with pytest.raises(InvalidInputError):
        ex.local_vol_problem(0.0, ex.step_local_vol(0.2, 0.2, 0.5), CallSpec(100, 1, 0.2))


# --- stochastic volatility ---------------------------------------------------------

def test_heston_mapping_matches_ito():
    # d(alpha^2) = 2 alpha d alpha + gamma^2 dt must reproduce kappa (theta - alpha^2)
    kappa, theta, v = 2.0, 0.0625, 0.3
    beta, gamma = ex.heston_coefficients(kappa, theta, v)
    for a in (0.1, 0.25, 0.4):
        drift_var = 2 * a * beta(0.0, a) + gamma(0.0, a) ** 2
        assert drift_var == pytest.approx(kappa * (theta - a * a), rel=1e-12)
        assert 2 * a * gamma(0.0, a) == pytest.approx(v * a, rel=1e-14)


def test_heston_mapping_floors_alpha():
    beta, _ = ex.heston_coefficients(2.0, 0.04, 0.2)
    assert np.isfinite(beta(0.0, np.array([0.0, -1.0]))).all()


def test_stoch_vol_zero_coefficients_exactly_zero():
    call = CallSpec(100.0, 1.0, 0.2)
    zero = lambda t, a: np.zeros(np.shape(a))  # noqa: E731
    r = ex.run_gatheral_stoch_vol(zero, zero, -0.5, call, CFG)
    assert r["U_mc"].mean == 0.0 and r["U_mc"].std_error == 0.0


def test_stoch_vol_volga_only_when_uncorrelated_and_driftless():
    call = CallSpec(100.0, 1.0, 0.2)
    problem = ex.stoch_vol_problem(lambda t, a: np.zeros(np.shape(a)),
                                   lambda t, a: np.full(np.shape(a), 0.1), 0.0, call)
    from pnlbleed.bleed import bleed
    from pnlbleed.closed_form import bs_greeks_sv
    x = np.array([[95.0, 0.2], [110.0, 0.25]])
    volga = bs_greeks_sv(x[:, 0], x[:, 1], 0.6, 100.0)["volga"]
    np.testing.assert_allclose(bleed(problem, 0.4, x), 0.5 * 0.01 * volga, rtol=1e-12)


def test_stoch_vol_bleed_matches_direct():
    call = CallSpec(100.0, 1.0, 0.2)
    beta, gamma = ex.heston_coefficients(2.0, 0.0625, 0.2)
    r = ex.run_gatheral_stoch_vol(beta, gamma, -0.5, call, CFG)
    assert r["agree"]
    assert r["variance_ratio"] > 1.0


# --- discounting and credit ----------------------------------------------------------

def test_piterbarg_matches_discount_closed_form():
    call = CallSpec(100.0, 3.0, 0.2)
    r = ex.run_piterbarg_discounting(0.02, 0.05, call, CFG)
    c = bs_call(100, 100, 0.12)
    assert r["U_ref"] == pytest.approx((math.exp(-0.15) - math.exp(-0.06)) * c, rel=1e-12)
    assert within(r["U_mc"], r["U_ref"])


def test_piterbarg_signs_and_identity():
    call = CallSpec(100.0, 1.0, 0.2)
    same = ex.run_piterbarg_discounting(0.03, 0.03, call, CFG)
    assert same["U_mc"].mean == 0.0 and same["U_mc"].std_error == 0.0
    assert ex.run_piterbarg_discounting(0.05, 0.02, call, CFG)["U_mc"].mean > 0


def test_bk_cva_deterministic_hazard():
    call = CallSpec(100.0, 3.0, 0.2)
    r = ex.run_bk_cva(0.0, ex.HazardSpec(lambda0=0.05), call, CFG)
    assert r["U_ref"] == pytest.approx(-1.92, abs=0.005)
    assert within(r["U_mc"], r["U_ref"])
    zero = ex.run_bk_cva(0.0, ex.HazardSpec(lambda0=0.0), call, CFG)
    assert zero["U_mc"].mean == 0.0


def test_bk_cva_with_rate_matches_boundary_formula():
    call = CallSpec(100.0, 2.0, 0.25)
    r = ex.run_bk_cva(0.03, ex.HazardSpec(lambda0=0.08), call, CFG)
    v0 = math.exp(-0.06) * bs_call(100, 100, 0.125)
    assert r["U_ref"] == pytest.approx(-(1 - math.exp(-0.16)) * v0, rel=1e-12)
    assert within(r["U_mc"], r["U_ref"])


def test_strict_payoff_annuity():
    call = CallSpec(100.0, 3.0, 0.2)
    r = ex.run_strict_payoff(0.04, 0.01, call, CFG)
    # deterministic integrand: only the trapezoid error remains
    assert r["U_mc"].std_error == 0.0
    assert r["U_mc"].mean == pytest.approx(0.01 * (1 - math.exp(-0.12)) / 0.04, rel=1e-5)


# --- meta-CVA ------------------------------------------------------------------------

def test_meta_cva_defaults():
    p = ex.MetaCvaParams()
    assert (p.rho_lambda_S, p.sigma_lambda_hat, p.sigma_lambda, p.sigma_S) == (0.9, 0.01, 0.0, 0.2)
    assert (p.lambda0, p.S0, p.K, p.T) == (0.05, 100.0, 100.0, 3.0)


def test_meta_cva_small_budget_consistent():
    r = ex.run_meta_cva(ex.MetaCvaParams(), MonteCarloConfig(4000, 150, seed=1))
    assert r["V0"] == pytest.approx(13.75, abs=0.005)
    assert r["U0"] == pytest.approx(boundary_cva(0, 0.05, 100, CallSpec(100, 3, 0.2)))
    assert abs(r["consistency_gap"]) < r["consistency_tolerance"]
    assert r["A0"].std_error < r["U_hat_direct"].std_error
    assert within(r["A0"], -0.39, slack=0.02)
    assert within(r["survival"], r["survival_ref"])


def test_meta_cva_no_vol_difference_exactly_zero():
    r = ex.run_meta_cva(ex.MetaCvaParams(sigma_lambda_hat=0.0), MonteCarloConfig(500, 30, seed=1))
    assert r["A0"].mean == 0.0 and r["A0"].std_error == 0.0


def test_meta_cva_rejects_stochastic_base_hazard():
    with pytest.raises(UnsupportedModeError):
        ex.run_meta_cva(ex.MetaCvaParams(sigma_lambda=0.01), MonteCarloConfig(10, 10))


def test_meta_cva_sign_follows_correlation():
    # positive spot-hazard correlation raises exposure when default is likely: more CVA
    cfg = MonteCarloConfig(4000, 60, seed=2)
    pos = ex.run_meta_cva(ex.MetaCvaParams(rho_lambda_S=0.9), cfg)["A0"]
    neg = ex.run_meta_cva(ex.MetaCvaParams(rho_lambda_S=-0.9), cfg)["A0"]
    assert pos.mean < 0 < neg.mean


def test_pnl_paths_mean_terminal_matches_a0():
    cfg = MonteCarloConfig(3000, 60, seed=7)
    params = ex.MetaCvaParams()
    ens = ex.run_meta_cva_pnl_paths(params, cfg, keep=50, stride=10)
    a0 = ex.run_meta_cva(params, cfg)["A0"]
    assert ens.terminal.mean == pytest.approx(a0.mean, rel=1e-12)
    assert ens.cum_pnl.shape == (50, 7)


def test_pnl_paths_real_world_drift_changes_pnl():
    cfg = MonteCarloConfig(2000, 60, seed=7)
    params = ex.MetaCvaParams()
    base = ex.run_meta_cva_pnl_paths(params, cfg)
    shifted = ex.run_meta_cva_pnl_paths(params, cfg, lambda_drift_shift=0.05, stock_drift=0.1)
    assert shifted.terminal.mean != base.terminal.mean


# --- intermediate horizon ------------------------------------------------------------

def test_tau_invariance():
    call = CallSpec(100.0, 1.0, 0.2)
    r = ex.run_tau_invariance(0.2, 0.25, call, [0.0, 0.25, 0.5, 1.0], CFG)
    est = r["estimates"]
    assert est[0.0].std_error == 0.0
    assert est[0.0].mean == pytest.approx(r["U_ref"], abs=1e-12)
    for tau, e in est.items():
        assert abs(e.mean - r["U_ref"]) <= 3 * e.std_error + 1e-12, tau
    lv = ex.run_gatheral_local_vol(0.2, ex.step_local_vol(0.25, 0.25, 1.0), call, CFG)["U_mc"]
    assert lv.mean == pytest.approx(est[1.0].mean, rel=1e-12)
