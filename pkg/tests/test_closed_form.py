import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from pnlbleed.closed_form import (CallSpec, boundary_cva, boundary_cva_greeks, bs_call,
                                  bs_delta, bs_gamma, bs_greeks_sv, norm_cdf, norm_pdf)
from pnlbleed.errors import DomainError, InvalidInputError

from oracles import mp_boundary_cva, mp_call, mp_call_alpha, quad_call

spots = st.floats(50.0, 200.0)
strikes = st.floats(50.0, 200.0)
variances = st.floats(0.001, 1.0)


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-12)


def test_norm_cdf_matches_mpmath():
    for z in (-6.0, -1.96, 0.0, 0.3, 1.96, 5.0):
        assert norm_cdf(z) == pytest.approx(float(mp.ncdf(z)), rel=1e-14, abs=1e-300)
        assert norm_pdf(z) == pytest.approx(float(mp.npdf(z)), rel=1e-14)


def test_call_reference_value():
    # S = K = 100, sigma^2 T = 0.04 * 3
    assert bs_call(100.0, 100.0, 0.12) == pytest.approx(13.75, abs=0.005)
    assert bs_call(100.0, 100.0, 0.12) == pytest.approx(float(mp_call(100, 100, 0.12)),
                                                         rel=1e-13)


@given(spots, strikes, variances)
def test_call_matches_quadrature(S, K, v):
    assert bs_call(S, K, v) == pytest.approx(quad_call(S, K, v), rel=1e-8, abs=1e-9)


@given(spots, strikes, variances)
def test_call_bounds_and_parity(S, K, v):
    c = bs_call(S, K, v)
    assert max(S - K, 0.0) - 1e-9 <= c <= S
    # put from parity is non-negative
    assert c - (S - K) >= -1e-9


@given(spots, strikes, st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_call_monotone_in_variance(S, K, v1, v2):
    lo, hi = sorted((v1, v2))
    assert bs_call(S, K, lo) <= bs_call(S, K, hi) + 1e-12


def test_zero_variance_is_intrinsic():
    assert bs_call(110.0, 100.0, 0.0) == 10.0
    assert bs_call(90.0, 100.0, 0.0) == 0.0
    assert bs_delta(110.0, 100.0, 0.0) == 1.0
    assert bs_delta(90.0, 100.0, 0.0) == 0.0


@pytest.mark.parametrize("S,K,v", [(0.0, 100.0, 0.1), (100.0, -1.0, 0.1),
                                   (100.0, 100.0, -0.1)])
def test_call_rejects_bad_domain(S, K, v):
    with pytest.raises((DomainError, InvalidInputError)):
        bs_call(S, K, v)


def test_gamma_undefined_at_zero_variance():
    with pytest.raises(DomainError):
        bs_gamma(100.0, 100.0, 0.0)


@given(spots, strikes, variances)
def test_delta_gamma_match_high_precision_derivatives(S, K, v):
    f = lambda s: mp_call(s, K, v)  # noqa: E731
    assert rel(bs_delta(S, K, v), float(mp.diff(f, S))) < 1e-9
    assert rel(bs_gamma(S, K, v), float(mp.diff(f, S, 2))) < 1e-8


@given(spots, st.floats(0.05, 0.8), st.floats(0.05, 3.0), strikes)
def test_alpha_greeks_match_high_precision_derivatives(S, alpha, tau, K):
    g = bs_greeks_sv(S, alpha, tau, K)
    f = lambda s, a: mp_call_alpha(s, a, tau, K)  # noqa: E731
    vega = float(mp.diff(f, (S, alpha), (0, 1)))
    vanna = float(mp.diff(f, (S, alpha), (1, 1)))
    volga = float(mp.diff(f, (S, alpha), (0, 2)))
    assert g["vega"] == pytest.approx(vega, rel=1e-8, abs=1e-10)
    assert g["vanna"] == pytest.approx(vanna, rel=1e-7, abs=1e-10)
    assert g["volga"] == pytest.approx(volga, rel=1e-7, abs=1e-9)


def test_alpha_greeks_need_positive_tau():
    with pytest.raises(DomainError):
        bs_greeks_sv(100.0, 0.2, 0.0, 100.0)


FD_POINTS = [(103.0, 100.0, 0.3, 1.0), (80.0, 100.0, 0.2, 3.0), (130.0, 100.0, 0.45, 0.5),
             (100.0, 100.0, 0.2, 2.0)]


@pytest.mark.parametrize("S,K,alpha,tau", FD_POINTS)
def test_analytic_greeks_match_central_differences(S, K, alpha, tau):
    # first derivatives from prices, second derivatives from analytic first derivatives
    v = alpha * alpha * tau
    hS, ha = 1e-4 * S, 1e-5
    g = bs_greeks_sv(S, alpha, tau, K)
    fd_delta = (bs_call(S + hS, K, v) - bs_call(S - hS, K, v)) / (2 * hS)
    fd_gamma = (bs_delta(S + hS, K, v) - bs_delta(S - hS, K, v)) / (2 * hS)
    c = lambda a: bs_call(S, K, a * a * tau)  # noqa: E731
    vega = lambda s, a: bs_greeks_sv(s, a, tau, K)["vega"]  # noqa: E731
    fd_vega = (c(alpha + ha) - c(alpha - ha)) / (2 * ha)
    fd_volga = (vega(S, alpha + ha) - vega(S, alpha - ha)) / (2 * ha)
    fd_vanna = (vega(S + hS, alpha) - vega(S - hS, alpha)) / (2 * hS)
    assert rel(bs_delta(S, K, v), fd_delta) < 1e-6
    assert rel(bs_gamma(S, K, v), fd_gamma) < 1e-6
    assert rel(g["vega"], fd_vega) < 1e-6
    assert rel(g["volga"], fd_volga) < 1e-6
    assert rel(g["vanna"], fd_vanna) < 1e-6


# --- boundary CVA -----------------------------------------------------------------

SPEC = CallSpec(K=100.0, T=3.0, sigma_S=0.2)


def test_boundary_cva_reference_value():
    u0 = boundary_cva(0.0, 0.05, 100.0, SPEC)
    assert u0 == pytest.approx(-1.92, abs=0.005)
    assert u0 == pytest.approx(-(1 - math.exp(-0.15)) * bs_call(100, 100, 0.12), rel=1e-14)


def test_boundary_cva_vanishes_at_expiry_and_zero_hazard():
    assert boundary_cva(3.0, 0.05, 100.0, SPEC) == 0.0
    assert boundary_cva(1.0, 0.0, 100.0, SPEC) == 0.0


def test_boundary_cva_rejects_past_maturity():
    with pytest.raises(DomainError):
        boundary_cva(3.5, 0.05, 100.0, SPEC)
    with pytest.raises(DomainError):
        boundary_cva_greeks(3.0, 0.05, 100.0, SPEC)


@given(st.floats(0.0, 2.9), st.floats(0.0, 0.3), spots)
def test_boundary_cva_greeks_match_high_precision(t, lam, S):
    tau = SPEC.T - t
    g = boundary_cva_greeks(t, lam, S, SPEC)
    f = lambda l, s: mp_boundary_cva(l, s, tau, SPEC.K, SPEC.sigma_S)  # noqa: E731
    assert float(g.value) == pytest.approx(float(f(lam, S)), rel=1e-12, abs=1e-14)
    for (i, j), (a, b) in {(0, 0): (1, 0), (1, 1): (0, 1)}.items():
        assert float(g.grad[i]) == pytest.approx(float(mp.diff(f, (lam, S), (a, b))),
                                                 rel=1e-9, abs=1e-12)
    expected = {(0, 0): (2, 0), (0, 1): (1, 1), (1, 1): (0, 2)}
    for (i, j), order in expected.items():
        ref = float(mp.diff(f, (lam, S), order))
        assert float(g.hess[i, j]) == pytest.approx(ref, rel=1e-8, abs=1e-12)
        assert g.hess[i, j] == g.hess[j, i]


def test_boundary_cva_greeks_broadcast():
    lam = np.array([0.01, 0.05, 0.1])
    S = np.array([90.0, 100.0, 110.0])
    g = boundary_cva_greeks(0.5, lam, S, SPEC)
    assert g.value.shape == (3,)
    assert g.grad.shape == (3, 2)
    assert g.hess.shape == (3, 2, 2)
    for k in range(3):
        single = boundary_cva_greeks(0.5, lam[k], S[k], SPEC)
        np.testing.assert_allclose(g.hess[k], single.hess, rtol=1e-14)


def test_call_spec_validation():
    with pytest.raises((InvalidInputError, DomainError)):
        CallSpec(K=-1.0, T=1.0, sigma_S=0.2)
    with pytest.raises((InvalidInputError, DomainError)):
        CallSpec(K=100.0, T=0.0, sigma_S=0.2)
