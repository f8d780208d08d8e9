"""Closed-form Black-Scholes prices, greeks and the boundary-case CVA.

Everything here works on the driftless, zero-rate call ``C(S, K, v)`` with
total variance ``v``.  Functions accept scalars or numpy arrays and
broadcast.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import DomainError
from .model import GreekBundle

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

# Relative bump used by the finite-difference checks in the test-suite.
FD_STEP = 1e-5


@dataclass(frozen=True)
class CallSpec:
    K: float
    T: float
    sigma_S: float

    def __post_init__(self):
        if not self.K > 0:
            raise DomainError(f"strike must be positive, got {self.K}")
        if not self.T > 0:
            raise DomainError(f"maturity must be positive, got {self.T}")
        if not self.sigma_S >= 0:
            raise DomainError(f"volatility must be non-negative, got {self.sigma_S}")


def norm_cdf(z):
    """Standard normal CDF, evaluated through the complementary error function."""
    return ndtr(z)


def norm_pdf(z):
    z = np.asarray(z, dtype=float)
    return _INV_SQRT_2PI * np.exp(-0.5 * z * z)


def _positive(name, value):
    value = np.asarray(value, dtype=float)
    if np.any(~(value > 0)):
        raise DomainError(f"{name} must be positive")
    return value


def _d_plus(S, K, sv):
    return np.log(S / K) / sv + 0.5 * sv


def bs_call(S, K, v):
    """Call price ``S N(d+) - K N(d-)``; intrinsic value at zero variance."""
    S = _positive("spot", S)
    K = _positive("strike", K)
    v = np.asarray(v, dtype=float)
    if np.any(~(v >= 0)):
        raise DomainError("total variance must be non-negative")
    live = v > 0
    sv = np.sqrt(np.where(live, v, 1.0))
    dp = _d_plus(S, K, sv)
    price = S * ndtr(dp) - K * ndtr(dp - sv)
    out = np.where(live, price, np.maximum(S - K, 0.0))
    return out if out.ndim else float(out)


def bs_delta(S, K, v):
    """``dC/dS``; the step function ``1{S > K}`` at zero variance."""
    S = _positive("spot", S)
    K = _positive("strike", K)
    v = np.asarray(v, dtype=float)
    live = v > 0
    sv = np.sqrt(np.where(live, v, 1.0))
    out = np.where(live, ndtr(_d_plus(S, K, sv)), (S > K).astype(float))
    return out if out.ndim else float(out)


def bs_gamma(S, K, v):
    """``d2C/dS2``.  Raises at zero variance, where gamma is a Dirac mass."""
    S = _positive("spot", S)
    K = _positive("strike", K)
    v = _positive("total variance", v)
    sv = np.sqrt(v)
    out = norm_pdf(_d_plus(S, K, sv)) / (S * sv)
    return out if out.ndim else float(out)


def bs_greeks_sv(S, alpha, tau, K):
    """Vega, vanna and volga of ``C(S, K, alpha^2 tau)`` in ``alpha``.

    Returns a dict with keys ``vega`` (d/dalpha), ``vanna`` (d2/dS dalpha) and
    ``volga`` (d2/dalpha2).
    """
    S = _positive("spot", S)
    alpha = _positive("volatility", alpha)
    tau = np.asarray(tau, dtype=float)
    if np.any(~(tau > 0)):
        raise DomainError("greeks are singular at expiry; need tau > 0")
    K = _positive("strike", K)
    root_tau = np.sqrt(tau)
    sv = alpha * root_tau
    dp = _d_plus(S, K, sv)
    dm = dp - sv
    pdf = norm_pdf(dp)
    vega = S * pdf * root_tau
    return {
        "vega": vega,
        "vanna": -pdf * dm / alpha,
        "volga": vega * dp * dm / alpha,
    }


def _cva_window(t, spec):
    t = np.asarray(t, dtype=float)
    if np.any(t > spec.T):
        raise DomainError(f"t exceeds maturity T={spec.T}")
    return spec.T - t


def boundary_cva(t, lam, S, spec: CallSpec):
    """CVA of the call when the hazard rate carries no volatility.

    ``-(1 - exp(-lam (T - t))) C(S, K, sigma_S^2 (T - t))``.
    """
    tau = _cva_window(t, spec)
    lam = np.asarray(lam, dtype=float)
    loss = -np.expm1(-lam * tau)
    out = -loss * bs_call(S, spec.K, spec.sigma_S ** 2 * tau)
    return out if np.ndim(out) else float(out)


def boundary_cva_greeks(t, lam, S, spec: CallSpec) -> GreekBundle:
    """Boundary CVA with its first and second derivatives in ``(lam, S)``.

    State order in the bundle is ``(lambda, S)``.  Needs ``t < T`` and
    ``sigma_S > 0``: the S-gamma does not exist at expiry.
    """
    tau = _cva_window(t, spec)
    if np.any(tau <= 0):
        raise DomainError("boundary CVA greeks need t < T")
    if spec.sigma_S <= 0:
        raise DomainError("boundary CVA greeks need sigma_S > 0")
    lam = np.asarray(lam, dtype=float)
    S = _positive("spot", S)
    lam, S, tau = np.broadcast_arrays(lam, S, tau)

    sv = spec.sigma_S * np.sqrt(tau)
    dp = _d_plus(S, spec.K, sv)
    n_dp = ndtr(dp)
    V = S * n_dp - spec.K * ndtr(dp - sv)
    survival = np.exp(-lam * tau)
    loss = -np.expm1(-lam * tau)

    grad = np.stack([-tau * survival * V, -loss * n_dp], axis=-1)
    d_ll = tau * tau * survival * V
    d_ls = -tau * survival * n_dp
    d_ss = -loss * norm_pdf(dp) / (S * sv)
    hess = np.stack([np.stack([d_ll, d_ls], axis=-1),
                     np.stack([d_ls, d_ss], axis=-1)], axis=-2)
    return GreekBundle(-loss * V, grad, hess)
