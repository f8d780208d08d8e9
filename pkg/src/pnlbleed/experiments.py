"""Worked adjustment experiments, each with closed-form or direct-MC references.

Every ``run_*`` function is a pure function of its parameters and the
Monte Carlo configuration, and returns a plain dict so that results can be
serialised without further conversion.

Greeks at expiry
----------------
Option gamma, vega, vanna and volga blow up at the strike as ``t -> T`` but
vanish at every other spot.  Paths land on the strike with probability
zero, so at the terminal grid instant the oracles below return the pointwise
limit (zero second-order greeks, a step-function delta).
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, replace
from typing import Callable

import numpy as np
from scipy import integrate

from .bleed import AdjustmentProblem, CashflowSpec, PricingProblem, constant
from .closed_form import (CallSpec, bs_call, bs_delta, bs_gamma, bs_greeks_sv,
                          boundary_cva, boundary_cva_greeks)
from .errors import InvalidInputError, UnsupportedModeError
from .model import GreekBundle, ModelDynamics
from .montecarlo import (Estimate, MonteCarloConfig, discounted_integral, path_samples,
                         simulate_pnl_paths)

logger = logging.getLogger(__name__)

ALPHA_FLOOR = 1e-8


def _combined_agreement(a: Estimate, b: Estimate, n_se: float = 3.0) -> bool:
    return abs(a.mean - b.mean) <= n_se * (a.std_error + b.std_error)


def _sample_variance(samples) -> float:
    return float(np.var(samples, ddof=1)) if len(samples) > 1 else 0.0


def _terminal_call(times, states, offset, K, s_index=0):
    return np.maximum(states[-1, :, s_index] - K, 0.0)


# ---------------------------------------------------------------------------
# Black-Scholes oracles
# ---------------------------------------------------------------------------

def _bs_value_delta_gamma(t, S, alpha, call: CallSpec):
    tau = call.T - t
    if tau <= 0:
        return np.maximum(S - call.K, 0.0), (S > call.K).astype(float), np.zeros_like(S)
    v = alpha * alpha * tau
    return (np.asarray(bs_call(S, call.K, v)), np.asarray(bs_delta(S, call.K, v)),
            np.asarray(bs_gamma(S, call.K, v)))


def lognormal_model(vol: Callable, name: str = "") -> ModelDynamics:
    """Driftless ``dS = vol(t, S) S dW`` on a one-dimensional state."""
    def mu(t, x):
        return np.zeros_like(x)

    def vols(t, x):
        return vol(t, x[..., 0])[..., None] * x

    return ModelDynamics.one_factor(mu, vols, rho=[[1.0]], name=name)


def black_scholes_oracle(alpha: float, call: CallSpec):
    """Price, delta and gamma of the call at constant volatility ``alpha``."""
    def oracle(t, x):
        S = x[..., 0]
        value, delta, gamma = _bs_value_delta_gamma(t, S, alpha, call)
        return GreekBundle(value, delta[..., None], gamma[..., None, None])
    return oracle


# ---------------------------------------------------------------------------
# Local volatility
# ---------------------------------------------------------------------------

def step_local_vol(early: float, late: float, switch_time: float,
                   spot_barrier: float = 0.0, spot_bump: float = 0.0) -> Callable:
    """``alpha^(t, S)``: ``early`` before ``switch_time``, ``late`` after,
    plus ``spot_bump`` wherever ``S < spot_barrier``."""
    def alpha_hat(t, S):
        level = early if t < switch_time else late
        out = np.full(np.shape(S), level)
        if spot_bump:
            out = out + spot_bump * (np.asarray(S) < spot_barrier)
        return out
    alpha_hat.time_only = spot_bump == 0.0
    alpha_hat.breakpoints = [switch_time]
    return alpha_hat


def local_vol_problem(alpha: float, alpha_hat: Callable, call: CallSpec) -> AdjustmentProblem:
    if not alpha > 0:
        raise InvalidInputError("Black-Scholes volatility must be positive")
    base = lognormal_model(lambda t, S: np.full(np.shape(S), alpha), name="black-scholes")
    target = lognormal_model(alpha_hat, name="local-vol")
    cash = CashflowSpec()
    return AdjustmentProblem(PricingProblem(base, cash, call.T),
                             PricingProblem(target, cash, call.T),
                             black_scholes_oracle(alpha, call))


def integrated_variance(alpha_hat: Callable, T: float, S0: float) -> float:
    """``int_0^T alpha^(t)^2 dt`` for a volatility that ignores the spot."""
    breaks = getattr(alpha_hat, "breakpoints", None)
    value, _ = integrate.quad(lambda t: float(alpha_hat(t, np.asarray(S0))) ** 2, 0.0, T,
                              points=breaks, limit=200, epsabs=1e-13, epsrel=1e-12)
    return value


def run_gatheral_local_vol(alpha: float, alpha_hat: Callable, call: CallSpec,
                           cfg: MonteCarloConfig, S0: float = 100.0,
                           time_only: bool | None = None) -> dict:
    """Black-Scholes to local-vol adjustment from the gamma bleed.

    Always reports a direct repricing ``E[(S_T - K)^+] - C`` on the same
    paths; adds the closed form ``C(S0, K, int alpha^2) - C(S0, K, alpha^2 T)``
    when ``alpha_hat`` depends on time only.
    """
    if time_only is None:
        time_only = getattr(alpha_hat, "time_only", False)
    problem = local_vol_problem(alpha, alpha_hat, call)
    base_price = bs_call(S0, call.K, alpha * alpha * call.T)
    samples = path_samples(problem, [S0], cfg,
                           {"payoff": lambda ti, st, off: _terminal_call(ti, st, off, call.K)})
    u_mc = Estimate.from_samples(samples["adjustment"])
    direct = Estimate.from_samples(samples["payoff"] - base_price)
    out = {"U_mc": u_mc, "U_direct": direct, "U_ref": None,
           "sample_variance_bleed": _sample_variance(samples["adjustment"]),
           "sample_variance_direct": _sample_variance(samples["payoff"])}
    if time_only:
        w = integrated_variance(alpha_hat, call.T, S0)
        out["U_ref"] = bs_call(S0, call.K, w) - base_price
    return out


# ---------------------------------------------------------------------------
# Stochastic volatility
# ---------------------------------------------------------------------------

def heston_coefficients(kappa: float, theta: float, vol_of_var: float):
    """Drift and vol of ``alpha`` when ``d alpha^2 = kappa (theta - alpha^2) dt + v alpha dW``.

    Ito on ``alpha = sqrt(y)`` gives
    ``d alpha = (kappa (theta - alpha^2) - v^2 / 4) / (2 alpha) dt + v / 2 dW``.
    """
    def beta_hat(t, a):
        a = np.asarray(a, dtype=float)
        floored = np.maximum(a, ALPHA_FLOOR)
        if np.any(a < ALPHA_FLOOR):
            logger.debug("alpha floored at %g in %d evaluations", ALPHA_FLOOR,
                         int(np.count_nonzero(a < ALPHA_FLOOR)))
        return (kappa * (theta - floored * floored) - 0.25 * vol_of_var ** 2) / (2.0 * floored)

    def gamma_hat(t, a):
        return np.full(np.shape(a), 0.5 * vol_of_var)

    return beta_hat, gamma_hat


def stoch_vol_oracle(call: CallSpec):
    """Greeks of ``C(S, K, alpha^2 (T - t))`` over the state ``(S, alpha)``."""
    def oracle(t, x):
        S = x[..., 0]
        a = np.maximum(x[..., 1], ALPHA_FLOOR)
        tau = call.T - t
        if tau <= 0:
            z = np.zeros_like(S)
            grad = np.stack([(S > call.K).astype(float), z], axis=-1)
            return GreekBundle(np.maximum(S - call.K, 0.0), grad, np.zeros(S.shape + (2, 2)))
        v = a * a * tau
        value, delta, gamma = bs_call(S, call.K, v), bs_delta(S, call.K, v), bs_gamma(S, call.K, v)
        g = bs_greeks_sv(S, a, tau, call.K)
        hess = np.stack([np.stack([gamma, g["vanna"]], axis=-1),
                         np.stack([g["vanna"], g["volga"]], axis=-1)], axis=-2)
        return GreekBundle(value, np.stack([delta, g["vega"]], axis=-1), hess)
    return oracle


def stoch_vol_problem(beta_hat: Callable, gamma_hat: Callable, rho_S_alpha: float,
                      call: CallSpec) -> AdjustmentProblem:
    rho = [[1.0, rho_S_alpha], [rho_S_alpha, 1.0]]

    def s_vol(x):
        return np.maximum(x[..., 1], ALPHA_FLOOR) * x[..., 0]

    def base_mu(t, x):
        return np.zeros_like(x)

    def base_vols(t, x):
        return np.stack([s_vol(x), np.zeros(x.shape[:-1])], axis=-1)

    def target_mu(t, x):
        return np.stack([np.zeros(x.shape[:-1]), beta_hat(t, x[..., 1])], axis=-1)

    def target_vols(t, x):
        return np.stack([s_vol(x), gamma_hat(t, x[..., 1])], axis=-1)

    base = ModelDynamics.one_factor(base_mu, base_vols, rho, name="bs-frozen-vol")
    target = ModelDynamics.one_factor(target_mu, target_vols, rho, name="stoch-vol")
    cash = CashflowSpec()
    return AdjustmentProblem(PricingProblem(base, cash, call.T),
                             PricingProblem(target, cash, call.T),
                             stoch_vol_oracle(call))


def run_gatheral_stoch_vol(beta_hat: Callable, gamma_hat: Callable, rho_S_alpha: float,
                           call: CallSpec, cfg: MonteCarloConfig, S0: float = 100.0,
                           alpha0: float = 0.2) -> dict:
    """Stochastic-vol adjustment from the vega/vanna/volga bleed.

    ``U_direct`` reprices the call by plain Monte Carlo on the very same
    paths.  The sample variances of both estimators are reported so the
    variance reduction can be read off.
    """
    if not alpha0 > 0:
        raise InvalidInputError("initial volatility must be positive")
    problem = stoch_vol_problem(beta_hat, gamma_hat, rho_S_alpha, call)
    base_price = bs_call(S0, call.K, alpha0 * alpha0 * call.T)
    samples = path_samples(problem, [S0, alpha0], cfg,
                           {"payoff": lambda ti, st, off: _terminal_call(ti, st, off, call.K)})
    u_mc = Estimate.from_samples(samples["adjustment"])
    direct = Estimate.from_samples(samples["payoff"] - base_price)
    var_bleed = _sample_variance(samples["adjustment"])
    var_direct = _sample_variance(samples["payoff"])
    return {
        "U_mc": u_mc,
        "U_direct": direct,
        "agree": _combined_agreement(u_mc, direct),
        "sample_variance_bleed": var_bleed,
        "sample_variance_direct": var_direct,
        "variance_ratio": var_direct / var_bleed if var_bleed > 0 else math.inf,
    }


# ---------------------------------------------------------------------------
# Discounting
# ---------------------------------------------------------------------------

def _rate_fn(rate) -> Callable[[float], float]:
    if callable(rate):
        return rate
    r = float(rate)
    fn = lambda t: r  # noqa: E731
    fn.constant_value = r
    return fn


def rate_integral(rate, a: float, b: float) -> float:
    """``int_a^b rate(t) dt`` for a deterministic rate (constant or callable)."""
    fn = _rate_fn(rate)
    if hasattr(fn, "constant_value"):
        return fn.constant_value * (b - a)
    if b <= a:
        return 0.0
    value, _ = integrate.quad(fn, a, b, limit=200, epsabs=1e-13, epsrel=1e-12)
    return value


def _rate_on_state(rate) -> Callable:
    fn = _rate_fn(rate)
    if hasattr(fn, "constant_value"):
        return constant(fn.constant_value)
    return lambda t, x: np.full(np.shape(x)[:-1], float(fn(t)))


def discounted_call_oracle(rate, call: CallSpec, s_index: int = 0, n: int = 1,
                           position: float = 1.0):
    """``position * exp(-int_t^T R) C(S, K, sigma^2 (T - t))`` with spot at ``x[s_index]``."""
    def oracle(t, x):
        S = x[..., s_index]
        df = math.exp(-rate_integral(rate, t, call.T))
        value, delta, gamma = _bs_value_delta_gamma(t, S, call.sigma_S, call)
        scale = position * df
        grad = np.zeros(S.shape + (n,))
        hess = np.zeros(S.shape + (n, n))
        grad[..., s_index] = scale * delta
        hess[..., s_index, s_index] = scale * gamma
        return GreekBundle(scale * value, grad, hess)
    return oracle


def piterbarg_problem(R, R_hat, call: CallSpec) -> AdjustmentProblem:
    model = lognormal_model(lambda t, S: np.full(np.shape(S), call.sigma_S), name="bs")
    base = PricingProblem(model, CashflowSpec(R=_rate_on_state(R)), call.T)
    target = PricingProblem(model, CashflowSpec(R=_rate_on_state(R_hat)), call.T)
    return AdjustmentProblem(base, target, discounted_call_oracle(R, call))


def run_piterbarg_discounting(R, R_hat, call: CallSpec, cfg: MonteCarloConfig,
                              S0: float = 100.0) -> dict:
    """Pure discounting adjustment under a common driftless stock model.

    ``U_ref = (exp(-int R^) - exp(-int R)) C(S0, K, sigma^2 T)``.
    """
    problem = piterbarg_problem(R, R_hat, call)
    u_mc = Estimate.from_samples(path_samples(problem, [S0], cfg, {}, measure="base")["adjustment"])
    c0 = bs_call(S0, call.K, call.sigma_S ** 2 * call.T)
    u_ref = (math.exp(-rate_integral(R_hat, 0.0, call.T))
             - math.exp(-rate_integral(R, 0.0, call.T))) * c0
    return {"U_mc": u_mc, "U_ref": u_ref}


# ---------------------------------------------------------------------------
# Counterparty credit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HazardSpec:
    """Ho-Lee hazard rate calibrated to a flat survival curve ``exp(-lambda0 T)``.

    ``sigma == 0`` gives a deterministic, constant hazard rate.
    """

    lambda0: float = 0.05
    sigma: float = 0.0
    rho_lambda_S: float = 0.0


def ho_lee_stock_model(sigma_lambda: float, sigma_S: float, rho_lambda_S: float,
                       name: str = "") -> ModelDynamics:
    """State ``(lambda, S)``: ``d lambda = sigma_l^2 t dt + sigma_l dW``, ``dS = sigma_S S dW``."""
    s2 = sigma_lambda * sigma_lambda

    def mu(t, x):
        out = np.zeros_like(x)
        out[..., 0] = s2 * t
        return out

    def vols(t, x):
        return np.stack([np.full(x.shape[:-1], sigma_lambda), sigma_S * x[..., 1]], axis=-1)

    rho = [[1.0, rho_lambda_S], [rho_lambda_S, 1.0]]
    return ModelDynamics.one_factor(mu, vols, rho, name=name)


def _hazard(t, x):
    return x[..., 0]


def bk_cva_problem(r: float, hazard: HazardSpec, call: CallSpec,
                   position: float = 1.0) -> AdjustmentProblem:
    """Zero-recovery CVA: ``R^ = r + lambda`` and default cashflow ``F^ = lambda min(V, 0)``.

    The discounting and payoff terms ``-lambda V`` and ``lambda min(V, 0)``
    add up to the familiar ``-lambda V^+``.
    """
    model = ho_lee_stock_model(hazard.sigma, call.sigma_S, hazard.rho_lambda_S, name="ho-lee")
    oracle = discounted_call_oracle(r, call, s_index=1, n=2, position=position)

    def target_rate(t, x):
        return r + x[..., 0]

    def default_cashflow(t, x):
        return x[..., 0] * np.minimum(oracle(t, x).value, 0.0)

    base = PricingProblem(model, CashflowSpec(R=constant(r)), call.T)
    target = PricingProblem(model, CashflowSpec(R=target_rate, F=default_cashflow), call.T)
    return AdjustmentProblem(base, target, oracle)


def run_bk_cva(r: float, hazard: HazardSpec, call: CallSpec, cfg: MonteCarloConfig,
               S0: float = 100.0, position: float = 1.0) -> dict:
    """CVA as an expected discounted bleed, paths under the common model.

    The reference ``-(1 - exp(-lambda0 T)) V0`` holds whenever hazard and
    stock are uncorrelated (including the deterministic case), since the
    Ho-Lee hazard is calibrated to the flat curve.
    """
    problem = bk_cva_problem(r, hazard, call, position)
    x0 = [hazard.lambda0, S0]
    u_mc = Estimate.from_samples(path_samples(problem, x0, cfg, {}, measure="base")["adjustment"])
    v0 = position * math.exp(-r * call.T) * bs_call(S0, call.K, call.sigma_S ** 2 * call.T)
    u_ref = None
    if hazard.sigma == 0 or hazard.rho_lambda_S == 0:
        u_ref = -(-math.expm1(-hazard.lambda0 * call.T)) * max(v0, 0.0)
    return {"U_mc": u_mc, "U_ref": u_ref, "V0": v0}


def run_strict_payoff(r: float, friction: float, call: CallSpec, cfg: MonteCarloConfig,
                      S0: float = 100.0) -> dict:
    """Constant friction cost ``F^ = F + f`` with everything else equal.

    ``U_ref = f (1 - exp(-r T)) / r``, or ``f T`` when ``r == 0``.
    """
    model = lognormal_model(lambda t, S: np.full(np.shape(S), call.sigma_S), name="bs")
    rate = constant(r)
    base = PricingProblem(model, CashflowSpec(R=rate), call.T)
    target = PricingProblem(model, CashflowSpec(R=rate, F=constant(friction)), call.T)
    problem = AdjustmentProblem(base, target, discounted_call_oracle(r, call))
    u_mc = Estimate.from_samples(path_samples(problem, [S0], cfg, {}, measure="base")["adjustment"])
    u_ref = friction * call.T if r == 0 else friction * -math.expm1(-r * call.T) / r
    return {"U_mc": u_mc, "U_ref": u_ref}


# ---------------------------------------------------------------------------
# CVA meta-adjustment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetaCvaParams:
    rho_lambda_S: float = 0.9
    sigma_lambda_hat: float = 0.01
    sigma_lambda: float = 0.0
    sigma_S: float = 0.2
    lambda0: float = 0.05
    S0: float = 100.0
    K: float = 100.0
    T: float = 3.0

    @property
    def call(self) -> CallSpec:
        return CallSpec(self.K, self.T, self.sigma_S)

    def as_dict(self) -> dict:
        return asdict(self)


def boundary_cva_oracle(call: CallSpec):
    """Boundary CVA greeks over ``(lambda, S)``, all zero at ``t = T``."""
    def oracle(t, x):
        if t >= call.T:
            return GreekBundle.zeros(2, x.shape[:-1])
        return boundary_cva_greeks(t, x[..., 0], x[..., 1], call)
    return oracle


def _call_value(t, S, call: CallSpec):
    return np.asarray(bs_call(S, call.K, call.sigma_S ** 2 * max(call.T - t, 0.0)))


def meta_cva_problem(params: MetaCvaParams) -> AdjustmentProblem:
    if params.sigma_lambda != 0:
        raise UnsupportedModeError(
            "only the sigma_lambda = 0 boundary has closed-form base CVA greeks"
        )
    call = params.call

    def cva_cashflow(t, x):
        return -x[..., 0] * np.maximum(_call_value(t, x[..., 1], call), 0.0)

    cash = CashflowSpec(R=_hazard, F=cva_cashflow)
    base = ho_lee_stock_model(params.sigma_lambda, params.sigma_S, params.rho_lambda_S,
                              name="ho-lee-base")
    target = ho_lee_stock_model(params.sigma_lambda_hat, params.sigma_S, params.rho_lambda_S,
                                name="ho-lee-target")
    return AdjustmentProblem(PricingProblem(base, cash, params.T),
                             PricingProblem(target, cash, params.T),
                             boundary_cva_oracle(call))


def run_meta_cva(params: MetaCvaParams, cfg: MonteCarloConfig) -> dict:
    """CVA meta-adjustment ``A0`` for Ho-Lee hazard volatility, plus checks.

    On the same target-measure paths this also estimates the target CVA
    directly and the survival probability ``E[exp(-int lambda)]``.
    """
    problem = meta_cva_problem(params)
    call = params.call
    cash = problem.target.cashflows

    def direct_cva(times, states, offset):
        return discounted_integral(times, states, cash.R, cash.F, path_offset=offset)[0]

    def survival(times, states, offset):
        dt = np.diff(times)
        return np.exp(-(states[:-1, :, 0] * dt[:, None]).sum(axis=0))

    x0 = [params.lambda0, params.S0]
    samples = path_samples(problem, x0, cfg, {"direct": direct_cva, "survival": survival})
    a0 = Estimate.from_samples(samples["adjustment"])
    direct = Estimate.from_samples(samples["direct"])
    surv = Estimate.from_samples(samples["survival"])
    v0 = bs_call(params.S0, params.K, params.sigma_S ** 2 * params.T)
    u0 = boundary_cva(0.0, params.lambda0, params.S0, call)
    gap = u0 + a0.mean - direct.mean
    return {
        "V0": v0,
        "U0": u0,
        "A0": a0,
        "U_hat_direct": direct,
        "consistency_gap": gap,
        "consistency_tolerance": 3.0 * (a0.std_error + direct.std_error),
        "se_ratio": direct.std_error / a0.std_error if a0.std_error > 0 else math.inf,
        "survival": surv,
        "survival_ref": math.exp(-params.lambda0 * params.T),
    }


def shifted_drift(model: ModelDynamics, shift: Callable | np.ndarray) -> Callable:
    """Real-world drift: the model's own drift plus ``shift`` (array or ``(t, x)`` function)."""
    def drift(t, x):
        extra = shift(t, x) if callable(shift) else np.asarray(shift, dtype=float)
        return model.drift(t, x) + extra
    return drift


def run_meta_cva_pnl_paths(params: MetaCvaParams, cfg: MonteCarloConfig,
                           lambda_drift_shift: float = 0.0, stock_drift: float = 0.0,
                           keep: int = 100, stride: int = 10):
    """P&L trajectories of the unhedged meta-adjustment.

    The hazard gets an extra constant drift and the stock a proportional
    drift ``stock_drift * S``; both zero reproduces the pricing measure.
    """
    problem = meta_cva_problem(params)
    override = None
    if lambda_drift_shift or stock_drift:
        def shift(t, x):
            out = np.zeros_like(x)
            out[..., 0] = lambda_drift_shift
            out[..., 1] = stock_drift * x[..., 1]
            return out
        override = shifted_drift(problem.target.model, shift)
    return simulate_pnl_paths(problem, override, [params.lambda0, params.S0], cfg,
                              keep=keep, stride=stride)


# ---------------------------------------------------------------------------
# Intermediate-horizon invariance
# ---------------------------------------------------------------------------

def run_tau_invariance(alpha: float, alpha_hat_const: float, call: CallSpec,
                       tau_grid, cfg: MonteCarloConfig, S0: float = 100.0) -> dict:
    """Adjustment via bleed up to ``tau`` plus a model-dependent payoff at ``tau``.

    At ``tau`` the target pays ``C(S, K, alpha^2 (T - tau))`` and the base
    ``C(S, K, alpha_base^2 (T - tau))``; the resulting estimate should not
    depend on ``tau``.
    """
    alpha_hat = step_local_vol(alpha_hat_const, alpha_hat_const, call.T)
    base_problem = local_vol_problem(alpha, alpha_hat, call)
    estimates = {}
    for tau in tau_grid:
        tau = float(tau)
        rem = call.T - tau

        def g_star(x, rem=rem):
            S = x[..., 0]
            return (np.asarray(bs_call(S, call.K, alpha_hat_const ** 2 * rem))
                    - np.asarray(bs_call(S, call.K, alpha * alpha * rem)))

        problem = replace(base_problem, tau=tau, terminal_adjustment=g_star)
        samples = path_samples(problem, [S0], cfg, {})["adjustment"]
        estimates[tau] = Estimate.from_samples(samples)
    reference = (bs_call(S0, call.K, alpha_hat_const ** 2 * call.T)
                 - bs_call(S0, call.K, alpha * alpha * call.T))
    return {"estimates": estimates, "U_ref": reference}
