"""Named experiments runnable from a config file.

Each entry maps a flat parameter table onto one of the ``run_*`` functions
in :mod:`pnlbleed.experiments` and flattens the result into JSON-ready
values.  Experiments that produce P&L trajectories also return them so the
CLI can write the CSV ensemble and figure.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Callable

from . import experiments as ex
from .closed_form import CallSpec
from .montecarlo import Estimate, MonteCarloConfig


def _jsonable(value):
    if isinstance(value, Estimate):
        return value.as_dict()
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "item"):
        return value.item()
    return value


def _ref_check(estimate: Estimate, reference) -> dict:
    if reference is None:
        return {"reference": None, "within_3se": None}
    return {"reference": float(reference),
            "within_3se": bool(abs(estimate.mean - reference) <= 3 * estimate.std_error)}


@dataclass(frozen=True)
class RunOutput:
    results: dict
    pnl: object | None = None            # PnlEnsemble for CSV/figure output
    tau_table: tuple | None = None       # (taus, means, ses, reference)


@dataclass(frozen=True)
class Experiment:
    name: str
    description: str
    source: str
    defaults: dict
    runner: Callable[[dict, MonteCarloConfig], RunOutput]


_META_DEFAULTS = {f.name: f.default for f in fields(ex.MetaCvaParams)}


def _meta_params(p: dict) -> ex.MetaCvaParams:
    return ex.MetaCvaParams(**{k: p[k] for k in _META_DEFAULTS})


def _run_local_vol(p, cfg):
    call = CallSpec(p["K"], p["T"], p["alpha"])
    alpha_hat = ex.step_local_vol(p["alpha_hat_early"], p["alpha_hat_late"], p["switch_time"],
                                  p["spot_barrier"], p["spot_bump"])
    r = ex.run_gatheral_local_vol(p["alpha"], alpha_hat, call, cfg, S0=p["S0"])
    out = {"U_mc": r["U_mc"], "U_direct": r["U_direct"], **_ref_check(r["U_mc"], r["U_ref"]),
           "sample_variance_bleed": r["sample_variance_bleed"],
           "sample_variance_direct": r["sample_variance_direct"]}
    return RunOutput(_jsonable(out))


def _run_stoch_vol(p, cfg):
    call = CallSpec(p["K"], p["T"], p["alpha0"])
    beta_hat, gamma_hat = ex.heston_coefficients(p["kappa"], p["theta"], p["vol_of_var"])
    r = ex.run_gatheral_stoch_vol(beta_hat, gamma_hat, p["rho_S_alpha"], call, cfg,
                                  S0=p["S0"], alpha0=p["alpha0"])
    return RunOutput(_jsonable(r))


def _run_piterbarg(p, cfg):
    call = CallSpec(p["K"], p["T"], p["sigma_S"])
    r = ex.run_piterbarg_discounting(p["r"], p["r_hat"], call, cfg, S0=p["S0"])
    return RunOutput(_jsonable({"U_mc": r["U_mc"], **_ref_check(r["U_mc"], r["U_ref"])}))


def _run_bk_cva(p, cfg):
    call = CallSpec(p["K"], p["T"], p["sigma_S"])
    hazard = ex.HazardSpec(p["lambda0"], p["sigma_lambda"], p["rho_lambda_S"])
    r = ex.run_bk_cva(p["r"], hazard, call, cfg, S0=p["S0"], position=p["position"])
    out = {"V0": r["V0"], "U_mc": r["U_mc"], **_ref_check(r["U_mc"], r["U_ref"])}
    if p["friction"]:
        f = ex.run_strict_payoff(p["r"], p["friction"], call, cfg, S0=p["S0"])
        out["strict_payoff"] = {"U_mc": f["U_mc"], "reference": f["U_ref"]}
    return RunOutput(_jsonable(out))


def _pnl_cfg(p, cfg):
    return replace(cfg, n_paths=min(p["csv_paths"], cfg.n_paths) if not cfg.antithetic
                   else 2 * max(1, min(p["csv_paths"], cfg.n_paths) // 2))


def _run_meta_cva(p, cfg):
    params = _meta_params(p)
    r = ex.run_meta_cva(params, cfg)
    # The CSV paths are the leading draws of the same run (same per-draw streams).
    pnl = ex.run_meta_cva_pnl_paths(params, _pnl_cfg(p, cfg), keep=p["csv_paths"],
                                    stride=p["csv_stride"])
    return RunOutput(_jsonable(r), pnl=pnl)


def _run_pnl_paths(p, cfg):
    params = _meta_params(p)
    pnl = ex.run_meta_cva_pnl_paths(params, cfg, p["lambda_drift_shift"], p["stock_drift"],
                                    keep=p["csv_paths"], stride=p["csv_stride"])
    out = {"expected_terminal_pnl": pnl.terminal, "kept_paths": int(pnl.cum_pnl.shape[0])}
    return RunOutput(_jsonable(out), pnl=pnl)


def _run_tau(p, cfg):
    call = CallSpec(p["K"], p["T"], p["alpha"])
    taus = [f * p["T"] for f in p["tau_fractions"]]
    r = ex.run_tau_invariance(p["alpha"], p["alpha_hat"], call, taus, cfg, S0=p["S0"])
    rows = [{"tau": tau, **est.as_dict()} for tau, est in r["estimates"].items()]
    ests = list(r["estimates"].values())
    agree = all(abs(a.mean - b.mean) <= 3 * (a.std_error + b.std_error)
                for i, a in enumerate(ests) for b in ests[i + 1:])
    out = {"estimates": rows, "reference": r["U_ref"], "mutually_consistent": agree}
    table = (list(r["estimates"]), [e.mean for e in ests], [e.std_error for e in ests],
             r["U_ref"])
    return RunOutput(_jsonable(out), tau_table=table)


_SPOT = {"S0": 100.0, "K": 100.0}

EXPERIMENTS = (
    Experiment("gatheral-local-vol",
               "Black-Scholes to local-vol model adjustment from the gamma bleed",
               "Gatheral (2006), local volatility",
               {"alpha": 0.2, "alpha_hat_early": 0.25, "alpha_hat_late": 0.30,
                "switch_time": 0.5, "spot_barrier": 90.0, "spot_bump": 0.0, **_SPOT, "T": 1.0},
               _run_local_vol),
    Experiment("gatheral-stoch-vol",
               "Frozen-vol Black-Scholes to Heston-type stochastic vol via vega/vanna/volga",
               "Gatheral (2006), stochastic volatility",
               {"alpha0": 0.2, "kappa": 2.0, "theta": 0.0625, "vol_of_var": 0.2,
                "rho_S_alpha": -0.5, **_SPOT, "T": 1.0},
               _run_stoch_vol),
    Experiment("piterbarg",
               "Discounting adjustment between two deterministic rates",
               "Piterbarg (2010), funding and collateral discounting",
               {"r": 0.02, "r_hat": 0.05, "sigma_S": 0.2, **_SPOT, "T": 3.0},
               _run_piterbarg),
    Experiment("bk-cva",
               "Zero-recovery CVA as a discounting plus payoff adjustment",
               "Burgard & Kjaer (2013), semi-replication CVA",
               {"r": 0.0, "lambda0": 0.05, "sigma_lambda": 0.0, "rho_lambda_S": 0.0,
                "sigma_S": 0.2, **_SPOT, "T": 3.0, "position": 1.0, "friction": 0.0},
               _run_bk_cva),
    Experiment("meta-cva",
               "CVA meta-adjustment for Ho-Lee hazard-rate volatility (boundary case)",
               "meta-adjustment toy: Ho-Lee hazard vol on a call's CVA",
               {**_META_DEFAULTS, "csv_paths": 100, "csv_stride": 10},
               _run_meta_cva),
    Experiment("tau-invariance",
               "Local-vol adjustment with a model-dependent payoff at an earlier horizon",
               "intermediate-horizon exercise on Gatheral's adjustment",
               {"alpha": 0.2, "alpha_hat": 0.25, **_SPOT, "T": 1.0,
                "tau_fractions": [0.0, 0.25, 0.5, 1.0]},
               _run_tau),
    Experiment("pnl-paths",
               "Pathwise P&L of the unhedged CVA meta-adjustment under a real-world drift",
               "pathwise P&L of a hedged portfolio",
               {**_META_DEFAULTS, "lambda_drift_shift": 0.0, "stock_drift": 0.0,
                "csv_paths": 100, "csv_stride": 10},
               _run_pnl_paths),
)

_BY_NAME = {e.name: e for e in EXPERIMENTS}


def get(name: str) -> Experiment:
    return _BY_NAME[name]


def defaults_for(name: str) -> dict:
    return dict(_BY_NAME[name].defaults)


def list_experiments() -> list[tuple[str, str, str]]:
    """``(name, description, source)`` for every experiment, in a fixed order."""
    return [(e.name, e.description, e.source) for e in EXPERIMENTS]
