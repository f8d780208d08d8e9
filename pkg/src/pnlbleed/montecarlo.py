"""Euler-Maruyama path engine and discounted-bleed estimators.

Paths are generated in fixed-size blocks of draws.  Each draw owns a
counter-based Gaussian stream (see :mod:`pnlbleed.rng`), blocks may be
processed by any number of threads, and per-draw results are concatenated
in draw order before any reduction.  The same ``(seed, config, problem)``
therefore gives bit-identical estimates for every worker count.

Quadrature along a path: trapezoid on the discounted bleed, with the
discount exponent accumulated as a left Riemann sum of the rate so that the
discount factor at ``t_k`` only uses rates observed before ``t_k``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np

from .bleed import AdjustmentProblem, decompose_with_greeks, evaluate_oracle
from .errors import InvalidInputError, NonFiniteError
from .model import ModelDynamics
from .rng import check_seed, draw_normals

logger = logging.getLogger(__name__)

BLOCK_DRAWS = 4096


@dataclass(frozen=True)
class MonteCarloConfig:
    """Simulation budget.

    With ``antithetic`` on, ``n_paths`` must be even: ``n_paths // 2`` draws
    are made and each is used together with its mirror image.  ``workers``
    only caps the thread pool and never changes results.
    """

    n_paths: int = 100_000
    n_steps: int = 1000
    seed: int = 0
    antithetic: bool = False
    workers: int = 1

    def __post_init__(self):
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise InvalidInputError(f"n_paths must be a positive integer, got {self.n_paths}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise InvalidInputError(f"n_steps must be a positive integer, got {self.n_steps}")
        if self.antithetic and self.n_paths % 2:
            raise InvalidInputError("antithetic sampling needs an even n_paths")
        if self.workers < 1:
            raise InvalidInputError("workers must be at least 1")
        try:
            check_seed(self.seed)
        except (TypeError, ValueError) as exc:
            raise InvalidInputError(str(exc)) from exc

    @property
    def n_draws(self) -> int:
        return self.n_paths // 2 if self.antithetic else self.n_paths


@dataclass(frozen=True)
class Estimate:
    mean: float
    std_error: float
    n_paths: int

    @classmethod
    def from_samples(cls, samples) -> "Estimate":
        """Sample mean and ``std / sqrt(N)``; a single sample reports zero error."""
        samples = np.asarray(samples, dtype=float)
        n = samples.shape[0]
        if n and np.all(samples == samples[0]):
            return cls(float(samples[0]), 0.0, n)
        mean = float(np.mean(samples))
        se = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(mean, se, n)

    def within(self, reference: float, n_se: float = 3.0) -> bool:
        return abs(self.mean - reference) <= n_se * self.std_error

    def as_dict(self) -> dict:
        return {"mean": self.mean, "std_error": self.std_error, "n_paths": self.n_paths}


@dataclass(frozen=True)
class PathEnsemble:
    times: np.ndarray      # (n_steps + 1,)
    states: np.ndarray     # (n_paths, n_steps + 1, n)


@dataclass(frozen=True)
class PnlPath:
    """Cumulative discounted P&L; ``cum_pnl`` has time on its last axis."""

    times: np.ndarray
    cum_pnl: np.ndarray

    @property
    def terminal(self) -> np.ndarray:
        return self.cum_pnl[..., -1]


@dataclass(frozen=True)
class PnlEnsemble:
    """Down-sampled P&L paths plus the estimate over every simulated path."""

    times: np.ndarray
    cum_pnl: np.ndarray    # (n_kept, len(times))
    terminal: Estimate


def time_grid(T: float, n_steps: int) -> np.ndarray:
    return np.linspace(0.0, T, n_steps + 1)


def steps_to_horizon(horizon: float, T: float, n_steps: int) -> int:
    """Number of grid steps up to ``horizon``, which must sit on the grid."""
    k = round(horizon / T * n_steps)
    if abs(k * T / n_steps - horizon) > 1e-9 * max(T, 1.0):
        raise InvalidInputError(
            f"horizon {horizon} is not on the {n_steps}-step grid over [0, {T}]"
        )
    return k


def _raise_non_finite(values: np.ndarray, what: str, offset: int):
    """Report the first non-finite entry of a time-major ``(steps, paths, n)`` array."""
    step, path, coord = (int(i) for i in np.argwhere(~np.isfinite(values))[0])
    path += offset
    raise NonFiniteError(
        f"non-finite {what} on path {path}, step {step}, coordinate {coord}",
        path_index=path, step=step, coordinate=coord,
    )


def _euler_block(model: ModelDynamics, x0, dt: float, n_steps: int, normals,
                 drift: Callable | None, antithetic: bool, path_offset: int) -> np.ndarray:
    """Euler paths for one block of draws, time-major: ``(n_steps + 1, paths, n)``."""
    dw = np.ascontiguousarray(((normals @ model.chol.T) * math.sqrt(dt)).transpose(1, 0, 2))
    if antithetic:
        dw = np.stack([dw, -dw], axis=2).reshape(n_steps, -1, model.d)
    n_block = dw.shape[1]
    mu = model.mu if drift is None else drift
    states = np.empty((n_steps + 1, n_block, model.n))
    states[0] = x0
    for k in range(n_steps):
        t = k * dt
        x = states[k]
        np.add(x, np.asarray(mu(t, x), dtype=float) * dt + model.shocks(t, x, dw[k]),
               out=states[k + 1])
    if not np.all(np.isfinite(states)):
        _raise_non_finite(states, "state", path_offset)
    return states


class _BlockRunner:
    """Runs a per-block function over all draws and gathers results in order.

    Block functions see time-major states ``(n_steps + 1, paths, n)``.
    """

    def __init__(self, model: ModelDynamics, x0, T: float, cfg: MonteCarloConfig,
                 n_steps: int | None = None, drift: Callable | None = None):
        self.model = model
        self.x0 = model.check_state(np.atleast_1d(np.asarray(x0, dtype=float)))
        if self.x0.ndim != 1:
            raise InvalidInputError("x0 must be a single state vector")
        self.cfg = cfg
        self.dt = T / cfg.n_steps
        self.n_steps = cfg.n_steps if n_steps is None else n_steps
        self.times = np.arange(self.n_steps + 1) * self.dt
        self.drift = drift

    def block_paths(self, start: int, stop: int) -> np.ndarray:
        cfg = self.cfg
        normals = draw_normals(cfg.seed, start, stop, self.n_steps, self.model.d)
        path_offset = 2 * start if cfg.antithetic else start
        return _euler_block(self.model, self.x0, self.dt, self.n_steps, normals,
                            self.drift, cfg.antithetic, path_offset)

    def run(self, fn: Callable) -> list:
        """``fn(times, states, path_offset)`` per block; returns results in draw order."""
        n = self.cfg.n_draws
        ranges = [(a, min(a + BLOCK_DRAWS, n)) for a in range(0, n, BLOCK_DRAWS)]
        per_path = 2 if self.cfg.antithetic else 1

        def work(bounds):
            start, stop = bounds
            return fn(self.times, self.block_paths(start, stop), per_path * start)

        if self.cfg.workers == 1 or len(ranges) == 1:
            return [work(r) for r in ranges]
        with ThreadPoolExecutor(max_workers=self.cfg.workers) as pool:
            return list(pool.map(work, ranges))

    def pair_average(self, samples: np.ndarray) -> np.ndarray:
        if self.cfg.antithetic:
            return samples.reshape(-1, 2).mean(axis=1)
        return samples


def simulate_paths(model: ModelDynamics, x0, T: float, cfg: MonteCarloConfig,
                   drift: Callable | None = None) -> PathEnsemble:
    """Simulate and return the whole ensemble (memory ``n_paths * (n_steps+1) * n``)."""
    runner = _BlockRunner(model, x0, T, cfg, drift=drift)
    blocks = runner.run(lambda times, states, offset: states.transpose(1, 0, 2))
    return PathEnsemble(runner.times, np.concatenate(blocks, axis=0))


def discounted_integral(times, states, R_hat: Callable, Z: Callable, path_offset: int = 0,
                        keep_path: bool = False):
    """Trapezoid integral of the discounted ``Z`` over time-major ``states``.

    Returns ``(terminal, discount_at_end, cum)`` where ``cum`` is the
    time-major running integral when ``keep_path`` is set and ``None`` otherwise.
    """
    n_t = times.shape[0]
    if states.shape[0] != n_t:
        raise InvalidInputError("states and time grid disagree on the number of instants")
    batch = states.shape[1:-1]
    cum = np.zeros((n_t,) + batch) if keep_path else None
    total = np.zeros(batch)
    log_discount = np.zeros(batch)
    prev = None
    for k in range(n_t):
        x = states[k]
        z = np.broadcast_to(np.asarray(Z(times[k], x), dtype=float), batch)
        if not np.all(np.isfinite(z)):
            bad = np.argwhere(~np.isfinite(z.reshape(-1)))
            idx = path_offset + int(bad[0][0]) if batch else None
            raise NonFiniteError(f"non-finite bleed on path {idx}, step {k}, coordinate None",
                                 path_index=idx, step=k)
        integrand = np.exp(-log_discount) * z
        if k > 0:
            total = total + 0.5 * (times[k] - times[k - 1]) * (prev + integrand)
            if keep_path:
                cum[k] = total
        prev = integrand
        if k < n_t - 1:
            rate = np.broadcast_to(np.asarray(R_hat(times[k], x), dtype=float), batch)
            log_discount = log_discount + rate * (times[k + 1] - times[k])
    return total, np.exp(-log_discount), cum


def integrate_discounted_bleed(path, R_hat: Callable, Z: Callable, path_offset: int = 0,
                               return_discount: bool = False):
    """Cumulative ``int_0^t exp(-int_0^u R_hat) Z_u du`` along paths.

    ``path`` is a :class:`PathEnsemble` or a ``(times, states)`` pair with
    ``states`` shaped ``(..., n_steps + 1, n)``.  ``R_hat`` and ``Z`` are
    vectorised ``(t, x)`` functions.  With ``return_discount`` the discount
    factor at the last grid time is returned alongside.
    """
    times, states = (path.times, path.states) if isinstance(path, PathEnsemble) else path
    times = np.asarray(times, dtype=float)
    states = np.asarray(states, dtype=float)
    if states.ndim < 2:
        raise InvalidInputError("states need at least a time and a state axis")
    _, discount, cum = discounted_integral(times, np.moveaxis(states, -2, 0), R_hat, Z,
                                           path_offset=path_offset, keep_path=True)
    pnl = PnlPath(times, np.moveaxis(cum, 0, -1))
    if return_discount:
        return pnl, discount
    return pnl


def bleed_function(problem: AdjustmentProblem) -> Callable:
    def z(t, x):
        greeks = evaluate_oracle(problem, t, x)
        return decompose_with_greeks(problem, t, x, greeks).total
    return z


def _adjustment_pnl(problem: AdjustmentProblem, times, states, offset, keep_path=False):
    terminal, discount, cum = discounted_integral(
        times, states, problem.target.cashflows.R, bleed_function(problem),
        path_offset=offset, keep_path=keep_path)
    if problem.terminal_adjustment is not None:
        g = np.asarray(problem.terminal_adjustment(states[-1]), dtype=float)
        terminal = terminal + discount * g
    return terminal, cum


def _runner_for(problem: AdjustmentProblem, model, x0, cfg, drift=None) -> _BlockRunner:
    n_steps = steps_to_horizon(problem.horizon, problem.T, cfg.n_steps)
    return _BlockRunner(model, x0, problem.T, cfg, n_steps=n_steps, drift=drift)


def path_samples(problem: AdjustmentProblem, x0, cfg: MonteCarloConfig,
                 functionals: dict[str, Callable],
                 measure: Literal["target", "base"] = "target",
                 drift: Callable | None = None) -> dict[str, np.ndarray]:
    """Per-draw samples of several path functionals on one shared ensemble.

    Each functional is ``fn(times, states, path_offset) -> (paths,)`` with
    time-major ``states`` of shape ``(n_steps + 1, paths, n)``.  The key
    ``"adjustment"`` is always included and holds the discounted bleed integral
    (plus terminal adjustment).  Antithetic pairs are averaged.
    """
    model = _measure_model(problem, measure)
    runner = _runner_for(problem, model, x0, cfg, drift)
    names = ["adjustment", *functionals]

    def block(times, states, offset):
        out = {"adjustment": _adjustment_pnl(problem, times, states, offset)[0]}
        for name, fn in functionals.items():
            out[name] = np.asarray(fn(times, states, offset), dtype=float)
        return out

    blocks = runner.run(block)
    return {name: runner.pair_average(np.concatenate([b[name] for b in blocks]))
            for name in names}


def _measure_model(problem: AdjustmentProblem, measure: str) -> ModelDynamics:
    if measure == "target":
        return problem.target.model
    if measure == "base":
        return problem.base.model
    raise InvalidInputError(f"measure must be 'target' or 'base', got {measure!r}")


def estimate_adjustment(problem: AdjustmentProblem,
                        measure: Literal["target", "base"], x0,
                        cfg: MonteCarloConfig) -> Estimate:
    """Monte Carlo estimate of the adjustment as an expected discounted bleed.

    ``measure`` picks which model drives the paths: ``"target"`` in general,
    ``"base"`` where both generators coincide anyway.
    """
    samples = path_samples(problem, x0, cfg, {}, measure=measure)["adjustment"]
    return Estimate.from_samples(samples)


def simulate_pnl_paths(problem: AdjustmentProblem, real_world_drift: Callable | None,
                       x0, cfg: MonteCarloConfig, keep: int | None = None,
                       stride: int = 1) -> PnlEnsemble:
    """P&L paths with the state drifting at ``real_world_drift``.

    The bleed function keeps the problem's own (risk-neutral) coefficients;
    only the path law changes.  ``keep`` limits how many full trajectories are
    returned (every path still enters ``terminal``), ``stride`` thins the time
    axis while always retaining the final instant.
    """
    if stride < 1:
        raise InvalidInputError("stride must be at least 1")
    model = problem.target.model
    if real_world_drift is not None:
        probe = np.asarray(real_world_drift(0.0, np.atleast_1d(np.asarray(x0, float))))
        if probe.shape[-1:] != (model.n,):
            raise InvalidInputError(f"drift override must return {model.n} components")
    runner = _runner_for(problem, model, x0, cfg, drift=real_world_drift)
    idx = np.arange(0, runner.n_steps + 1, stride)
    if idx[-1] != runner.n_steps:
        idx = np.append(idx, runner.n_steps)
    limit = cfg.n_paths if keep is None else keep

    def block(times, states, offset):
        terminal, cum = _adjustment_pnl(problem, times, states, offset, keep_path=True)
        rows = max(0, min(limit - offset, states.shape[1]))
        return terminal, cum[idx, :rows].T

    blocks = runner.run(block)
    terminal = runner.pair_average(np.concatenate([b[0] for b in blocks]))
    kept = np.concatenate([b[1] for b in blocks], axis=0)
    return PnlEnsemble(runner.times[idx], kept, Estimate.from_samples(terminal))
