"""P&L bleed of pricing with a base model in a world that follows a target.

For a base problem ``(L, R, F, G)`` and target ``(L^, R^, F^, G)`` the bleed is

    Z = (L^ - L) V  -  (R^ - R) V  +  (F^ - F)

where ``V`` is the base price supplied by an injected oracle.  The three
addends are the model, discounting and payoff terms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import InvalidInputError, OracleEvaluationError
from .model import GreekBundle, ModelDynamics, generator_difference

PriceOracle = Callable[[float, np.ndarray], GreekBundle]


def constant(c: float):
    """A ``(t, x)`` function that is ``c`` everywhere, shaped like ``x[..., 0]``."""
    c = float(c)

    def fn(t, x):
        return np.full(np.shape(x)[:-1], c)

    fn.constant_value = c
    return fn


ZERO = constant(0.0)


def _zero_terminal(x):
    return np.zeros(np.shape(x)[:-1])


@dataclass(frozen=True)
class CashflowSpec:
    """Discount rate ``R(t, x)``, running payoff ``F(t, x)`` and terminal ``G(x)``."""

    R: Callable = ZERO
    F: Callable = ZERO
    G: Callable = _zero_terminal


@dataclass(frozen=True)
class PricingProblem:
    model: ModelDynamics
    cashflows: CashflowSpec
    T: float

    def __post_init__(self):
        if not self.T > 0:
            raise InvalidInputError(f"horizon must be positive, got {self.T}")


@dataclass(frozen=True)
class AdjustmentProblem:
    """A base and target problem on a common domain plus the base price oracle.

    By default the terminal payoffs are taken to coincide, so the adjustment
    is the discounted bleed integrated to ``T``.  Setting ``tau`` stops the
    integral at an intermediate horizon and ``terminal_adjustment(x)`` pays
    ``G^ - G`` there, discounted at the target rate.
    """

    base: PricingProblem
    target: PricingProblem
    price_oracle: PriceOracle
    tau: float | None = None
    terminal_adjustment: Callable | None = None

    def __post_init__(self):
        if self.base.T != self.target.T:
            raise InvalidInputError(
                f"base horizon {self.base.T} differs from target horizon {self.target.T}"
            )
        if self.base.model.n != self.target.model.n:
            raise InvalidInputError("base and target live on different state dimensions")
        if self.tau is not None and not 0 <= self.tau <= self.base.T:
            raise InvalidInputError(f"tau={self.tau} outside [0, {self.base.T}]")

    @property
    def n(self) -> int:
        return self.base.model.n

    @property
    def T(self) -> float:
        return self.base.T

    @property
    def horizon(self) -> float:
        return self.T if self.tau is None else self.tau

    def swapped(self, price_oracle: PriceOracle | None = None) -> "AdjustmentProblem":
        """Exchange base and target, optionally with a new oracle."""
        return AdjustmentProblem(self.target, self.base,
                                 price_oracle or self.price_oracle)


class BleedDecomposition(NamedTuple):
    model_term: np.ndarray
    discount_term: np.ndarray
    payoff_term: np.ndarray

    @property
    def total(self):
        return self.model_term + self.discount_term + self.payoff_term


def evaluate_oracle(problem: AdjustmentProblem, t, x) -> GreekBundle:
    try:
        greeks = problem.price_oracle(t, x)
    except Exception as exc:
        raise OracleEvaluationError(f"price oracle failed at t={t}: {exc}") from exc
    if not isinstance(greeks, GreekBundle):
        raise OracleEvaluationError(
            f"price oracle returned {type(greeks).__name__}, expected GreekBundle"
        )
    return greeks


def _difference(f_hat, f, t, x):
    if f_hat is f:
        return np.zeros(np.shape(x)[:-1])
    return np.asarray(f_hat(t, x), dtype=float) - np.asarray(f(t, x), dtype=float)


def decompose_with_greeks(problem: AdjustmentProblem, t, x,
                          greeks: GreekBundle) -> BleedDecomposition:
    """Bleed terms given already-evaluated base greeks."""
    base, target = problem.base, problem.target
    model_term = generator_difference(base.model, target.model, greeks, t, x)
    discount_term = -_difference(target.cashflows.R, base.cashflows.R, t, x) * greeks.value
    payoff_term = _difference(target.cashflows.F, base.cashflows.F, t, x)
    shape = np.shape(greeks.value)
    return BleedDecomposition(*(np.broadcast_to(term, shape) for term in
                                (model_term, discount_term, payoff_term)))


def bleed_decomposition(problem: AdjustmentProblem, t, x) -> BleedDecomposition:
    """Split the bleed at ``(t, x)`` into model, discounting and payoff terms."""
    x = problem.base.model.check_state(x)
    return decompose_with_greeks(problem, t, x, evaluate_oracle(problem, t, x))


def bleed(problem: AdjustmentProblem, t, x):
    """P&L bleed rate at ``(t, x)``; the sum of :func:`bleed_decomposition`."""
    return bleed_decomposition(problem, t, x).total
