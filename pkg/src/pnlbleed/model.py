"""Ito model coefficients, covariation and generator algebra.

Coefficient functions are vectorised closures over ``(t, x)``: ``t`` is a
scalar time and ``x`` has shape ``(..., n)``.  Drifts return ``(..., n)`` and
full diffusion matrices ``(..., n, d)``.  Models flagged ``diagonal`` are the
one-factor case (``d == n``, no off-diagonal loadings) and their ``sigma``
returns only the diagonal, shape ``(..., n)``.

All objects here are immutable after construction.  Coefficient closures are
expected to be pure; nothing checks that at runtime.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidInputError, ModelSpecificationError

logger = logging.getLogger(__name__)

CHOLESKY_JITTER = 1e-12

CoefficientFn = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class StateVector:
    """A point ``(t, x)`` of the pricing domain."""

    t: float
    x: np.ndarray

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        if x.ndim != 1:
            raise InvalidInputError(f"state must be a flat vector, got shape {x.shape}")
        if not np.isfinite(self.t) or self.t < 0:
            raise InvalidInputError(f"time must be finite and non-negative, got {self.t}")
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def check_horizon(self, T: float) -> None:
        if self.t > T:
            raise InvalidInputError(f"t={self.t} lies beyond horizon T={T}")


def cholesky_with_jitter(rho: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of a correlation matrix.

    A single retry with ``1e-12`` added to the diagonal is allowed, which is
    enough for perfectly correlated (singular) inputs.  Anything worse fails.
    """
    try:
        return np.linalg.cholesky(rho)
    except np.linalg.LinAlgError:
        pass
    try:
        chol = np.linalg.cholesky(rho + CHOLESKY_JITTER * np.eye(rho.shape[0]))
    except np.linalg.LinAlgError as exc:
        raise ModelSpecificationError(
            "correlation matrix is not positive semi-definite"
        ) from exc
    logger.info("correlation matrix needed %.0e diagonal jitter", CHOLESKY_JITTER)
    return chol


@dataclass(frozen=True)
class ModelDynamics:
    """Drift, diffusion and Brownian correlation of an ``n``-dim Ito process.

    Parameters
    ----------
    n, d : int
        State and Brownian dimensions.
    mu : callable
        ``mu(t, x) -> (..., n)``.
    sigma : callable
        ``sigma(t, x) -> (..., n, d)``, or ``(..., n)`` when ``diagonal``.
    rho : array_like, optional
        Constant ``d x d`` correlation matrix; identity by default.
    diagonal : bool
        One-factor layout, see module docstring.
    """

    n: int
    d: int
    mu: CoefficientFn
    sigma: CoefficientFn
    rho: np.ndarray | None = None
    diagonal: bool = False
    name: str = ""
    chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise InvalidInputError("dimensions must be positive")
        if self.diagonal and self.n != self.d:
            raise InvalidInputError("diagonal models need d == n")
        rho = np.eye(self.d) if self.rho is None else np.array(self.rho, dtype=float)
        if rho.shape != (self.d, self.d):
            raise InvalidInputError(f"rho must be {self.d}x{self.d}, got {rho.shape}")
        if not np.allclose(rho, rho.T, atol=0.0, rtol=0.0):
            raise ModelSpecificationError("correlation matrix is not symmetric")
        if not np.all(np.diag(rho) == 1.0):
            raise ModelSpecificationError("correlation matrix needs a unit diagonal")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)
        chol = cholesky_with_jitter(rho)
        chol.setflags(write=False)
        object.__setattr__(self, "chol", chol)

    @classmethod
    def one_factor(cls, mu, vols, rho=None, name=""):
        """Model with diagonal diffusion; ``vols(t, x)`` returns ``(..., n)``."""
        if rho is None:
            raise InvalidInputError("one_factor needs an explicit rho to fix n")
        n = np.asarray(rho).shape[0]
        return cls(n=n, d=n, mu=mu, sigma=vols, rho=rho, diagonal=True, name=name)

    def check_state(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.n:
            raise InvalidInputError(
                f"state has {x.shape[-1] if x.ndim else 0} components, model expects {self.n}"
            )
        return x

    def drift(self, t, x) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.mu(t, x), dtype=float), x.shape)

    def diffusion(self, t, x) -> np.ndarray:
        """Full ``(..., n, d)`` diffusion matrix, expanding the diagonal form."""
        s = np.asarray(self.sigma(t, x), dtype=float)
        if self.diagonal:
            s = np.broadcast_to(s, x.shape)
            return s[..., :, None] * np.eye(self.n)
        return np.broadcast_to(s, x.shape + (self.d,))

    def shocks(self, t, x, dw) -> np.ndarray:
        """Diffusion applied to correlated increments ``dw`` of shape ``(..., d)``."""
        s = np.asarray(self.sigma(t, x), dtype=float)
        if self.diagonal:
            return s * dw
        return np.einsum("...ik,...k->...i", s, dw)


def covariation(model: ModelDynamics, t: float, x) -> np.ndarray:
    """Instantaneous covariation ``a = sigma rho sigma^T`` at ``(t, x)``."""
    x = model.check_state(x)
    s = np.asarray(model.sigma(t, x), dtype=float)
    if model.diagonal:
        s = np.broadcast_to(s, x.shape)
        return model.rho * s[..., :, None] * s[..., None, :]
    s = np.broadcast_to(s, x.shape + (model.d,))
    return np.einsum("...ik,kl,...jl->...ij", s, model.rho, s)


@dataclass(frozen=True)
class GreekBundle:
    """Value, gradient and Hessian of a pricing function.

    Shapes are ``value (...,)``, ``grad (..., n)`` and ``hess (..., n, n)``;
    the leading axes are a batch (typically one entry per path).  The
    Hessian is symmetrised on construction.
    """

    value: np.ndarray
    grad: np.ndarray
    hess: np.ndarray

    def __post_init__(self):
        value = np.asarray(self.value, dtype=float)
        grad = np.asarray(self.grad, dtype=float)
        hess = np.asarray(self.hess, dtype=float)
        if grad.ndim < 1:
            raise InvalidInputError("gradient must have at least one axis")
        n = grad.shape[-1]
        if hess.shape[-2:] != (n, n):
            raise InvalidInputError(f"hessian shape {hess.shape} does not match n={n}")
        if grad.shape[:-1] != value.shape or hess.shape[:-2] != value.shape:
            raise InvalidInputError("value, grad and hess batch shapes disagree")
        hess = 0.5 * (hess + np.swapaxes(hess, -1, -2))
        object.__setattr__(self, "value", value)
        object.__setattr__(self, "grad", grad)
        object.__setattr__(self, "hess", hess)

    @property
    def n(self) -> int:
        return self.grad.shape[-1]

    @classmethod
    def zeros(cls, n: int, batch_shape=()) -> "GreekBundle":
        batch_shape = tuple(batch_shape)
        return cls(np.zeros(batch_shape), np.zeros(batch_shape + (n,)),
                   np.zeros(batch_shape + (n, n)))


def _check_greeks(model: ModelDynamics, greeks: GreekBundle) -> None:
    if greeks.n != model.n:
        raise InvalidInputError(
            f"greeks are {greeks.n}-dimensional, model '{model.name}' is {model.n}-dimensional"
        )


def _contract(drift, cov, greeks: GreekBundle) -> np.ndarray:
    first = np.einsum("...i,...i->...", drift, greeks.grad)
    second = np.einsum("...ij,...ij->...", cov, greeks.hess)
    return first + 0.5 * second


def apply_generator(model: ModelDynamics, greeks: GreekBundle, t: float, x) -> np.ndarray:
    """``mu . grad + 1/2 a : hess`` for the model's generator."""
    x = model.check_state(x)
    _check_greeks(model, greeks)
    return _contract(model.drift(t, x), covariation(model, t, x), greeks)


def generator_difference(base: ModelDynamics, target: ModelDynamics,
                         greeks: GreekBundle, t: float, x) -> np.ndarray:
    """Apply the difference of two generators to a bundle of greeks.

    Coefficients are differenced before contracting, so identical models give
    an exact zero rather than a rounding residue.
    """
    if base.n != target.n:
        raise InvalidInputError(
            f"base has n={base.n} but target has n={target.n}; no common domain"
        )
    x = base.check_state(x)
    _check_greeks(base, greeks)
    if target is base:
        return np.zeros(np.shape(greeks.value))
    dmu = target.drift(t, x) - base.drift(t, x)
    da = covariation(target, t, x) - covariation(base, t, x)
    return _contract(dmu, da, greeks)
