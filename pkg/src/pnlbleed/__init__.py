"""Pricing adjustments and meta-adjustments as expected discounted P&L bleeds."""

from .bleed import (AdjustmentProblem, BleedDecomposition, CashflowSpec, PricingProblem,
                    bleed, bleed_decomposition, constant)
from .closed_form import (CallSpec, boundary_cva, boundary_cva_greeks, bs_call, bs_delta,
                          bs_gamma, bs_greeks_sv)
from .errors import (DomainError, InvalidInputError, ModelSpecificationError, NonFiniteError,
                     OracleEvaluationError, PnlBleedError, UnsupportedModeError)
from .model import GreekBundle, ModelDynamics, StateVector
from .montecarlo import (Estimate, MonteCarloConfig, estimate_adjustment, simulate_paths,
                         simulate_pnl_paths)

__version__ = "0.1.0"

__all__ = [
    "AdjustmentProblem", "BleedDecomposition", "CallSpec", "CashflowSpec", "DomainError",
    "Estimate", "GreekBundle", "InvalidInputError", "ModelDynamics", "ModelSpecificationError",
    "MonteCarloConfig", "NonFiniteError", "OracleEvaluationError", "PnlBleedError",
    "PricingProblem", "StateVector", "UnsupportedModeError", "bleed", "bleed_decomposition",
    "boundary_cva", "boundary_cva_greeks", "bs_call", "bs_delta", "bs_gamma", "bs_greeks_sv",
    "constant", "estimate_adjustment", "simulate_paths", "simulate_pnl_paths",
]
