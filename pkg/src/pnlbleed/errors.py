"""Exception hierarchy shared across the package."""


class PnlBleedError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(PnlBleedError, ValueError):
    """Arguments have the wrong shape or dimension."""


class DomainError(PnlBleedError, ValueError):
    """A pricing function was evaluated outside its domain."""


class ModelSpecificationError(PnlBleedError, ValueError):
    """A model cannot be built, e.g. a correlation matrix that is not PSD."""


class OracleEvaluationError(PnlBleedError):
    """The injected price oracle failed at some (t, x)."""


class NonFiniteError(PnlBleedError, FloatingPointError):
    """A path or bleed evaluation produced a NaN or infinity.

    Carries the location so that the failing path can be reproduced.
    """

    def __init__(self, message, path_index=None, step=None, coordinate=None):
        super().__init__(message)
        self.path_index = path_index
        self.step = step
        self.coordinate = coordinate


class UnsupportedModeError(PnlBleedError, NotImplementedError):
    """Requested configuration is outside what the experiment supports."""
