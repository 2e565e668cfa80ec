"""Exception hierarchy shared across the package.

Each class maps to a distinct CLI exit code (see cli.EXIT_CODES).
"""


class QfpVqeError(Exception):
    """Base class for all package errors."""


class InvalidMaskError(QfpVqeError):
    """Pulse-shaper mask coefficient exceeds unit magnitude."""


class DimensionError(QfpVqeError):
    """Conflicting array/window dimensions."""


class TruncationWindowError(QfpVqeError):
    """Simulated frequency window too small for the requested operation."""


class IncompleteMeasurementError(QfpVqeError):
    """Measurement plan does not cover a required bin pair."""


class DivergenceError(QfpVqeError):
    """Optimizer produced a non-finite energy."""


class ConsistencyError(QfpVqeError):
    """Basis/specification mismatch in Hamiltonian construction."""


class SymmetryViolationError(QfpVqeError):
    """Declared symmetry does not commute with the Hamiltonian."""


class NormalizationError(QfpVqeError):
    """State vector is not normalized."""


class MissingEntryError(QfpVqeError):
    """Energy table lacks an entry required by the analysis."""


class ChannelParityError(QfpVqeError):
    """Potential requested at a separation with the wrong staggered parity."""


class FitFailureError(QfpVqeError):
    """Nonlinear fit failed to produce physical parameters."""


class DomainTooSmallError(QfpVqeError):
    """Solver domain has no asymptotically free region."""


class IngestError(QfpVqeError):
    """Malformed or inconsistent matrix/metadata input."""


class OutOfRangeError(QfpVqeError):
    """Kinematic input outside the validity range."""


class ExtrapolationInvalidError(QfpVqeError):
    """Extrapolation would require an unbound (imaginary-momentum) state."""
