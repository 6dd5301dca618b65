"""Exception hierarchy shared by every krflow module."""


class KrflowError(Exception):
    """Base class for all errors raised by krflow."""


class InvalidFlowError(KrflowError, ValueError):
    """The velocity gradient is malformed (not 3x3, not trace-free, ...)."""


class InvalidParameterError(KrflowError, ValueError):
    """A scalar parameter is outside its admissible range."""


class UnsupportedFlowError(KrflowError):
    """The flow class has no deforming-box scheme (defective J3 with nonzero stretch)."""


class NumericError(KrflowError, ArithmeticError):
    """A numerical procedure failed a consistency check."""


class AutomorphismError(KrflowError, ValueError):
    """A candidate lattice automorphism pair fails validation.

    ``reason`` is one of ``not-integer``, ``not-symmetric``, ``not-unimodular``,
    ``not-commuting``, ``nonpositive-spectrum``, ``dependent-log-spectra`` or
    ``invalid-automorphism``.
    """

    def __init__(self, reason, message):
        super().__init__(f"{reason}: {message}")
        self.reason = reason


class ConfigError(KrflowError, ValueError):
    """A simulation configuration is invalid."""


class OverlapError(KrflowError, ArithmeticError):
    """Two particles sit at the same position."""

    def __init__(self, i, j):
        super().__init__(f"particles {i} and {j} overlap (zero separation)")
        self.pair = (i, j)


class DegenerateStateError(KrflowError, ArithmeticError):
    """The peculiar velocity vanishes, so the isokinetic multiplier is undefined."""


class SimulationAbort(KrflowError, RuntimeError):
    """A running simulation hit a fatal condition (explosion, overlap, ...)."""

    def __init__(self, step, message):
        super().__init__(f"step {step}: {message}")
        self.step = step


class UndefinedObservableError(KrflowError, ValueError):
    """An observable is undefined for the given flow (viscosity of a pure rotation)."""


class EmptyWindowError(KrflowError, ValueError):
    """An averaging window holds no samples."""
