"""Exception hierarchy shared by every module of the package."""


class LowMachError(Exception):
    """Base class for all errors raised by :mod:`lowmach`."""


class DimensionError(LowMachError, ValueError):
    """Array shape or dimension does not match the grid."""


class GridMismatchError(LowMachError, ValueError):
    """Operands live on different grids."""


class SingularSymbolError(LowMachError, ValueError):
    """A Fourier symbol is undefined at a resolved nonzero frequency."""


class ZeroModeError(LowMachError, ValueError):
    """An operation that requires mean-free input received a field with a mean."""


class DomainError(LowMachError, ValueError):
    """Arguments outside the domain of an operation (empty trajectory, bad exponents...)."""


class RangeError(LowMachError, ValueError):
    """Physical values leave the interval on which a composition is defined."""


class LatticeError(LowMachError, ValueError):
    """A rescaling does not map the frequency lattice onto a resolvable lattice."""


class BlowUpError(LowMachError, RuntimeError):
    """The density 1 + eps*a lost positivity during time stepping."""

    def __init__(self, message, t=None, max_eps_a=None):
        super().__init__(message)
        self.t = t
        self.max_eps_a = max_eps_a


class ProjectionError(LowMachError, RuntimeError):
    """Divergence of an incompressible field drifted above tolerance."""


class InsufficientSignalError(LowMachError, ValueError):
    """Norm values are too small to fit a rate."""


class SpecError(LowMachError, ValueError):
    """A data or sweep specification cannot be realized."""


class PartialResultsError(LowMachError, RuntimeError):
    """A sweep stopped before all runs completed."""

    def __init__(self, message, completed=()):
        super().__init__(message)
        self.completed = list(completed)


class ConfigError(LowMachError, ValueError):
    """A run configuration failed validation; ``field`` names the offending key."""

    def __init__(self, message, field=None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field
