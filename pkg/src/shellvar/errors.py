"""Exception hierarchy shared by all shellvar modules."""


class ShellvarError(Exception):
    """Base class for every error raised by the package."""


class InvalidGridError(ShellvarError, ValueError):
    pass


class ShapeError(ShellvarError, ValueError):
    pass


class DegenerateSurfaceError(ShellvarError):
    """Raised when |d1 psi ^ d2 psi| vanishes at one or more nodes."""

    def __init__(self, message, nodes=()):
        super().__init__(message)
        self.nodes = [tuple(int(k) for k in n) for n in nodes]


class DegenerateMetricError(ShellvarError):
    pass


class ReferenceDegeneracyError(ShellvarError):
    pass


class NumericDomainError(ShellvarError, ArithmeticError):
    pass


class SpecError(ShellvarError, ValueError):
    """Invalid energy, load, boundary or solver specification."""


class AdmissibilityError(ShellvarError):
    """Configuration outside the admissible set; carries the full report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class SamplingError(ShellvarError):
    pass


class PathError(ShellvarError):
    pass


class UnsupportedSpecError(ShellvarError):
    pass


class ConfigError(ShellvarError, ValueError):
    """Configuration file could not be parsed or validated."""

    def __init__(self, message, path=None):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
