"""Exception types shared across the package."""


class LabError(Exception):
    """Base class for all errors raised by greenlab."""


class ValidationError(LabError, ValueError):
    """Malformed input: bad normal form, measure, Floyd function or config value."""


class CapacityError(LabError):
    """A requested ball would exceed the configured memory cap."""

    def __init__(self, message, count=None):
        super().__init__(message)
        self.count = count


class OutOfBallError(LabError):
    """An element or configuration does not fit inside the ball."""


class GreenDivergenceError(LabError):
    """Neumann increments stopped decaying: the walk looks recurrent."""

    def __init__(self, message, stats=None):
        super().__init__(message)
        self.stats = stats or {}


class PoleError(LabError):
    """Harmonicity was requested at the pole of the kernel."""


class SamplingError(LabError):
    """A sampler could not produce enough valid configurations."""


class AlgebraError(LabError):
    """A cylinder translate is not expressible at the requested depth."""


class RecurrenceSuspectError(LabError):
    """A walk failed to leave a ball within the step cap."""


class NumericError(LabError):
    """Quadrature or fitting did not converge."""


class ConfigError(LabError):
    """Configuration problems, collected with their field paths."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(f"{p}: {m}" for p, m in self.problems))
