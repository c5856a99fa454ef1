"""Exception hierarchy for the AFDM simulator."""

from typing import Optional


class AfdmError(Exception):
    """Base class for every error raised by the simulator."""


class DimensionError(AfdmError, ValueError):
    """Vector or matrix sizes do not agree."""


class ParameterError(AfdmError, ValueError):
    """A scalar parameter is outside its valid range."""


class FrameTooSmallError(AfdmError, ValueError):
    """The pilot frame does not leave room for data."""

    def __init__(self, inequality: str):
        """
        :param inequality: Human readable form of the violated inequality
        :type inequality: str
        """
        super().__init__(f"frame too small: {inequality} does not hold")
        self.inequality = inequality


class NumericalDegeneracyError(AfdmError, ArithmeticError):
    """A matrix that must be inverted is too ill-conditioned."""

    def __init__(self, what: str, condition_number: float):
        """
        :param what: Name of the matrix
        :type what: str
        :param condition_number: Measured 2-norm condition number
        :type condition_number: float
        """
        super().__init__(f"{what} is numerically degenerate (condition number {condition_number:.3e})")
        self.condition_number = condition_number


class SaturationError(AfdmError, ValueError):
    """The average equalizer gain left the open interval (0, 1)."""


class ConfigError(AfdmError):
    """Invalid or inconsistent simulation configuration."""


class TrialError(AfdmError):
    """A Monte Carlo trial failed; wraps the original error with its context."""

    def __init__(self, trial_index: int, seed: int, cause: Optional[BaseException] = None):
        """
        :param trial_index: Index of the failing trial
        :type trial_index: int
        :param seed: Root seed of the run
        :type seed: int
        :param cause: The underlying exception
        :type cause: Optional[BaseException]
        """
        super().__init__(f"trial {trial_index} (seed {seed}) failed: {cause}")
        self.trial_index = trial_index
        self.seed = seed
