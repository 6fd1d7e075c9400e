from typing import Any, Optional


class UlrsError(Exception):
    """
    Base class for every failure raised by the toolkit.

    Keyword arguments are kept in `details` so callers (and the CLI) can log
    the failure with its numeric context instead of parsing the message.
    """

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.message = message
        self.details: dict[str, Any] = details

    def __str__(self) -> str:
        if not self.details:
            return self.message
        extra = ", ".join(f"{k}={v}" for k, v in self.details.items())
        return f"{self.message} ({extra})"


class DimensionError(UlrsError):
    """Shapes of signals, dictionaries, frames or labels do not agree."""


class RankError(UlrsError):
    """A linear system the operation needs to invert is rank deficient."""


class SolverError(UlrsError):
    """An iterative or greedy solver could not produce a valid answer."""

    def __init__(
        self,
        message: str,
        last_objective: Optional[float] = None,
        **details: Any,
    ) -> None:
        super().__init__(message, last_objective=last_objective, **details)
        self.last_objective = last_objective


class BudgetError(UlrsError):
    """The exhaustive search would enumerate too many supports."""


class CalibrationError(UlrsError):
    """A decision was requested before the threshold constant was set."""


class DomainError(UlrsError):
    """An argument lies outside the mathematical domain of the operation."""


class DataError(UlrsError):
    """Input data is degenerate or an artefact file is malformed."""


class WavFormatError(DataError):
    """A WAV file violates the 16-bit mono 8 kHz PCM contract."""
