"""Exception types raised across the package."""


class ValidationError(ValueError):
    """Input violates a documented precondition."""


class ParseError(ValidationError):
    """A CSV row could not be parsed.

    Attributes:
        line: 1-based line number of the offending row.
    """

    def __init__(self, message: str, line: int) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


class FormatError(ValueError):
    """A binary file is corrupt, truncated or of the wrong kind."""


class ShapeError(ValueError):
    """Tensor shapes are incompatible (for example a checkpoint built for another graph)."""


class UndefinedMetricError(ValueError):
    """A metric is undefined for the given labels (e.g. AUC with a single class)."""
