"""Exception hierarchy.

Two branches matter to callers: :class:`ValidationError` (bad inputs,
schemas, flags -- CLI exit code 1) and :class:`NumericError` (a fit or a
search failed on otherwise valid data -- CLI exit code 2).
"""


class SurvnieError(Exception):
    """Base class for all package errors."""


class ValidationError(SurvnieError):
    """Invalid input: schema, domain, or configuration problems."""


class SchemaError(ValidationError):
    """A required column is missing or the column mapping is inconsistent."""


class ParseError(ValidationError):
    """A cell could not be parsed; carries row/column context in the message."""


class DomainError(ValidationError):
    """A value is outside its legal domain (e.g. non-positive raw time under log)."""


class PositivityError(ValidationError):
    """An exposure arm is empty where both are required."""


class IndexError_(ValidationError):
    """A mediator label or index is out of range."""


class NumericError(SurvnieError):
    """A numerical procedure failed to produce a usable result."""

    def __init__(self, message, mediator=None):
        super().__init__(message)
        self.mediator = mediator


class CollinearityError(NumericError):
    """Degenerate design: the slope for a mediator is not identified."""


class DegenerateVarianceError(NumericError):
    """A step influence standard deviation collapsed below tolerance."""


class CalibrationError(NumericError):
    """Censoring-rate calibration failed to bracket the target."""
