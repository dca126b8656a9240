"""Exception hierarchy.

Validation-type failures derive from :class:`ValidationError`; the CLI maps
those to exit status 1 and everything else to 2.
"""


class MarkerHmmError(Exception):
    """Base class for all package errors."""


class ValidationError(MarkerHmmError, ValueError):
    """Input that fails a documented precondition."""


class InvalidInputError(ValidationError):
    pass


class EncodingError(ValidationError):
    """A symbol is outside the alphabet it is encoded against."""

    def __init__(self, message, position=None):
        super().__init__(message)
        self.position = position


class SchemaError(ValidationError):
    """Malformed model configuration."""

    def __init__(self, message, section=None, key=None):
        super().__init__(message)
        self.section = section
        self.key = key


class IngestError(ValidationError):
    pass


class MissingDataError(ValidationError):
    pass


class UnknownMarkerError(MarkerHmmError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown marker"


class CapacityError(MarkerHmmError):
    """Brute-force enumeration would exceed its guard."""


class DecodeError(MarkerHmmError):
    """The observation is impossible under the model at some step."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class TrainingDegeneracyError(MarkerHmmError):
    pass


class EstimationError(MarkerHmmError):
    pass


class DegenerateModelError(EstimationError):
    pass


class EvaluationError(MarkerHmmError):
    pass
