"""Exception types shared across the toolkit."""


class GlareError(Exception):
    """Base class for all toolkit errors."""


class InvalidArgumentError(GlareError, ValueError):
    """A caller-supplied value violates an operation's preconditions."""


class ImageFormatError(GlareError):
    """An image file could not be decoded; the message names the byte offset."""


class LabelFileError(GlareError):
    """A label list failed validation (empty, duplicate entries, ...)."""


class ReportSchemaError(GlareError):
    """A run report has an unknown schema version or malformed structure."""


class TransportError(GlareError):
    """A remote provider call failed at the network level after retries."""


class ProtocolError(GlareError):
    """A remote provider returned a malformed or inconsistent response."""


class NumericalError(GlareError):
    """The optimizer hit an unrecoverable numerical condition."""


class EvaluationFaultError(GlareError):
    """Too many candidate evaluations faulted within a single iteration."""
