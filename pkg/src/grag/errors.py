"""Exception types shared across the package."""


class GragError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(GragError):
    """A record or file could not be parsed."""


class DuplicateIdError(GragError):
    """An identifier that must be unique was seen twice."""


class ValidationError(GragError):
    """A value violates a documented invariant."""


class IntegrityError(GragError):
    """A reference points at an entity that does not exist."""


class VersionError(GragError):
    """A persisted file carries an unsupported format version."""


class ConfigError(GragError):
    """A configuration file or object is malformed."""


class DimensionError(GragError):
    """Vector dimensions do not agree."""


class TransportError(GragError):
    """A remote endpoint could not be reached (after retries, if any)."""


class EndpointError(GragError):
    """A remote endpoint answered with a non-success status."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class ContractError(GragError):
    """A pluggable component returned values outside its contract."""


class TemplateError(GragError):
    """A prompt template is missing a required placeholder."""


class GenerationError(GragError):
    """The language model failed to produce an answer.

    Carries the rendered prompt so the caller can retry without
    rebuilding the context.
    """

    def __init__(self, message: str, prompt: str = ""):
        super().__init__(message)
        self.prompt = prompt


class PreconditionError(GragError):
    """An operation was called with inputs it explicitly rejects."""


class DegenerateDataError(GragError):
    """The data admits no meaningful statistic (e.g. zero within-group variance)."""
