"""Exception types shared across the package."""


class DualDstError(Exception):
    """Base class for all categorized errors raised by this package."""

    category = "error"


class ParseError(DualDstError):
    """A data file is structurally malformed."""

    category = "parse"


class SchemaError(DualDstError):
    """The slot schema is inconsistent or an annotation references an unknown slot."""

    category = "schema"


class ConfigurationError(DualDstError):
    """A configuration value makes the requested operation impossible."""

    category = "configuration"


class CompatibilityError(DualDstError):
    """A checkpoint does not match the vocabulary or schema it is used with."""

    category = "compatibility"


class AlignmentError(DualDstError):
    """Prediction and gold state sets do not cover the same (dialogue, turn) keys."""

    category = "alignment"


class ProjectionError(DualDstError):
    """A character span cannot be mapped onto token boundaries."""

    category = "projection"


class DecodeError(DualDstError):
    """Decoding was asked to produce a distribution over an empty candidate set."""

    category = "decode"


class TrainingError(DualDstError):
    """Training aborted; carries step-level diagnostics."""

    category = "training"

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
