"""Exception types shared across the package.

Argument errors (bad values passed by a caller) use the built-in ValueError;
everything that can surface from files, configs, or long-running jobs gets a
named type so the CLI can map it to a stable exit code.
"""


class PatchSpanError(Exception):
    """Base class for contract violations raised by this package."""


class FormatError(PatchSpanError):
    """A file on disk does not match its documented format."""


class ManifestError(FormatError):
    """A manifest line is malformed; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"manifest line {line_no}: {message}")
        self.line_no = line_no


class ConfigError(PatchSpanError):
    """A configuration is internally inconsistent or unsupported."""


class TrainingError(PatchSpanError):
    """Training aborted (e.g. non-finite gradients)."""


class GenerationError(PatchSpanError):
    """Synthetic data generation could not satisfy its constraints."""
