"""Error types shared across the package.

Every error raised on a user-facing path carries a short, one-line message so
the CLI can print it verbatim and exit nonzero.
"""


class HsnliError(Exception):
    """Base class for all package errors."""


class DataFormatError(HsnliError):
    """A file or record does not match its declared format."""


class ManifestMismatchError(HsnliError):
    """A dataset failed validation against its manifest in strict mode."""


class MissingTranslationError(HsnliError):
    """A hypothesis has no text in the requested language."""

    def __init__(self, slot: str, language: str):
        self.slot = slot
        self.language = language
        super().__init__(f"no translation for hypothesis '{slot}' in language '{language}'")


class ConfigError(HsnliError):
    """An invalid configuration value or combination."""


class BackendError(HsnliError):
    """An inference backend could not be constructed or produced bad output."""


class GridError(HsnliError):
    """The evaluation grid could not be run as specified."""
