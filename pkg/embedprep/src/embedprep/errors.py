"""Error taxonomy for the description-to-bank pipeline."""


class FormatError(ValueError):
    """A file or value does not match its declared shape."""


class CompletenessError(FormatError):
    """A required (class, stream, phase, description) cell is absent."""


class ConfigurationError(ValueError):
    """An option names something this tool does not provide."""


class EncoderError(RuntimeError):
    """The embedding backend failed; retrying may succeed.

    ``index`` is the position of the failing string within the batch that
    was being encoded, or None when the backend itself failed to come up.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index
