"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Tensor shapes are incompatible for the requested operation."""


class DomainError(ValueError):
    """Input lies outside the mathematical domain of the operation."""


class ConfigurationError(ValueError):
    """A configured dimension or option violates a structural constraint."""


class FormatError(ValueError):
    """A serialized artifact does not match its declared layout."""


class CompletenessError(FormatError):
    """A semantic bank or description set is missing required cells."""


class ProtocolError(ValueError):
    """A sample label falls outside what the split protocol allows."""
