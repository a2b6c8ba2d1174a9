class ConfigurationError(ValueError):
    """Raised for invalid bounds, malformed config files, or unknown keys."""


class ShapeMismatchError(ValueError):
    """Raised when array arguments disagree in shape."""
