"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or inconsistent scenario description."""


class FitError(RuntimeError):
    """A coincidence peak could not be located or fitted."""
