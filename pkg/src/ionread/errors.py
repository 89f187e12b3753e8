"""Exception types shared across the package."""


class IonReadError(Exception):
    """Base class for every error raised deliberately by this package."""


class DomainError(IonReadError, ValueError):
    """A function was called outside its mathematical or physical domain.

    The message always names the violated constraint so batch drivers can
    surface it verbatim.
    """


class ConfigError(IonReadError, ValueError):
    """A configuration document or CLI argument failed validation."""
