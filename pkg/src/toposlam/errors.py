"""Exception types shared across the package.

Most data-level failures subclass ValueError so callers that only care
about "bad input" can catch the builtin; the CLI maps the hierarchy onto
exit codes (config -> 2, data -> 3, numerical -> 4).
"""


class ToposlamError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(ToposlamError, ValueError):
    """Malformed or inconsistent experiment/scenario configuration."""


class DataFormatError(ToposlamError, ValueError):
    """A file does not conform to its declared format (bad magic, bad field)."""


class DataCorruptionError(ToposlamError, ValueError):
    """A file is structurally valid but its payload is truncated or inconsistent."""


class EmptyDataError(ToposlamError, ValueError):
    """A file or array declares zero rows or zero dimensions."""


class OrderingError(ToposlamError, ValueError):
    """Record ids are not consecutive from 0."""


class CanonicalizationError(ToposlamError, ValueError):
    """A loop pair violates the canonical i < j ordering."""


class RouteError(ToposlamError, ValueError):
    """A route references an unknown place."""


class ConsistencyError(ToposlamError, ValueError):
    """Cross-referenced structures disagree (e.g. sequence outside traversal)."""


class NumericalError(ToposlamError, RuntimeError):
    """The optimizer could not proceed (singular system after max damping)."""
