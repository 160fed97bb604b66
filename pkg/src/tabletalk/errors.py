"""Exception taxonomy shared across the package.

Every module raises one of these rather than bare ValueError/RuntimeError so
the CLI can map failures onto stable exit codes.
"""


class TabletalkError(Exception):
    """Base class for all package errors."""


class ConfigurationError(TabletalkError):
    """Invalid user-supplied parameters (bad k, tau <= 0, catalog too small...)."""


class StructuralError(TabletalkError):
    """Malformed data: shape mismatch, out-of-range index, empty input."""


class NumericalError(TabletalkError):
    """Non-finite values where finite ones are required (diverged training...)."""


class DegenerateCorpusError(TabletalkError):
    """Correlation undefined: one of the rank vectors is constant."""


class IncompatibleDataError(TabletalkError):
    """A file exists but its version or schema does not match expectations."""
