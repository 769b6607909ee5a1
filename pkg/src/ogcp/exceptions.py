"""Exception types shared across the package.

The CLI maps these onto exit codes: DataError -> 3, DivergenceError -> 4.
"""


class OgcpError(Exception):
    """Base class for all package errors."""


class DataError(OgcpError):
    """Invalid tensor data, file contents, or domain violations."""


class SamplingError(DataError):
    """Stratified sampling could not produce the requested draws."""


class DivergenceError(OgcpError):
    """A solver produced a non-finite objective."""
