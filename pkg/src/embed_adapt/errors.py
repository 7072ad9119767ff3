"""Exception types mapped to CLI exit codes."""


class EmbedAdaptError(Exception):
    """Base class; exit_code drives the CLI's process status."""

    exit_code = 2


class UsageError(EmbedAdaptError):
    """Bad command line or invalid call arguments."""

    exit_code = 1


class FormatError(EmbedAdaptError):
    """Malformed embedding / container file."""

    exit_code = 2


class DataError(EmbedAdaptError):
    """Inputs are well-formed but unusable (empty intersection, bad dims, ...)."""

    exit_code = 2


class NumericalError(EmbedAdaptError):
    """Numerical failure: divergence, non-finite values, SVD breakdown."""

    exit_code = 3
