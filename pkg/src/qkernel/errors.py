"""Exception hierarchy shared by every module.

The CLI maps these onto its documented exit codes.
"""


class QKernelError(Exception):
    exit_code = 1


class InvalidInput(QKernelError, ValueError):
    """Argument violates an operation's precondition."""

    exit_code = 3


class CapacityError(QKernelError):
    """Request exceeds what a dense oracle or enumerator will handle."""

    exit_code = 4


class ConfigError(QKernelError, ValueError):
    exit_code = 2


class DataError(QKernelError, ValueError):
    exit_code = 3
