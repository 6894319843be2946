"""Exception hierarchy shared by all modules and the exit codes the CLI maps them to"""

__all__ = 'Error', 'ConfigurationError', 'DataError', 'NumericalError', 'ContractError'


class Error(Exception):
    exit_code = 1


class ConfigurationError(Error):
    """Invalid configuration or specification"""
    exit_code = 2


class ContractError(Error, ValueError):
    """A precondition of an operation was violated by the caller"""
    exit_code = 2


class DataError(Error):
    """The data cannot support the requested operation"""
    exit_code = 3


class NumericalError(Error):
    """A numerical failure (singular systems, non-finite values, divergence)"""
    exit_code = 4
