"""Exception hierarchy shared across the package."""


class GenRankError(Exception):
    """Base class for every error raised by genrank."""


class DimensionError(GenRankError, ValueError):
    pass


class EmptySequenceError(GenRankError, ValueError):
    pass


class ContractError(GenRankError, ValueError):
    pass


class SingularityError(ContractError):
    pass


class DataError(GenRankError):
    """Malformed or inconsistent input data (files, ids, missing docs)."""


class NumericError(GenRankError, ArithmeticError):
    """Non-finite values encountered during training or scoring."""


class DegenerateTestError(ContractError):
    pass


class UndefinedCorrelationError(ContractError):
    pass


class ConfigError(GenRankError, ValueError):
    """Invalid experiment configuration or command-line usage."""
