"""Exception types shared across the package."""


class FuzzyMarketError(Exception):
    """Base class for all package errors."""


class InvalidInputError(FuzzyMarketError, ValueError):
    """An argument is non-finite, out of range or otherwise malformed."""


class InvalidWeightsError(InvalidInputError):
    pass


class InvalidDomainError(InvalidInputError):
    pass


class InvalidIndexError(InvalidInputError, IndexError):
    pass


class PreconditionError(FuzzyMarketError):
    """An operation was called on a state it is not defined for."""


class SingularSystemError(FuzzyMarketError, ArithmeticError):
    pass


class ConfigError(InvalidInputError):
    """A configuration field violates a module invariant.

    ``field`` names the offending key so the CLI can report it.
    """

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
