"""Exception types raised across the package."""


class ErpbviError(Exception):
    pass


class ValidationError(ErpbviError, ValueError):
    """A model, belief or configuration violates an invariant."""


class ConfigError(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class ZeroLikelihood(ErpbviError):
    """The observation is impossible under the current belief and action."""


class LpFailure(ErpbviError):
    """The pruning linear program could not be solved."""


class ParseError(ErpbviError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyDataset(ErpbviError, ValueError):
    pass
