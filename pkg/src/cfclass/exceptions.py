"""Exception hierarchy shared across the package."""


class CfclassError(Exception):
    """Base class for all package errors."""


class SchemaError(CfclassError, ValueError):
    """A required column is missing or a config document is malformed."""


class DataParseError(CfclassError, ValueError):
    """A data file contains a token that cannot be parsed."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class SeparationError(CfclassError, ValueError):
    """An unregularized logistic fit has no finite maximizer."""


class DegenerateFoldError(CfclassError, ValueError):
    """A fold complement is too poor to train a nuisance learner on."""

    def __init__(self, message, fold=None):
        super().__init__(message)
        self.fold = fold


class ConvergenceError(CfclassError, RuntimeError):
    """The solver did not reach a KKT point within tolerance."""


class InferenceError(CfclassError, RuntimeError):
    """The bordered KKT system is singular or the solution is unusable."""
