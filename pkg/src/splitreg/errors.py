"""Exception hierarchy.

Everything raised on purpose by this package derives from ``SplitRegError``.
The CLI maps ``ValidationError`` to exit code 1 and ``NumericalError`` to 2.
"""


class SplitRegError(Exception):
    pass


class ValidationError(SplitRegError, ValueError):
    """Bad input: schema, config, or data that violates a declared contract."""


class SchemaError(ValidationError):
    pass


class MissingDataError(ValidationError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class PositivityError(ValidationError):
    """A treatment arm is empty, so arm-specific quantities are undefined."""

    def __init__(self, message, arm=None):
        super().__init__(message)
        self.arm = arm


class NumericalError(SplitRegError, ArithmeticError):
    pass


class RankDeficiencyError(NumericalError):
    pass


class SeparationError(NumericalError):
    """Logistic fit diverged because the classes are (quasi-)separable."""


class DegenerateFoldsError(NumericalError):
    pass
