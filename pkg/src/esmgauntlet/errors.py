"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line can map failures to
its contract: 2 for usage/configuration problems, 3 for I/O and adapter
problems. Check *failures* are not exceptions; they are data.
"""


class EvalError(Exception):
    exit_code = 2


class ConfigurationError(EvalError):
    pass


class InvalidGridError(ConfigurationError):
    pass


class ValidationError(ConfigurationError):
    """Structurally inconsistent dataset (shapes, dims, NaN in non-maskable data)."""


class MissingVariableError(EvalError):
    pass


class InsufficientDataError(EvalError):
    pass


class UndefinedMeanError(EvalError):
    pass


class DegenerateError(EvalError):
    """Regression or normalization with no information (zero variance, zero median)."""


class DomainError(EvalError):
    pass


class ShapeMismatchError(EvalError):
    pass


class CollationError(EvalError):
    pass


class InstabilityError(EvalError):
    exit_code = 3

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


# -- I/O ---------------------------------------------------------------------

class DataIOError(EvalError):
    exit_code = 3


class FormatError(DataIOError):
    code = "format"


class CorruptionError(DataIOError):
    code = "corruption"


class IntegrityError(DataIOError):
    code = "integrity"


# -- adapters ----------------------------------------------------------------

class AdapterError(EvalError):
    exit_code = 3

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class AdapterInitError(AdapterError):
    pass


class AdapterBrokenError(AdapterError):
    pass
