"""Exception hierarchy. The CLI turns these into exit codes (see ``sat_defs.ExitCodes``)."""


class SATError(Exception):
    pass


class ConfigurationError(SATError):
    """Bad hyperparameters, shapes that do not conform, or an inconsistent setup."""


class DataError(SATError):
    pass


class LoadError(DataError):
    pass


class SamplingError(DataError):
    pass


class InputError(SATError):
    pass


class DegenerateInputError(InputError):
    """Empty token lists, zero-norm vectors and similar inputs with no defined result."""


class CriterionError(DegenerateInputError):
    pass


class UsageError(SATError):
    pass


class AugmentationError(SATError):
    pass


class NumericError(SATError):
    """A recorded operation produced NaN or Inf."""
