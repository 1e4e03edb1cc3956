"""Error taxonomy shared by all modules.

The CLI maps these onto process exit codes: data errors exit 1, config
errors exit 2, numeric failures exit 3.
"""


class PlcAdaptError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class DataError(PlcAdaptError):
    """Malformed or inconsistent input data (audio, features, manifests)."""

    exit_code = 1


class ConfigError(PlcAdaptError):
    """Invalid, mismatched, or unknown configuration."""

    exit_code = 2


class NumericError(PlcAdaptError):
    """Non-finite values or failed numeric sanity checks at runtime."""

    exit_code = 3


class BackendTrainingError(PlcAdaptError):
    """Reference backend failed to reach its quality bar.

    Carries the training report so the failure is inspectable rather
    than silent.
    """

    exit_code = 3

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report or {}
