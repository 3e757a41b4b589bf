"""Exception hierarchy. Each class maps to a CLI exit code."""


class LeadDriftError(Exception):
    exit_code = 1


class ConfigError(LeadDriftError, ValueError):
    exit_code = 2


class DataError(LeadDriftError, ValueError):
    exit_code = 3


class TrainingError(LeadDriftError, RuntimeError):
    exit_code = 4

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class TuningError(DataError):
    pass
