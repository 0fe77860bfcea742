# utils/errors.py - Exception hierarchy shared by models and blueprints


class LabError(Exception):
    """Base class for every error raised by the lab"""
    exit_code = 1


class DomainError(LabError, ValueError):
    """Argument outside the domain of an operation"""


class SingularityError(LabError, ArithmeticError):
    """dsigma/dtau diverges at tau = 0 because dalpha/dtau at 0 is non-zero"""

    def __init__(self, tau, dalpha0):
        self.tau = tau
        self.dalpha0 = dalpha0
        super().__init__(
            f'dsigma/dtau diverges at tau={tau} (dalpha/dtau at 0 is {dalpha0:.6g})'
        )


class UnsupportedScheduleError(LabError):
    """Operation not defined for this schedule kind"""


class ConfigError(LabError):
    """Invalid or unknown configuration value"""
    exit_code = 2


class DegenerateInputError(LabError, ValueError):
    """Input that makes an estimate meaningless (zero interval, empty set, ...)"""


class InsufficientRangeError(LabError):
    """Sweep does not span enough range for a regression"""


class BoundViolationError(LabError):
    """Measured error exceeded the proven bound"""
    exit_code = 3


class SamplingError(LabError):
    """Non-finite state produced during sampling"""

    def __init__(self, message, step=None):
        self.step = step
        super().__init__(message if step is None else f'{message} (step {step})')


class TrainingDivergedError(LabError):
    """Loss stayed far above its initial value for too long"""


class CheckpointError(LabError):
    """Checkpoint file missing, truncated or from an unknown version"""
