"""Exception hierarchy shared by all modules."""


class QBatteryError(Exception):
    """Base class for model-level failures (CLI exit code 3)."""


class InvalidParam(QBatteryError, ValueError):
    pass


class AmplitudeExceeded(QBatteryError):
    """An envelope would need |f| > 1, which the hardware cannot emit."""


class SubstepTooCoarse(QBatteryError):
    pass


class DegenerateCalibration(QBatteryError):
    pass


class MissingLabel(QBatteryError):
    pass


class InsufficientData(QBatteryError):
    pass


class TruncationWarning(UserWarning):
    """Envelope is wide enough that the window edges cut a noticeable tail."""
