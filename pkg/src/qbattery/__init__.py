"""Pulse-level simulation of a classically driven two-level quantum battery.

The pipeline mirrors a single-transmon charging experiment: build a drive
envelope under the |f| <= 1 hardware bound, sample it on the AWG grid,
evolve the qubit (closed-form RWA or exact lab frame), emulate dispersive
readout as IQ-plane shots, and fit the charging curve for the initial state.
"""

from .errors import (
    AmplitudeExceeded,
    DegenerateCalibration,
    InsufficientData,
    InvalidParam,
    MissingLabel,
    QBatteryError,
    SubstepTooCoarse,
    TruncationWarning,
)
from .pulses import ARMONK, DeviceParams, Envelope, SampledPulse

__version__ = "0.1.0"

__all__ = [
    "ARMONK",
    "AmplitudeExceeded",
    "DegenerateCalibration",
    "DeviceParams",
    "Envelope",
    "InsufficientData",
    "InvalidParam",
    "MissingLabel",
    "QBatteryError",
    "SampledPulse",
    "SubstepTooCoarse",
    "TruncationWarning",
]
