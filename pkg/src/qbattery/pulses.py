"""Drive envelopes, hardware sampling and pulse area.

All frequencies are angular (rad/ns) with hbar = 1, times are in ns.  An
envelope f(t) is dimensionless and bounded by |f| <= 1; the physical drive
is g * f(t) * cos(omega * t).  The rotation angle delivered by a pulse is its
area theta = g * integral of f over the window [0, t_m].
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import AmplitudeExceeded, InvalidParam, TruncationWarning

SQRT_2PI = math.sqrt(2.0 * math.pi)

# slack for amplitudes that land on the bound through rounding
_AMP_EPS = 1e-12


@dataclass(frozen=True)
class DeviceParams:
    """Physical constants of the simulated transmon.

    ``t1_us`` and ``t2_us`` are informational only; no decoherence is
    integrated anywhere in the package.
    """

    delta: float
    g: float
    dt: float
    omega: Optional[float] = None
    t1_us: Optional[float] = None
    t2_us: Optional[float] = None

    def __post_init__(self):
        if self.omega is None:
            object.__setattr__(self, "omega", self.delta)
        if not self.delta > 0:
            raise InvalidParam(f"delta must be > 0, got {self.delta}")
        if not self.g > 0:
            raise InvalidParam(f"g must be > 0, got {self.g}")
        if not self.dt > 0:
            raise InvalidParam(f"dt must be > 0, got {self.dt}")
        if not self.g < self.delta:
            raise InvalidParam(f"weak coupling requires g < delta ({self.g} >= {self.delta})")
        if not self.omega > 0:
            raise InvalidParam(f"omega must be > 0, got {self.omega}")

    @property
    def detuning(self) -> float:
        return self.omega - self.delta

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "omega": self.omega,
            "g": self.g,
            "dt": self.dt,
            "t1_us": self.t1_us,
            "t2_us": self.t2_us,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DeviceParams":
        known = {"delta", "omega", "g", "dt", "t1_us", "t2_us"}
        unknown = set(d) - known
        if unknown:
            raise InvalidParam(f"unknown device fields: {sorted(unknown)}")
        return cls(**d)


#: Single-transmon device used throughout the examples and defaults.
ARMONK = DeviceParams(delta=31.238, omega=31.238, g=0.105, dt=0.222, t1_us=165.0, t2_us=214.0)


_SHAPES = ("gaussian", "square", "lorentzian")


@dataclass(frozen=True)
class Envelope:
    """Analytic drive envelope supported on ``[0, t_m]``.

    Gaussian: ``amp * exp(-(t - center)**2 / (2 sigma**2))``.
    Lorentzian: ``amp / (1 + ((t - center) / gamma)**2)``.
    Square: ``amp`` on ``[start, stop)``, zero elsewhere.
    """

    shape: str
    amp: float
    t_m: float
    center: Optional[float] = None
    sigma: Optional[float] = None
    gamma: Optional[float] = None
    start: Optional[float] = None
    stop: Optional[float] = None

    def __post_init__(self):
        if self.shape not in _SHAPES:
            raise InvalidParam(f"unknown envelope shape {self.shape!r}")
        if not self.t_m > 0:
            raise InvalidParam(f"t_m must be > 0, got {self.t_m}")
        if self.shape == "gaussian":
            if self.sigma is None or not self.sigma > 0:
                raise InvalidParam(f"gaussian needs sigma > 0, got {self.sigma}")
        elif self.shape == "lorentzian":
            if self.gamma is None or not self.gamma > 0:
                raise InvalidParam(f"lorentzian needs gamma > 0, got {self.gamma}")
        else:
            if self.start is None or self.stop is None or not self.stop >= self.start:
                raise InvalidParam("square needs start <= stop")
        if self.shape != "square" and self.center is None:
            object.__setattr__(self, "center", self.t_m / 2.0)
        if not math.isfinite(self.amp):
            raise InvalidParam(f"amplitude must be finite, got {self.amp}")
        if abs(self.amp) > 1.0 + _AMP_EPS:
            raise AmplitudeExceeded(f"envelope peak {abs(self.amp):.6g} exceeds 1")

    @property
    def peak(self) -> float:
        return abs(self.amp)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.shape == "gaussian":
            return self.amp * np.exp(-((t - self.center) ** 2) / (2.0 * self.sigma**2))
        if self.shape == "lorentzian":
            return self.amp / (1.0 + ((t - self.center) / self.gamma) ** 2)
        return np.where((t >= self.start) & (t < self.stop), self.amp, 0.0)

    def scaled(self, factor: float) -> "Envelope":
        return replace(self, amp=self.amp * factor)

    def continuous_area(self, g: float, window: bool = True) -> float:
        """g * integral of f, over [0, t_m] if ``window`` else the whole line."""
        if self.shape == "gaussian":
            if not window:
                return g * self.amp * SQRT_2PI * self.sigma
            s = math.sqrt(2.0) * self.sigma
            lo, hi = (0.0 - self.center) / s, (self.t_m - self.center) / s
            return g * self.amp * self.sigma * math.sqrt(math.pi / 2.0) * (math.erf(hi) - math.erf(lo))
        if self.shape == "lorentzian":
            if not window:
                return g * self.amp * math.pi * self.gamma
            lo, hi = (0.0 - self.center) / self.gamma, (self.t_m - self.center) / self.gamma
            return g * self.amp * self.gamma * (math.atan(hi) - math.atan(lo))
        lo, hi = max(self.start, 0.0), min(self.stop, self.t_m)
        return g * self.amp * max(hi - lo, 0.0)

    def to_dict(self) -> dict:
        d = {"shape": self.shape, "amp": self.amp}
        if self.shape == "gaussian":
            d.update(sigma=self.sigma, center=self.center)
        elif self.shape == "lorentzian":
            d.update(gamma=self.gamma, center=self.center)
        else:
            d.update(start=self.start, stop=self.stop)
        d["t_m"] = self.t_m
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Envelope":
        allowed = {"shape", "amp", "t_m", "center", "sigma", "gamma", "start", "stop"}
        unknown = set(d) - allowed
        if unknown:
            raise InvalidParam(f"unknown envelope fields: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise InvalidParam(str(exc)) from None


@dataclass(frozen=True)
class SampledPulse:
    """Envelope values on the hardware grid, one per period ``dt``."""

    samples: np.ndarray = field(repr=False)
    dt: float
    t_m: float

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        if s.ndim != 1:
            raise InvalidParam("samples must be one-dimensional")
        if s.size and np.max(np.abs(s)) > 1.0 + _AMP_EPS:
            raise AmplitudeExceeded(f"sample magnitude {np.max(np.abs(s)):.6g} exceeds 1")

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        """Time covered by the samples, n * dt (<= t_m)."""
        return self.samples.size * self.dt

    @property
    def times(self) -> np.ndarray:
        return (np.arange(self.samples.size) + 0.5) * self.dt

    def scaled(self, factor: float) -> "SampledPulse":
        return SampledPulse(self.samples * factor, self.dt, self.t_m)


def n_samples(t_m: float, dt: float) -> int:
    # the epsilon keeps exact multiples (t_m = k * dt) from rounding down
    return int(math.floor(t_m / dt + 1e-9))


def make_gaussian_fixed_sigma(theta: float, sigma: float, t_m: float, g: float) -> Envelope:
    """Gaussian of width ``sigma`` whose untruncated area is ``theta``.

    The amplitude follows from theta = g * amp * sqrt(2 pi) * sigma.  Raises
    :class:`AmplitudeExceeded` when that amplitude would exceed one; widen
    ``sigma`` (or ``t_m``) in that case.  A :class:`TruncationWarning` is
    issued for sigma >= t_m / 5, where the window cuts a visible tail.
    """
    if theta < 0:
        raise InvalidParam(f"theta must be >= 0, got {theta}")
    if not sigma > 0:
        raise InvalidParam(f"sigma must be > 0, got {sigma}")
    amp = theta / (SQRT_2PI * g * sigma)
    if amp > 1.0 + _AMP_EPS:
        raise AmplitudeExceeded(
            f"theta={theta:.6g} with sigma={sigma:.6g} ns needs amplitude {amp:.6g} > 1"
        )
    if sigma >= t_m / 5.0:
        warnings.warn(
            f"sigma={sigma:.6g} ns >= t_m/5; window truncation loses area", TruncationWarning, stacklevel=2
        )
    return Envelope("gaussian", amp=min(amp, 1.0), t_m=t_m, sigma=sigma, center=t_m / 2.0)


def make_gaussian_fixed_amp(theta: float, amp: float, t_m: float, g: float) -> Envelope:
    """Gaussian of fixed peak ``amp`` whose width is tuned to give area ``theta``."""
    if not 0.0 < amp <= 1.0:
        raise InvalidParam(f"amplitude must lie in (0, 1], got {amp}")
    if not theta > 0:
        raise InvalidParam(f"theta must be > 0 for a fixed-amplitude pulse, got {theta}")
    sigma = theta / (SQRT_2PI * g * amp)
    return Envelope("gaussian", amp=amp, t_m=t_m, sigma=sigma, center=t_m / 2.0)


def make_calibration_pi(g: float, t_m: float) -> Envelope:
    """Built-in pi pulse: sigma = t_m / 8, peak sqrt(pi/2) / (g sigma)."""
    if not t_m > 0:
        raise InvalidParam(f"t_m must be > 0, got {t_m}")
    sigma = t_m / 8.0
    peak = math.sqrt(math.pi / 2.0) / (g * sigma)
    if peak > 1.0 + _AMP_EPS:
        raise AmplitudeExceeded(f"calibration pulse with t_m={t_m:.6g} ns needs peak {peak:.6g} > 1")
    return Envelope("gaussian", amp=min(peak, 1.0), t_m=t_m, sigma=sigma, center=t_m / 2.0)


def discretize(env: Envelope, dev: DeviceParams) -> SampledPulse:
    """Sample ``env`` at the midpoints (k + 1/2) dt of the hardware grid.

    Only whole periods inside [0, t_m] are emitted, so the pulse has
    floor(t_m / dt) samples.  Values are never clamped.
    """
    n = n_samples(env.t_m, dev.dt)
    t = (np.arange(n) + 0.5) * dev.dt
    f = env(t)
    if n and np.max(np.abs(f)) > 1.0 + _AMP_EPS:
        raise AmplitudeExceeded(f"sampled envelope reaches {np.max(np.abs(f)):.6g} > 1")
    return SampledPulse(f, dev.dt, env.t_m)


def area(pulse: SampledPulse, g: float) -> float:
    """Discrete pulse area g * dt * sum(f_k)."""
    return float(g * pulse.dt * math.fsum(pulse.samples))


def compensate_tail(env: Envelope, theta_target: float, dev: DeviceParams) -> Envelope:
    """Rescale ``env`` so its sampled, truncated area is exactly ``theta_target``.

    Slowly decaying envelopes (Lorentzians in particular) lose a sizeable
    fraction of their area outside the window; this recovers it by raising
    the amplitude, subject to the |f| <= 1 bound.
    """
    if not theta_target > 0:
        raise InvalidParam(f"theta_target must be > 0, got {theta_target}")
    current = area(discretize(env, dev), dev.g)
    if current == 0.0:
        raise InvalidParam("cannot rescale an envelope with zero sampled area")
    factor = theta_target / current
    new_peak = abs(env.amp * factor)
    if new_peak > 1.0 + _AMP_EPS:
        raise AmplitudeExceeded(f"tail compensation needs peak {new_peak:.6g} > 1")
    return env.scaled(factor)
