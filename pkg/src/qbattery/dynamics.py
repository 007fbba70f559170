"""Two-level dynamics under the driven battery Hamiltonian.

    H(t) = delta/2 (1 - sigma_z) + g f(t) cos(omega t) sigma_x

``|0>`` is the ground state (sigma_z |0> = |0>), so the stored energy is
``delta * P1``.  Two engines are provided: the closed-form rotating-wave
solution, which depends on the pulse only through its area, and a
lab-frame integrator that multiplies exact 2x2 exponentials of the
Hamiltonian frozen at each substep midpoint.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParam, SubstepTooCoarse
from .pulses import DeviceParams, SampledPulse, area

NORM_TOL = 1e-10

# largest phase any Hamiltonian term may accumulate over one substep
MAX_PHASE_PER_SUBSTEP = 0.05

_CHUNK = 256  # hardware samples per vectorized block in exact_evolve


def wrap_phase(phi: float) -> float:
    """Map an angle to the principal branch (-pi, pi]."""
    w = math.remainder(phi, 2.0 * math.pi)
    return math.pi if w == -math.pi else w


@dataclass(frozen=True)
class QubitState:
    alpha: complex
    beta: complex

    def __post_init__(self):
        n = abs(self.alpha) ** 2 + abs(self.beta) ** 2
        if abs(n - 1.0) > NORM_TOL:
            raise InvalidParam(f"state not normalized: |alpha|^2 + |beta|^2 = {n!r}")

    @classmethod
    def from_vector(cls, v) -> "QubitState":
        return cls(complex(v[0]), complex(v[1]))

    def as_vector(self) -> np.ndarray:
        return np.array([self.alpha, self.beta], dtype=complex)


GROUND = QubitState(1.0 + 0j, 0j)
EXCITED = QubitState(0j, 1.0 + 0j)


@dataclass(frozen=True)
class InitParams:
    """Initial state parameters: alpha = sqrt(a), beta = sqrt(1 - a) exp(-i phi)."""

    a: float
    phi: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.a <= 1.0:
            raise InvalidParam(f"a must lie in [0, 1], got {self.a}")
        if not math.isfinite(self.phi):
            raise InvalidParam(f"phi must be finite, got {self.phi}")
        object.__setattr__(self, "phi", wrap_phase(self.phi))


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray = field(repr=False)  # shape (n, 2), complex
    p1: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not (len(self.times) == len(self.states) == len(self.p1)):
            raise InvalidParam("trajectory arrays differ in length")

    @property
    def final(self) -> QubitState:
        return QubitState.from_vector(self.states[-1])

    def norm_drift(self) -> float:
        norms = np.sum(np.abs(self.states) ** 2, axis=1)
        return float(np.max(np.abs(norms - 1.0)))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            write_trajectory_csv(self, fh)


def write_trajectory_csv(traj: Trajectory, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t_ns", "re_alpha", "im_alpha", "re_beta", "im_beta", "p1"])
    for t, (al, be), p in zip(traj.times, traj.states, traj.p1):
        w.writerow([_fmt(t), _fmt(al.real), _fmt(al.imag), _fmt(be.real), _fmt(be.imag), _fmt(p)])


def _fmt(x) -> str:
    return format(float(x), ".17g")


def state_from_params(p: InitParams) -> QubitState:
    return QubitState(complex(math.sqrt(p.a)), math.sqrt(1.0 - p.a) * complex(math.cos(p.phi), -math.sin(p.phi)))


def params_from_state(s: QubitState) -> InitParams:
    """Inverse of :func:`state_from_params`, discarding the global phase."""
    a = min(max(abs(s.alpha) ** 2, 0.0), 1.0)
    if abs(s.beta) < 1e-15 or abs(s.alpha) < 1e-15:
        return InitParams(a, 0.0)
    return InitParams(a, wrap_phase(np.angle(s.alpha) - np.angle(s.beta)))


def p1(s: QubitState) -> float:
    return float(abs(s.beta) ** 2)


def rwa_final_state(p: InitParams, theta: float, varphi: float = 0.0) -> QubitState:
    """Closed-form RWA state after a resonant pulse of area ``theta``.

    ``varphi`` is the frame phase delta * t_m / 2 picked up when returning
    from the rotating frame; it only multiplies each amplitude by a phase.
    """
    s0 = state_from_params(p)
    c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
    alpha = complex(math.cos(varphi), math.sin(varphi)) * (s0.alpha * c - 1j * s0.beta * s)
    beta = complex(math.cos(varphi), -math.sin(varphi)) * (s0.beta * c - 1j * s0.alpha * s)
    return QubitState(alpha, beta)


def frame_phase(delta: float, t_m: float) -> float:
    return delta * t_m / 2.0


def stored_energy(p: InitParams, theta, delta: float = 1.0):
    """Energy after a pulse of area ``theta``; with ``delta=1`` this is E/delta = P1."""
    if not delta > 0:
        raise InvalidParam(f"delta must be > 0, got {delta}")
    theta = np.asarray(theta, dtype=float)
    s, c = np.sin(theta / 2.0), np.cos(theta / 2.0)
    a = p.a
    e = a * s**2 + 2.0 * math.sqrt(a) * math.sqrt(1.0 - a) * math.sin(p.phi) * s * c + (1.0 - a) * c**2
    e = np.clip(e, 0.0, 1.0) * delta
    return float(e) if e.ndim == 0 else e


def auto_substeps(dev: DeviceParams) -> int:
    """Smallest substep count per hardware sample meeting the phase bound."""
    rate = max(dev.delta, dev.omega, dev.g)
    return max(1, math.ceil(rate * dev.dt / MAX_PHASE_PER_SUBSTEP - 1e-12))


def check_substeps(dev: DeviceParams, substeps: int) -> None:
    if substeps < 1:
        raise SubstepTooCoarse(f"substeps must be >= 1, got {substeps}")
    rate = max(dev.delta, dev.omega, dev.g)
    phase = rate * dev.dt / substeps
    if phase > MAX_PHASE_PER_SUBSTEP + 1e-12:
        raise SubstepTooCoarse(
            f"{substeps} substeps give {phase:.4g} rad per substep "
            f"(limit {MAX_PHASE_PER_SUBSTEP}); use at least {auto_substeps(dev)}"
        )


def _substep_unitaries(f, k0, dev, substeps):
    """Exact exponentials for substeps of samples k0..k0+len(f)-1.

    Returns an array of shape (len(f), substeps, 2, 2).
    """
    h = dev.dt / substeps
    k = k0 + np.arange(f.size)[:, None]
    t_mid = k * dev.dt + (np.arange(substeps)[None, :] + 0.5) * h
    cx = dev.g * f[:, None] * np.cos(dev.omega * t_mid)
    cz = -0.5 * dev.delta
    r = np.sqrt(cx * cx + cz * cz)
    cos_rh = np.cos(r * h)
    sinc = np.sin(r * h) / r
    glob = np.exp(-0.5j * dev.delta * h)  # identity part delta/2
    u = np.empty(cx.shape + (2, 2), dtype=complex)
    u[..., 0, 0] = glob * (cos_rh - 1j * sinc * cz)
    u[..., 1, 1] = glob * (cos_rh + 1j * sinc * cz)
    u[..., 0, 1] = glob * (-1j * sinc * cx)
    u[..., 1, 0] = u[..., 0, 1]
    return u


def _ordered_product(u):
    """Time-ordered product along axis -3: u[m-1] @ ... @ u[1] @ u[0]."""
    while u.shape[-3] > 1:
        m = u.shape[-3]
        even = u[..., 0 : m - 1 : 2, :, :]
        odd = u[..., 1:m:2, :, :]
        paired = np.matmul(odd, even)
        if m % 2:
            paired = np.concatenate([paired, u[..., m - 1 : m, :, :]], axis=-3)
        u = paired
    return u[..., 0, :, :]


def sample_propagators(pulse: SampledPulse, dev: DeviceParams, substeps: int | None = None) -> np.ndarray:
    """One lab-frame propagator per hardware sample, shape (n, 2, 2)."""
    if substeps is None:
        substeps = auto_substeps(dev)
    check_substeps(dev, substeps)
    f = pulse.samples
    out = np.empty((f.size, 2, 2), dtype=complex)
    for k0 in range(0, f.size, _CHUNK):
        block = f[k0 : k0 + _CHUNK]
        out[k0 : k0 + block.size] = _ordered_product(_substep_unitaries(block, k0, dev, substeps))
    return out


def total_propagator(pulse: SampledPulse, dev: DeviceParams, substeps: int | None = None) -> np.ndarray:
    props = sample_propagators(pulse, dev, substeps)
    if props.shape[0] == 0:
        return np.eye(2, dtype=complex)
    return _ordered_product(props)


def exact_evolve(
    pulse: SampledPulse, dev: DeviceParams, s0: QubitState, substeps: int | None = None
) -> Trajectory:
    """Integrate the lab-frame Schroedinger equation without the RWA.

    ``substeps`` per hardware sample defaults to the smallest count keeping
    max(delta, omega, g) * dt / substeps <= 0.05 rad.  The returned
    trajectory holds the state at every sample boundary, t = 0 .. n * dt.
    """
    if pulse.dt != dev.dt:
        raise InvalidParam(f"pulse sampled at dt={pulse.dt}, device has dt={dev.dt}")
    props = sample_propagators(pulse, dev, substeps)
    n = props.shape[0]
    states = np.empty((n + 1, 2), dtype=complex)
    states[0] = s0.as_vector()
    psi = states[0]
    for k in range(n):
        psi = props[k] @ psi
        states[k + 1] = psi
    times = np.arange(n + 1) * dev.dt
    return Trajectory(times, states, np.abs(states[:, 1]) ** 2)


def rwa_deviation(pulse: SampledPulse, dev: DeviceParams, s0: QubitState, substeps: int | None = None) -> float:
    """|P1_exact - P1_rwa| at the end of the pulse, RWA evaluated at the discrete area."""
    traj = exact_evolve(pulse, dev, s0, substeps)
    theta = area(pulse, dev.g)
    p_rwa = p1(rwa_final_state(params_from_state(s0), theta, frame_phase(dev.delta, pulse.duration)))
    return abs(float(traj.p1[-1]) - p_rwa)
