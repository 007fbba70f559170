"""Charging-curve experiments: preparation, theta sweeps and aggregation."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import dynamics
from .dynamics import InitParams, QubitState
from .errors import InvalidParam, QBatteryError
from .pulses import (
    DeviceParams,
    Envelope,
    SampledPulse,
    area,
    compensate_tail,
    discretize,
    make_calibration_pi,
    make_gaussian_fixed_amp,
    make_gaussian_fixed_sigma,
)
from .readout import Discriminator, ReadoutModel, calibrate, estimate_p1, make_rng, sample_shots

DEFAULT_SHOTS = 1024
DEFAULT_REPS = 20
DEFAULT_TM = 600.0
DEFAULT_GRID = np.linspace(0.0, 3.3, 34)

ENGINES = ("rwa", "exact")

_SQRT_HALF = 1.0 / math.sqrt(2.0)
GATE_U = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) * _SQRT_HALF
GATE_V = np.array([[1.0, 1j], [-1j, -1.0]], dtype=complex) * _SQRT_HALF

_PREP_KINDS = ("ground", "gate_u", "gate_v", "custom")


@dataclass(frozen=True)
class PrepSpec:
    """Initial-state preparation, optionally with imperfections.

    ``a_error`` is the std of a Gaussian kick on ``a`` (clipped to [0, 1]),
    ``phi_jitter_std`` the std of a Gaussian kick on ``phi``.  Kicks are
    drawn once per repetition unless ``per_shot`` is set.
    """

    kind: str = "ground"
    a: float | None = None
    phi: float | None = None
    a_error: float = 0.0
    phi_jitter_std: float = 0.0
    per_shot: bool = False

    def __post_init__(self):
        if self.kind not in _PREP_KINDS:
            raise InvalidParam(f"unknown preparation {self.kind!r}")
        if self.kind == "custom":
            if self.a is None or self.phi is None:
                raise InvalidParam("custom preparation needs a and phi")
            InitParams(self.a, self.phi)
        if self.a_error < 0 or self.phi_jitter_std < 0:
            raise InvalidParam("noise magnitudes must be non-negative")

    @property
    def noisy(self) -> bool:
        return self.a_error > 0 or self.phi_jitter_std > 0

    def nominal(self) -> InitParams:
        if self.kind == "ground":
            return InitParams(1.0, 0.0)
        if self.kind == "custom":
            return InitParams(self.a, self.phi)
        gate = GATE_U if self.kind == "gate_u" else GATE_V
        return dynamics.params_from_state(QubitState.from_vector(gate @ np.array([1.0, 0.0])))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "a": self.a,
            "phi": self.phi,
            "a_error": self.a_error,
            "phi_jitter_std": self.phi_jitter_std,
            "per_shot": self.per_shot,
        }


@dataclass(frozen=True)
class PulseMode:
    """How a target area is turned into an envelope.

    ``fixed_sigma``: Gaussian of width ``value`` (None means t_m / 8).
    ``fixed_amp``: Gaussian of peak ``value`` with tuned width.
    ``lorentzian``: Lorentzian of half-width ``value``, tail-compensated.
    """

    kind: str = "fixed_sigma"
    value: float | None = None

    def __post_init__(self):
        if self.kind not in ("fixed_sigma", "fixed_amp", "lorentzian"):
            raise InvalidParam(f"unknown pulse mode {self.kind!r}")
        if self.kind != "fixed_sigma" and self.value is None:
            raise InvalidParam(f"pulse mode {self.kind} needs a value")

    def label(self) -> str:
        return f"{self.kind}:{self.value if self.value is not None else 'tm/8'}"


@dataclass(frozen=True)
class SweepSpec:
    theta_grid: tuple = tuple(DEFAULT_GRID.tolist())
    reps: int = DEFAULT_REPS
    shots: int = DEFAULT_SHOTS
    pulse_mode: PulseMode = PulseMode()
    t_m: float = DEFAULT_TM
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "theta_grid", tuple(float(t) for t in self.theta_grid))
        if not self.theta_grid:
            raise InvalidParam("theta grid is empty")
        if min(self.theta_grid) < 0:
            raise InvalidParam("theta values must be >= 0")
        if self.reps < 1 or self.shots < 1:
            raise InvalidParam("reps and shots must be >= 1")
        if not self.t_m > 0:
            raise InvalidParam("t_m must be > 0")


@dataclass
class ChargingCurve:
    """Per-theta P1 estimates, one row of ``p1`` per theta and one column per repetition."""

    theta: np.ndarray
    p1: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.p1 = np.atleast_2d(np.asarray(self.p1, dtype=float))
        if self.p1.shape[0] != self.theta.size:
            raise InvalidParam("p1 rows must match theta grid")

    @property
    def reps(self) -> int:
        return self.p1.shape[1]

    @property
    def mean_p1(self) -> np.ndarray:
        return self.p1.mean(axis=1)

    @property
    def stderr_p1(self) -> np.ndarray:
        if self.reps < 2:
            return np.zeros(self.theta.size)
        return self.p1.std(axis=1, ddof=1) / math.sqrt(self.reps)

    def long_rows(self):
        for i, th in enumerate(self.theta):
            for r in range(self.reps):
                yield th, r, self.p1[i, r]

    def write_long_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta", "rep", "p1"])
        for th, r, p in self.long_rows():
            w.writerow([_fmt(th), r, _fmt(p)])

    def write_summary_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta", "mean_p1", "stderr_p1"])
        for th, m, s in zip(self.theta, self.mean_p1, self.stderr_p1):
            w.writerow([_fmt(th), _fmt(m), _fmt(s)])

    def sidecar_json(self) -> str:
        return json.dumps(self.metadata, indent=2, sort_keys=True)

    @classmethod
    def read_long_csv(cls, fh, metadata: dict | None = None) -> "ChargingCurve":
        """Parse long-form ``theta,rep,p1`` rows; errors name the offending line."""
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["theta", "rep", "p1"]:
            raise CurveParseError(1, f"expected header theta,rep,p1, got {header}")
        rows: dict[float, dict[int, float]] = {}
        order: list[float] = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise CurveParseError(lineno, f"expected 3 fields, got {len(row)}")
            try:
                th, rep, p = float(row[0]), int(row[1]), float(row[2])
            except ValueError as exc:
                raise CurveParseError(lineno, str(exc)) from None
            if not (math.isfinite(th) and math.isfinite(p)) or not 0.0 <= p <= 1.0 or rep < 0:
                raise CurveParseError(lineno, f"value out of range: {row}")
            if th not in rows:
                rows[th] = {}
                order.append(th)
            if rep in rows[th]:
                raise CurveParseError(lineno, f"duplicate rep {rep} for theta {th}")
            rows[th][rep] = p
        if not order:
            raise CurveParseError(2, "no data rows")
        nrep = {len(v) for v in rows.values()}
        if len(nrep) != 1:
            raise CurveParseError(0, "unequal repetition counts across theta")
        p1 = np.array([[rows[th][r] for r in sorted(rows[th])] for th in order])
        return cls(np.array(order), p1, dict(metadata or {}))


class CurveParseError(QBatteryError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


class SweepError(QBatteryError):
    """One or more grid points could not be run; ``failures`` maps theta to the error."""

    def __init__(self, failures: dict):
        lines = ", ".join(f"theta={th:.6g}: {exc}" for th, exc in failures.items())
        super().__init__(f"{len(failures)} grid point(s) failed: {lines}")
        self.failures = failures


def _fmt(x) -> str:
    return format(float(x), ".17g")


def perturb(nominal: InitParams, spec: PrepSpec, rng: np.random.Generator, size=None):
    """Draw imperfect (a, phi) around ``nominal``; returns arrays of ``size``."""
    a = nominal.a + (rng.standard_normal(size) * spec.a_error if spec.a_error > 0 else np.zeros(size))
    phi = nominal.phi + (rng.standard_normal(size) * spec.phi_jitter_std if spec.phi_jitter_std > 0 else np.zeros(size))
    return np.clip(a, 0.0, 1.0), phi


def prepare_initial(spec: PrepSpec, seed: int) -> tuple[QubitState, InitParams]:
    """Initial state for one repetition and the nominal parameters it approximates.

    Without noise the state is exact: |0>, U|0>, V|0> or the custom (a, phi).
    """
    nominal = spec.nominal()
    if spec.kind in ("gate_u", "gate_v") and not spec.noisy:
        gate = GATE_U if spec.kind == "gate_u" else GATE_V
        return QubitState.from_vector(gate @ np.array([1.0, 0.0])), nominal
    if not spec.noisy:
        return dynamics.state_from_params(nominal), nominal
    a, phi = perturb(nominal, spec, make_rng(seed, 0))
    return dynamics.state_from_params(InitParams(float(a), float(phi))), nominal


def build_envelope(theta: float, mode: PulseMode, t_m: float, dev: DeviceParams) -> Envelope:
    if mode.kind == "fixed_sigma":
        sigma = t_m / 8.0 if mode.value is None else mode.value
        return make_gaussian_fixed_sigma(theta, sigma, t_m, dev.g)
    if theta == 0.0:
        return Envelope("gaussian", amp=0.0, t_m=t_m, sigma=1.0)
    if mode.kind == "fixed_amp":
        return make_gaussian_fixed_amp(theta, mode.value, t_m, dev.g)
    # lorentzian: analytic amplitude first, then recover the truncated tail
    amp = theta / (dev.g * math.pi * mode.value)
    return compensate_tail(Envelope("lorentzian", amp=amp, t_m=t_m, gamma=mode.value), theta, dev)


def build_pulse(theta: float, mode: PulseMode, t_m: float, dev: DeviceParams) -> SampledPulse:
    return discretize(build_envelope(theta, mode, t_m, dev), dev)


class _Evolver:
    """Maps initial states to P1 after a fixed pulse."""

    def __init__(self, pulse: SampledPulse, dev: DeviceParams, engine: str, substeps=None):
        if engine not in ENGINES:
            raise InvalidParam(f"unknown engine {engine!r}")
        self.engine = engine
        self.theta = area(pulse, dev.g)
        self.varphi = dynamics.frame_phase(dev.delta, pulse.duration)
        if engine == "exact":
            self.u = dynamics.total_propagator(pulse, dev, substeps)
        else:
            c, s = math.cos(self.theta / 2.0), math.sin(self.theta / 2.0)
            self.u = np.array([[c, -1j * s], [-1j * s, c]])

    def p1_state(self, state: QubitState) -> float:
        if self.engine == "rwa":
            return dynamics.p1(dynamics.rwa_final_state(dynamics.params_from_state(state), self.theta, self.varphi))
        return float(abs((self.u @ state.as_vector())[1]) ** 2)

    def p1_params(self, a, phi) -> np.ndarray:
        """Vectorized P1 for arrays of (a, phi)."""
        a = np.asarray(a, dtype=float)
        phi = np.asarray(phi, dtype=float)
        psi = np.stack([np.sqrt(a) + 0j, np.sqrt(1.0 - a) * np.exp(-1j * phi)])
        return np.clip(np.abs(self.u[1, 0] * psi[0] + self.u[1, 1] * psi[1]) ** 2, 0.0, 1.0)


def _rep_seed(seed: int, i_theta: int, rep: int) -> int:
    ss = np.random.SeedSequence([int(seed), int(i_theta), int(rep)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _one_rep(evolver: _Evolver, spec: PrepSpec, sweep: SweepSpec, model: ReadoutModel, d: Discriminator, seed: int):
    if spec.noisy and spec.per_shot:
        a, phi = perturb(spec.nominal(), spec, make_rng(seed, 0), size=sweep.shots)
        p = evolver.p1_params(a, phi)
    else:
        state, _ = prepare_initial(spec, seed)
        p = min(max(evolver.p1_state(state), 0.0), 1.0)
    return estimate_p1(d, sample_shots(p, sweep.shots, model, seed, stream=1))


def run_point(
    theta: float,
    spec: PrepSpec,
    sweep: SweepSpec,
    dev: DeviceParams,
    model: ReadoutModel,
    engine: str,
    d: Discriminator,
    seed: int,
    substeps: int | None = None,
) -> float:
    """One repetition at one theta: pulse, evolution, readout, P1 estimate."""
    pulse = build_pulse(theta, sweep.pulse_mode, sweep.t_m, dev)
    return _one_rep(_Evolver(pulse, dev, engine, substeps), spec, sweep, model, d, seed)


def run_sweep(
    spec: PrepSpec,
    sweep: SweepSpec,
    dev: DeviceParams,
    model: ReadoutModel,
    engine: str,
    d: Discriminator,
    substeps: int | None = None,
) -> ChargingCurve:
    """Repeat :func:`run_point` over the theta grid.

    Repetition seeds are derived from (sweep.seed, theta index, rep index).
    Failing grid points are collected and raised together as SweepError.
    """
    p1 = np.empty((len(sweep.theta_grid), sweep.reps))
    failures = {}
    for i, theta in enumerate(sweep.theta_grid):
        try:
            evolver = _Evolver(build_pulse(theta, sweep.pulse_mode, sweep.t_m, dev), dev, engine, substeps)
        except QBatteryError as exc:
            failures[theta] = exc
            continue
        for r in range(sweep.reps):
            p1[i, r] = _one_rep(evolver, spec, sweep, model, d, _rep_seed(sweep.seed, i, r))
    if failures:
        raise SweepError(failures)
    meta = {
        "device": dev.to_dict(),
        "readout": model.to_dict(),
        "discriminator": {"c0": list(d.c0), "c1": list(d.c1)},
        "prep": spec.to_dict(),
        "pulse_mode": {"kind": sweep.pulse_mode.kind, "value": sweep.pulse_mode.value},
        "engine": engine,
        "t_m": sweep.t_m,
        "reps": sweep.reps,
        "shots": sweep.shots,
        "seed": sweep.seed,
    }
    return ChargingCurve(np.array(sweep.theta_grid), p1, meta)


def curve_energy(curve: ChargingCurve) -> list[tuple[float, float, float]]:
    """(theta, E/delta, stderr) rows; the stored energy in units of delta is P1."""
    return [(float(t), float(m), float(s)) for t, m, s in zip(curve.theta, curve.mean_p1, curve.stderr_p1)]


def calibration_discriminator(model: ReadoutModel, dev: DeviceParams, shots: int, seed: int, t_m: float = DEFAULT_TM):
    """Calibrate on a |0> cloud and a cloud after the built-in pi pulse (RWA, discrete area).

    Returns the discriminator together with the two clouds.
    """
    pulse = discretize(make_calibration_pi(dev.g, t_m), dev)
    p_exc = _Evolver(pulse, dev, "rwa").p1_state(dynamics.GROUND)
    shots0 = sample_shots(0.0, shots, model, seed, stream=0)
    shots1 = sample_shots(p_exc, shots, model, seed, stream=1)
    return calibrate(shots0, shots1), shots0, shots1
