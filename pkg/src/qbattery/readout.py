"""Dispersive-readout emulation in the IQ plane.

Each shot is a point I + iQ drawn from an isotropic Gaussian blob centred on
the response of the measured state.  The only asymmetry between the two
states is relaxation of |1> during the readout window (``p_relax``), which
moves a shot into the |0> blob.  Shots are classified by the perpendicular
bisector of the two calibration centroids.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, stats

from .errors import DegenerateCalibration, InvalidParam, MissingLabel

# assignment efficiencies measured on the reference device
TARGET_EFF0 = 0.974
TARGET_EFF1 = 0.927


def _point(p) -> np.ndarray:
    a = np.asarray(p, dtype=float).reshape(2)
    if not np.all(np.isfinite(a)):
        raise InvalidParam(f"IQ point must be finite, got {p!r}")
    return a


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Generator for the (seed, stream) pair; distinct streams are independent."""
    if seed < 0 or stream < 0:
        raise InvalidParam("seed and stream must be non-negative integers")
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream)]))


@dataclass(frozen=True)
class ReadoutModel:
    mu0: tuple
    mu1: tuple
    spread: float
    p_relax: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mu0", tuple(_point(self.mu0).tolist()))
        object.__setattr__(self, "mu1", tuple(_point(self.mu1).tolist()))
        if not self.spread > 0:
            raise InvalidParam(f"spread must be > 0, got {self.spread}")
        if not 0.0 <= self.p_relax <= 1.0:
            raise InvalidParam(f"p_relax must lie in [0, 1], got {self.p_relax}")
        if self.mu0 == self.mu1:
            raise InvalidParam("blob centres must differ")

    @property
    def separation(self) -> float:
        return float(np.hypot(self.mu1[0] - self.mu0[0], self.mu1[1] - self.mu0[1]))

    @classmethod
    def ideal(cls, separation_over_spread: float = 10.0) -> "ReadoutModel":
        return cls((-1.0, 0.0), (1.0, 0.0), 2.0 / separation_over_spread, 0.0)

    @classmethod
    def symmetric(cls, separation_over_spread: float) -> "ReadoutModel":
        return cls.ideal(separation_over_spread)

    @classmethod
    def tuned(cls, eff0: float = TARGET_EFF0, eff1: float = TARGET_EFF1) -> "ReadoutModel":
        """Blobs at (-1, 0) and (+1, 0) with spread and p_relax matching target efficiencies.

        The targets are the efficiencies measured on the calibration clouds
        themselves, so the fit accounts for relaxation pulling the |1>
        centroid towards |0> (which shifts the bisector to x = -p_relax).
        """
        spread, p_relax = solve_readout_params(eff0, eff1)
        return cls((-1.0, 0.0), (1.0, 0.0), spread, p_relax)

    def to_dict(self) -> dict:
        return {"mu0": list(self.mu0), "mu1": list(self.mu1), "spread": self.spread, "p_relax": self.p_relax}

    @classmethod
    def from_dict(cls, d: dict) -> "ReadoutModel":
        return cls(tuple(d["mu0"]), tuple(d["mu1"]), float(d["spread"]), float(d.get("p_relax", 0.0)))


def expected_efficiencies(spread: float, p_relax: float) -> tuple[float, float]:
    """Large-sample efficiencies for blobs at x = -1 and x = +1."""
    phi = stats.norm.cdf
    eff0 = phi((1.0 - p_relax) / spread)
    eff1 = (1.0 - p_relax) * phi((1.0 + p_relax) / spread) + p_relax * (1.0 - eff0)
    return float(eff0), float(eff1)


def solve_readout_params(eff0: float, eff1: float) -> tuple[float, float]:
    if not 0.5 < eff1 < eff0 < 1.0:
        raise InvalidParam("need 0.5 < eff1 < eff0 < 1")

    def resid(x):
        e0, e1 = expected_efficiencies(x[0], x[1])
        return [e0 - eff0, e1 - eff1]

    # start from the relaxation-free closed form
    s0 = 1.0 / stats.norm.ppf(eff0)
    p0 = (eff0 - eff1) / (2.0 * eff0 - 1.0)
    sol = optimize.fsolve(resid, [s0, p0], xtol=1e-13, full_output=True)
    x, info, ier, msg = sol
    if ier != 1 or max(abs(r) for r in resid(x)) > 1e-10:
        raise InvalidParam(f"cannot match efficiencies ({eff0}, {eff1}): {msg}")
    return float(x[0]), float(x[1])


def default_readout_model() -> ReadoutModel:
    return ReadoutModel.tuned()


def sample_shots(p1_true, n: int, model: ReadoutModel, seed: int, stream: int = 0) -> np.ndarray:
    """Draw ``n`` IQ points for a qubit with excited population ``p1_true``.

    ``p1_true`` is a scalar or an array of length ``n`` (one probability per
    shot).  Returns an ``(n, 2)`` array of (I, Q).  The result depends only
    on the inputs and ``(seed, stream)``.
    """
    if n < 1:
        raise InvalidParam(f"need at least one shot, got {n}")
    p = np.broadcast_to(np.asarray(p1_true, dtype=float), (n,))
    if np.any(~np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0):
        raise InvalidParam("p1_true must lie in [0, 1]")
    rng = make_rng(seed, stream)
    u = rng.random((n, 2))
    noise = rng.standard_normal((n, 2))
    excited = (u[:, 0] < p) & ~(u[:, 1] < model.p_relax)
    centres = np.where(excited[:, None], np.asarray(model.mu1), np.asarray(model.mu0))
    return centres + model.spread * noise


@dataclass(frozen=True)
class Discriminator:
    c0: tuple
    c1: tuple

    def __post_init__(self):
        object.__setattr__(self, "c0", tuple(_point(self.c0).tolist()))
        object.__setattr__(self, "c1", tuple(_point(self.c1).tolist()))
        if np.hypot(self.c1[0] - self.c0[0], self.c1[1] - self.c0[1]) <= 1e-9:
            raise DegenerateCalibration("calibration centroids coincide")

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.c0) + np.asarray(self.c1))

    @property
    def axis(self) -> np.ndarray:
        return np.asarray(self.c1) - np.asarray(self.c0)

    def score(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=float) - self.midpoint) @ self.axis

    def to_json(self) -> str:
        return json.dumps({"c0": list(self.c0), "c1": list(self.c1)}, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Discriminator":
        d = json.loads(text)
        return cls(tuple(d["c0"]), tuple(d["c1"]))


def calibrate(shots0, shots1) -> Discriminator:
    """Centroid discriminator from |0> and |1> calibration clouds.

    Assumes both clouds share the same spread, so the decision boundary is
    the perpendicular bisector of the centroid segment.
    """
    s0 = np.asarray(shots0, dtype=float).reshape(-1, 2)
    s1 = np.asarray(shots1, dtype=float).reshape(-1, 2)
    if len(s0) == 0 or len(s1) == 0:
        raise InvalidParam("calibration clouds must be non-empty")
    return Discriminator(tuple(s0.mean(axis=0)), tuple(s1.mean(axis=0)))


def classify(d: Discriminator, p):
    """1 if the point lies strictly on the |1> side of the bisector, else 0.

    Accepts a single (I, Q) point or an ``(n, 2)`` array.
    """
    arr = np.asarray(p, dtype=float)
    bits = (d.score(arr) > 0.0).astype(int)
    return int(bits) if arr.ndim == 1 else bits


def estimate_p1(d: Discriminator, shots) -> float:
    shots = np.asarray(shots, dtype=float).reshape(-1, 2)
    if len(shots) == 0:
        raise InvalidParam("no shots to classify")
    return int(np.count_nonzero(d.score(shots) > 0.0)) / len(shots)


def assignment_efficiency(d: Discriminator, labels, points) -> tuple[float, float]:
    """Fraction of correctly classified shots for each prepared label."""
    labels = np.asarray(labels).astype(int).reshape(-1)
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(labels) != len(pts):
        raise InvalidParam("labels and points differ in length")
    bits = classify(d, pts)
    out = []
    for lab in (0, 1):
        mask = labels == lab
        if not mask.any():
            raise MissingLabel(f"no shots labelled {lab}")
        out.append(float(np.mean(bits[mask] == lab)))
    return out[0], out[1]


def binomial_sigma(p: float, n: int) -> float:
    return math.sqrt(p * (1.0 - p) / n)
