"""Recovering the initial state (a, phi) from a charging curve.

With a = sin^2(eta) the charging model becomes

    P1 = 1/2 * [1 + cos(2 eta) cos(theta) + sin(2 eta) sin(phi) sin(theta)]

which is smooth everywhere, including the empty-battery boundary a = 1.
The data only constrain sin(phi), so phi and pi - phi are equivalent; fits
report the representative in [-pi/2, pi/2].
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InsufficientData, InvalidParam

MAX_ITER = 200
GRAD_TOL = 1e-10
LATTICE = 8
DEGENERATE_A = 1e-3
CONVERGED_GRAD = 1e-8


def model_p1(a, phi, theta):
    """Excited-state probability (= E / delta) after a pulse of area ``theta``."""
    a = np.asarray(a, dtype=float)
    if np.any((a < 0) | (a > 1)):
        raise InvalidParam("a must lie in [0, 1]")
    s, c = np.sin(np.asarray(theta) / 2.0), np.cos(np.asarray(theta) / 2.0)
    p = a * s**2 + 2.0 * np.sqrt(a) * np.sqrt(1.0 - a) * np.sin(phi) * s * c + (1.0 - a) * c**2
    p = np.clip(p, 0.0, 1.0)
    return float(p) if p.ndim == 0 else p


def _model_eta(eta, phi, theta):
    return 0.5 * (1.0 + np.cos(2 * eta) * np.cos(theta) + np.sin(2 * eta) * np.sin(phi) * np.sin(theta))


def _jac_eta(eta, phi, theta):
    d_eta = -np.sin(2 * eta) * np.cos(theta) + np.cos(2 * eta) * np.sin(phi) * np.sin(theta)
    d_phi = 0.5 * np.sin(2 * eta) * np.cos(phi) * np.sin(theta)
    return np.stack([d_eta, d_phi], axis=-1)


@dataclass
class FitResult:
    a: float
    phi: float
    a_stderr: float
    phi_stderr: float
    sse: float
    converged: bool
    phi_identifiable: bool
    iterations: int = 0
    grad_norm: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


class FitProblem:
    """Weighted least-squares objective in the internal (eta, phi) coordinates."""

    def __init__(self, theta, y, stderr=None, weighted: bool = True):
        self.theta = np.asarray(theta, dtype=float).reshape(-1)
        self.y = np.asarray(y, dtype=float).reshape(-1)
        if self.theta.size != self.y.size:
            raise InvalidParam("theta and y differ in length")
        if np.unique(self.theta).size < 4:
            raise InsufficientData("need at least 4 distinct theta values")
        if stderr is None or not weighted:
            self.w = np.ones_like(self.y)
        else:
            se = np.asarray(stderr, dtype=float).reshape(-1)
            # a single zero error bar would get infinite weight
            self.w = np.ones_like(self.y) if np.any(se <= 0) else 1.0 / se**2
        self.sw = np.sqrt(self.w)

    @classmethod
    def from_curve(cls, curve, weighted: bool = True) -> "FitProblem":
        return cls(curve.theta, curve.mean_p1, curve.stderr_p1, weighted)

    def residuals(self, x) -> np.ndarray:
        return self.sw * (self.y - _model_eta(x[0], x[1], self.theta))

    def jacobian(self, x) -> np.ndarray:
        """Jacobian of the weighted residuals."""
        return -self.sw[:, None] * _jac_eta(x[0], x[1], self.theta)

    def sse(self, x) -> float:
        r = self.residuals(x)
        return float(r @ r)

    def gradient(self, x) -> np.ndarray:
        return 2.0 * self.jacobian(x).T @ self.residuals(x)

    def sse_ap(self, a, phi):
        """Weighted SSE on an (a, phi) lattice, broadcasting over the inputs."""
        a = np.asarray(a, dtype=float)[..., None]
        phi = np.asarray(phi, dtype=float)[..., None]
        s, c = np.sin(self.theta / 2.0), np.cos(self.theta / 2.0)
        m = a * s**2 + 2.0 * np.sqrt(a * (1.0 - a)) * np.sin(phi) * s * c + (1.0 - a) * c**2
        return np.sum(self.w * (self.y - m) ** 2, axis=-1)


def _levenberg_marquardt(prob: FitProblem, x0, max_iter=MAX_ITER):
    """Damped Gauss-Newton from ``x0``; returns (x, sse, converged, iterations)."""
    x = np.array(x0, dtype=float)
    r = prob.residuals(x)
    f = float(r @ r)
    lam = 1e-3
    for it in range(max_iter):
        J = prob.jacobian(x)
        g = J.T @ r
        gtol = GRAD_TOL * max(1.0, f)
        if 2.0 * np.linalg.norm(g) <= gtol:
            return x, f, True, it
        A = J.T @ J
        diag = np.diag(np.maximum(np.diag(A), 1e-12))
        while True:
            step = np.linalg.lstsq(A + lam * diag, -g, rcond=None)[0]
            r_new = prob.residuals(x + step)
            f_new = float(r_new @ r_new)
            if f_new <= f:
                break
            lam *= 10.0
            if lam > 1e16:
                # no downhill step left: stationary up to rounding
                return x, f, bool(2.0 * np.linalg.norm(g) <= 1e-8), it
        # the model is pi-periodic in eta and 2 pi-periodic in phi; keeping the
        # coordinates small stops phi drifting along flat directions
        x = np.array([math.remainder(x[0] + step[0], math.pi), math.remainder(x[1] + step[1], 2 * math.pi)])
        r, f = r_new, f_new
        lam = max(lam / 10.0, 1e-12)
        if np.linalg.norm(step) <= 1e-15 * (1.0 + np.linalg.norm(x)):
            return x, f, bool(np.linalg.norm(prob.gradient(x)) <= 1e-8), it + 1
    return x, f, False, max_iter


def _polish(prob: FitProblem, x, steps: int = 8):
    """Undamped Gauss-Newton steps judged by gradient norm.

    Near the minimum SSE changes fall below rounding, so the LM acceptance
    test stalls; the gradient still carries usable information there.
    """
    g = prob.gradient(x)
    gn = np.linalg.norm(g)
    for _ in range(steps):
        if gn == 0.0:
            break
        J = prob.jacobian(x)
        step = np.linalg.lstsq(J, -prob.residuals(x), rcond=None)[0]
        x_new = x + step
        g_new = np.linalg.norm(prob.gradient(x_new))
        if not g_new < gn:
            break
        x, gn = x_new, g_new
    return x, gn


def _canonical(x):
    """Fold (eta, phi) into eta in [0, pi/2], phi in [-pi/2, pi/2] without changing the model."""
    # additive folds only: trig round trips lose precision near the edges
    # symmetries used: eta -> eta + pi, (eta, phi) -> (-eta, -phi), phi -> pi - phi
    eta, phi = float(x[0]) % math.pi, float(x[1])
    if eta > math.pi / 2:
        eta, phi = math.pi - eta, -phi
    phi = math.remainder(phi, 2 * math.pi)
    if phi > math.pi / 2:
        phi = math.pi - phi
    elif phi < -math.pi / 2:
        phi = -math.pi - phi
    return np.array([eta, phi])


def fit(curve=None, *, theta=None, y=None, stderr=None, weighted: bool = True, max_iter: int = MAX_ITER) -> FitResult:
    """Best (a, phi) for a charging curve.

    Pass a :class:`~qbattery.experiment.ChargingCurve` or raw ``theta``,
    ``y`` and optional ``stderr`` arrays.  Each node of an 8x8 (eta, phi)
    lattice seeds a Levenberg-Marquardt run; the lowest SSE wins (ties go
    to smaller a, then smaller phi).  Standard errors come from the
    residual variance times the inverse Gauss-Newton curvature.
    """
    prob = FitProblem.from_curve(curve, weighted) if curve is not None else FitProblem(theta, y, stderr, weighted)
    return fit_problem(prob, max_iter=max_iter)


def fit_problem(prob: FitProblem, max_iter: int = MAX_ITER) -> FitResult:
    etas = (np.arange(LATTICE) + 0.5) * (math.pi / 2.0) / LATTICE
    phis = -math.pi + (np.arange(LATTICE) + 0.5) * (2.0 * math.pi) / LATTICE
    runs = []
    for eta0 in etas:
        for phi0 in phis:
            x, f, ok, it = _levenberg_marquardt(prob, (eta0, phi0), max_iter)
            x, gn = _polish(prob, x)
            f = prob.sse(x)
            ok = ok or gn <= CONVERGED_GRAD
            xc = _canonical(x)
            runs.append((f, math.sin(xc[0]) ** 2, xc[1], xc, ok, it))
    best = min(runs, key=lambda r: (round(r[0], 12), r[1], r[2]))
    f, a, phi, xc, ok, it = best
    # one more polish in the folded chart, where the coordinates are small
    xc, _ = _polish(prob, xc)
    xc = _canonical(xc)
    a, phi = math.sin(xc[0]) ** 2, float(xc[1])
    f = prob.sse(xc)

    n = prob.y.size
    J = prob.jacobian(xc)
    s2 = f / (n - 2) if n > 2 else 0.0
    a_se, phi_se = _stderrs(J, s2, xc)
    identifiable = DEGENERATE_A < a < 1.0 - DEGENERATE_A
    if not identifiable:
        phi_se = math.nan
    grad = float(np.linalg.norm(prob.gradient(xc)))
    ok = ok and grad <= CONVERGED_GRAD
    return FitResult(float(a), float(phi), a_se, phi_se, float(f), bool(ok), identifiable, it, grad)


def _stderrs(J, s2, x):
    A = J.T @ J
    try:
        cov = s2 * np.linalg.inv(A)
        var_eta, var_phi = cov[0, 0], cov[1, 1]
    except np.linalg.LinAlgError:
        var_eta = var_phi = math.inf
    if not np.isfinite(var_eta) or var_eta < 0:
        var_eta = math.inf
    if not np.isfinite(var_phi) or var_phi < 0:
        var_phi = math.inf
    # delta method for a = sin^2(eta)
    da = abs(math.sin(2.0 * x[0]))
    a_se = da * math.sqrt(var_eta) if math.isfinite(var_eta) else math.inf
    return float(a_se), float(math.sqrt(var_phi))


def fit_oracle(curve=None, grid_n: int = 400, *, theta=None, y=None, stderr=None, weighted: bool = True):
    """Exhaustive minimum of the same weighted SSE over a uniform (a, phi) lattice.

    ``a`` spans [0, 1] and ``phi`` spans [-pi, pi], ``grid_n`` nodes each.
    Returns ``(a, phi, sse)``; ties resolve to the smallest a, then phi.
    """
    if grid_n < 100:
        raise InvalidParam("oracle lattice needs at least 100 nodes per axis")
    prob = FitProblem.from_curve(curve, weighted) if curve is not None else FitProblem(theta, y, stderr, weighted)
    a_grid = np.linspace(0.0, 1.0, grid_n)
    phi_grid = np.linspace(-math.pi, math.pi, grid_n)
    sse = np.empty((grid_n, grid_n))
    for i, a in enumerate(a_grid):
        sse[i] = prob.sse_ap(a, phi_grid)
    i, j = np.unravel_index(np.argmin(sse), sse.shape)
    return float(a_grid[i]), float(phi_grid[j]), float(sse[i, j])


def theta_max(a: float, phi: float) -> tuple[float, float]:
    """Area of maximum charge in [0, 2 pi) and the maximal E / delta."""
    cos_coef = (1.0 - 2.0 * a) / 2.0
    sin_coef = math.sqrt(a * (1.0 - a)) * math.sin(phi)
    amp = math.hypot(cos_coef, sin_coef)
    if amp == 0.0:
        return 0.0, 0.5
    th = math.atan2(sin_coef, cos_coef) % (2.0 * math.pi)
    return th, min(0.5 + amp, 1.0)


def report(result: FitResult, curve=None, t_m: float | None = None) -> dict:
    """Summary of a fit: maximal stored energy, where it occurs, and a power proxy.

    ``power_proxy`` is E_max / t_m in units of delta per ns; ``t_m`` is taken
    from the curve metadata when not given.
    """
    if t_m is None and curve is not None:
        t_m = curve.metadata.get("t_m")
    th, e_max = theta_max(result.a, result.phi)
    out = {
        "a": result.a,
        "a_stderr": result.a_stderr,
        "phi": result.phi,
        "phi_stderr": result.phi_stderr,
        "sse": result.sse,
        "converged": result.converged,
        "phi_identifiable": result.phi_identifiable,
        "e_max_over_delta": e_max,
        "theta_max": th,
        "power_proxy": e_max / t_m if t_m else None,
    }
    return out


def to_json(record: dict) -> str:
    """JSON with non-finite floats written as null."""
    clean = {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in record.items()}
    return json.dumps(clean, indent=2, sort_keys=True)
