"""Command-line front end.

Subcommands
-----------
calibrate   simulate |0> and pi-pulse |1> clouds, write the discriminator
sweep       charging curve versus pulse area
fit         recover (a, phi) from a sweep
dynamics    exact lab-frame trajectory and its deviation from the RWA
plot        SVG of a sweep, optionally with a fitted model

Settings are resolved as: command-line flag > ``--config`` JSON > defaults.
Exit codes: 0 success, 2 usage, 3 model error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import dynamics, experiment, fitting, readout, svg
from .errors import QBatteryError
from .experiment import ChargingCurve, PrepSpec, PulseMode, SweepSpec
from .pulses import ARMONK, DeviceParams, area, discretize, make_calibration_pi

EXIT_USAGE, EXIT_MODEL, EXIT_IO = 2, 3, 4

DEFAULTS = {
    "device": ARMONK.to_dict(),
    "readout": "tuned",
    "shots": experiment.DEFAULT_SHOTS,
    "reps": experiment.DEFAULT_REPS,
    "t_m": experiment.DEFAULT_TM,
    "theta_min": 0.0,
    "theta_max": 3.3,
    "theta_steps": 34,
    "seed": None,
}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- config


def load_config(args) -> dict:
    cfg = json.loads(json.dumps(DEFAULTS))
    path = getattr(args, "config", None)
    if path:
        with open(path) as fh:
            user = json.load(fh)
        if not isinstance(user, dict):
            raise UsageError("config must be a JSON object")
        unknown = set(user) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        if "device" in user:
            cfg["device"].update(user.pop("device"))
        cfg.update(user)
    for key, attr in (("seed", "seed"), ("shots", "shots"), ("reps", "reps"), ("t_m", "tm"),
                      ("theta_min", "theta_min"), ("theta_max", "theta_max"), ("theta_steps", "theta_steps")):
        v = getattr(args, attr, None)
        if v is not None:
            cfg[key] = v
    if getattr(args, "readout", None):
        cfg["readout"] = args.readout
    return cfg


def device_from(cfg) -> DeviceParams:
    return DeviceParams.from_dict(cfg["device"])


def readout_from(cfg) -> readout.ReadoutModel:
    r = cfg["readout"]
    if r == "tuned":
        return readout.ReadoutModel.tuned()
    if r == "ideal":
        return readout.ReadoutModel.ideal(10.0)
    if isinstance(r, dict):
        return readout.ReadoutModel.from_dict(r)
    raise UsageError(f"readout must be 'tuned', 'ideal' or an object, got {r!r}")


def require_seed(cfg) -> int:
    if cfg.get("seed") is None:
        raise UsageError("--seed is required for stochastic commands (or set 'seed' in the config)")
    seed = int(cfg["seed"])
    if seed < 0:
        raise UsageError("--seed must be non-negative")
    return seed


def parse_prep(text: str, a_error=0.0, phi_jitter=0.0, per_shot=False) -> PrepSpec:
    kinds = {"ground": "ground", "u": "gate_u", "v": "gate_v"}
    if text in kinds:
        return PrepSpec(kinds[text], a_error=a_error, phi_jitter_std=phi_jitter, per_shot=per_shot)
    if text.startswith("custom:"):
        try:
            a, phi = (float(v) for v in text[len("custom:"):].split(","))
        except ValueError:
            raise UsageError(f"--prep custom needs 'custom:A,PHI', got {text!r}") from None
        return PrepSpec("custom", a=a, phi=phi, a_error=a_error, phi_jitter_std=phi_jitter, per_shot=per_shot)
    raise UsageError(f"unknown --prep {text!r}")


def parse_pulse(text: str | None) -> PulseMode:
    if text is None or text == "fixed-sigma":
        return PulseMode("fixed_sigma", None)
    name, _, val = text.partition(":")
    kinds = {"fixed-sigma": "fixed_sigma", "fixed-amp": "fixed_amp", "lorentzian": "lorentzian"}
    if name not in kinds or not val:
        raise UsageError(f"--pulse must be fixed-sigma:SIGMA, fixed-amp:AMP or lorentzian:GAMMA, got {text!r}")
    try:
        return PulseMode(kinds[name], float(val))
    except ValueError:
        raise UsageError(f"bad number in --pulse {text!r}") from None


# ---------------------------------------------------------------- output


def write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _to_text(writer) -> str:
    buf = io.StringIO()
    writer(buf)
    return buf.getvalue()


def out_dir(args) -> Path:
    return Path(getattr(args, "out", None) or ".")


# ---------------------------------------------------------------- commands


def cmd_calibrate(args) -> int:
    cfg = load_config(args)
    seed = require_seed(cfg)
    dev, model = device_from(cfg), readout_from(cfg)
    shots = int(cfg["shots"])
    disc, s0, s1 = experiment.calibration_discriminator(model, dev, shots, seed, float(cfg["t_m"]))
    labels = np.r_[np.zeros(len(s0), int), np.ones(len(s1), int)]
    pts = np.vstack([s0, s1])
    eff0, eff1 = readout.assignment_efficiency(disc, labels, pts)
    out = out_dir(args)

    def shots_csv(fh):
        fh.write("label,i,q\n")
        for lab, (i, q) in zip(labels, pts):
            fh.write(f"{lab},{i:.17g},{q:.17g}\n")

    write_atomic(out / "discriminator.json", dumps({"c0": list(disc.c0), "c1": list(disc.c1)}))
    write_atomic(out / "calibration_shots.csv", _to_text(shots_csv))
    report = {"eff0": eff0, "eff1": eff1, "shots": shots, "seed": seed, "readout": model.to_dict(), "t_m": cfg["t_m"]}
    write_atomic(out / "efficiency.json", dumps(report))
    if not args.no_svg:
        write_atomic(out / "calibration.svg", svg.iq_scatter(s0, s1, disc, title="Calibration clouds"))
    print(f"eff0={eff0:.4f} eff1={eff1:.4f}")
    return 0


def _load_discriminator(path):
    with open(path) as fh:
        return readout.Discriminator.from_json(fh.read())


def cmd_sweep(args) -> int:
    cfg = load_config(args)
    seed = require_seed(cfg)
    dev, model = device_from(cfg), readout_from(cfg)
    prep = parse_prep(args.prep, args.a_error, args.phi_jitter, args.per_shot)
    mode = parse_pulse(args.pulse)
    steps = int(cfg["theta_steps"])
    if steps < 1:
        raise UsageError("--theta-steps must be >= 1")
    grid = np.linspace(float(cfg["theta_min"]), float(cfg["theta_max"]), steps)
    sweep = SweepSpec(tuple(grid.tolist()), int(cfg["reps"]), int(cfg["shots"]), mode, float(cfg["t_m"]), seed)
    if args.discriminator:
        disc = _load_discriminator(args.discriminator)
    else:
        disc, _, _ = experiment.calibration_discriminator(model, dev, sweep.shots, seed)
    curve = experiment.run_sweep(prep, sweep, dev, model, args.engine, disc, args.substeps)
    out = out_dir(args)
    write_atomic(out / "curve_long.csv", _to_text(curve.write_long_csv))
    write_atomic(out / "curve.csv", _to_text(curve.write_summary_csv))
    write_atomic(out / "curve.json", dumps(curve.metadata))
    if args.svg:
        fine = np.linspace(0.0, float(grid.max()), 200)
        write_atomic(
            out / "curve.svg",
            svg.charging_plot(curve.theta, curve.mean_p1, curve.stderr_p1, fine, None, np.sin(fine / 2) ** 2),
        )
    print(f"wrote {len(grid)} points x {sweep.reps} reps to {out}")
    return 0


def read_curve(path) -> ChargingCurve:
    path = Path(path)
    meta = {}
    side = path.with_name("curve.json") if path.name == "curve_long.csv" else path.with_suffix(".json")
    if side.exists():
        with open(side) as fh:
            meta = json.load(fh)
    with open(path, newline="") as fh:
        return ChargingCurve.read_long_csv(fh, meta)


def cmd_fit(args) -> int:
    curve = read_curve(args.curve)
    res = fitting.fit(curve, weighted=not args.unweighted)
    rec = fitting.report(res, curve)
    out = out_dir(args)
    write_atomic(out / "fit.json", dumps(rec))
    if not args.no_svg:
        fine = np.linspace(0.0, float(curve.theta.max()), 200)
        write_atomic(
            out / "fit.svg",
            svg.charging_plot(
                curve.theta, curve.mean_p1, curve.stderr_p1, fine,
                fitting.model_p1(res.a, res.phi, fine), np.sin(fine / 2) ** 2, title="Best fit",
            ),
        )
    phi_txt = f"{res.phi:.4f} +/- {res.phi_stderr:.4f}" if res.phi_identifiable else "unidentifiable"
    print(f"a={res.a:.5f} +/- {res.a_stderr:.5f} phi={phi_txt} converged={res.converged}")
    return 0


def cmd_dynamics(args) -> int:
    cfg = load_config(args)
    dev = device_from(cfg)
    if args.detuning:
        dev = DeviceParams(dev.delta, dev.g, dev.dt, dev.delta + args.detuning, dev.t1_us, dev.t2_us)
    t_m = float(cfg["t_m"])
    if args.theta is None:
        pulse = discretize(make_calibration_pi(dev.g, t_m), dev)
    else:
        pulse = experiment.build_pulse(args.theta, parse_pulse(args.pulse), t_m, dev)
    prep = parse_prep(args.prep)
    s0, _ = experiment.prepare_initial(prep, 0)
    substeps = args.substeps or dynamics.auto_substeps(dev)
    traj = dynamics.exact_evolve(pulse, dev, s0, substeps)
    theta = area(pulse, dev.g)
    p_rwa = dynamics.p1(
        dynamics.rwa_final_state(dynamics.params_from_state(s0), theta, dynamics.frame_phase(dev.delta, pulse.duration))
    )
    p_exact = float(traj.p1[-1])
    report = {
        "theta_discrete": theta,
        "p1_exact": p_exact,
        "p1_rwa": p_rwa,
        "rwa_deviation": abs(p_exact - p_rwa),
        "substeps": substeps,
        "norm_drift": traj.norm_drift(),
        "samples": len(pulse),
        "device": dev.to_dict(),
    }
    out = out_dir(args)
    write_atomic(out / "trajectory.csv", _to_text(lambda fh: dynamics.write_trajectory_csv(traj, fh)))
    write_atomic(out / "dynamics.json", dumps(report))
    print(f"theta={theta:.6f} P1_exact={p_exact:.6f} P1_rwa={p_rwa:.6f} deviation={abs(p_exact - p_rwa):.3g}")
    return 0


def cmd_plot(args) -> int:
    curve = read_curve(args.curve)
    fine = np.linspace(0.0, float(curve.theta.max()), 200)
    model_y = None
    if args.fit:
        with open(args.fit) as fh:
            rec = json.load(fh)
        model_y = fitting.model_p1(rec["a"], rec["phi"], fine)
    text = svg.charging_plot(curve.theta, curve.mean_p1, curve.stderr_p1, fine, model_y, np.sin(fine / 2) ** 2)
    write_atomic(out_dir(args) / (args.name or "plot.svg"), text)
    return 0


# ---------------------------------------------------------------- parser


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=argparse.SUPPRESS, help="JSON run configuration")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="RNG seed (required for calibrate/sweep)")
    p.add_argument("--out", default=argparse.SUPPRESS, help="output directory (default: .)")
    p.add_argument("--shots", type=int, default=argparse.SUPPRESS, help="shots per repetition (default 1024)")
    p.add_argument("--reps", type=int, default=argparse.SUPPRESS, help="repetitions per theta (default 20)")
    p.add_argument("--readout", choices=["tuned", "ideal"], default=argparse.SUPPRESS, help="readout model preset")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(
        prog="qbattery", description="Driven two-level quantum battery simulator", parents=[common]
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", parents=[common], help="calibrate the IQ discriminator")
    p.add_argument("--tm", type=float, help="calibration pulse window in ns (default 600)")
    p.add_argument("--no-svg", action="store_true")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("sweep", parents=[common], help="charging curve versus pulse area")
    p.add_argument("--prep", default="ground", help="ground, u, v or custom:A,PHI")
    p.add_argument("--pulse", help="fixed-sigma:SIGMA, fixed-amp:AMP or lorentzian:GAMMA (default sigma = tm/8)")
    p.add_argument("--engine", choices=experiment.ENGINES, default="rwa")
    p.add_argument("--tm", type=float, help="measurement window in ns")
    p.add_argument("--theta-min", type=float)
    p.add_argument("--theta-max", type=float)
    p.add_argument("--theta-steps", type=int)
    p.add_argument("--a-error", type=float, default=0.0, help="std of preparation error on a")
    p.add_argument("--phi-jitter", type=float, default=0.0, help="std of preparation phase jitter (rad)")
    p.add_argument("--per-shot", action="store_true", help="draw preparation noise per shot instead of per rep")
    p.add_argument("--discriminator", help="discriminator JSON from 'calibrate' (default: calibrate in-process)")
    p.add_argument("--substeps", type=int, help="exact-engine substeps per sample")
    p.add_argument("--svg", action="store_true", help="also write curve.svg")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit", parents=[common], help="fit (a, phi) to a sweep")
    p.add_argument("curve", help="long-form curve CSV (curve_long.csv)")
    p.add_argument("--unweighted", action="store_true", help="unit weights instead of 1/stderr^2")
    p.add_argument("--no-svg", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("dynamics", parents=[common], help="exact vs RWA evolution for one pulse")
    p.add_argument("--theta", type=float, help="pulse area (default: calibration pi pulse)")
    p.add_argument("--pulse", help="pulse mode as for 'sweep'")
    p.add_argument("--tm", type=float)
    p.add_argument("--prep", default="ground")
    p.add_argument("--detuning", type=float, default=0.0, help="omega - delta in rad/ns")
    p.add_argument("--substeps", type=int)
    p.set_defaults(func=cmd_dynamics)

    p = sub.add_parser("plot", parents=[common], help="SVG of a sweep")
    p.add_argument("curve")
    p.add_argument("--fit", help="fit JSON to overlay")
    p.add_argument("--name", help="output file name (default plot.svg)")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"qbattery: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except experiment.CurveParseError as exc:
        print(f"qbattery: parse error: {exc}", file=sys.stderr)
        return EXIT_IO
    except QBatteryError as exc:
        print(f"qbattery: model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (OSError, json.JSONDecodeError) as exc:
        print(f"qbattery: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
