"""Command-line front end.

Exit codes: 0 success, 1 a threshold or convergence check failed, 2 usage or
config error. Flags override values read from ``--config`` (flat
``key = value``; preset keys, run keys such as ``grid`` or ``points``, and the
Rydberg keys ``omega_prime_hz``, ``delta_hz``, ``tau_r_s``, ``dephasing_hz``).
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import math
import sys

import numpy as np

from . import _kernels
from .configio import atomic_write_text, format_kv, read_kv
from .noise import DecoherenceSpec, GridSpec, robustness_order_fit, sweep_lindblad_fidelity, sweep_unitary_fidelity
from .quantum import gate_fidelity, propagate_unitary
from .robustness import (
    OptimizationError,
    OptimizerConfig,
    initial_guess,
    optimize_multistart,
    phase_report,
    reoptimize,
)
from .rydberg import RydbergParams, sweep_ct_fidelity
from .schedule import PRESET_KEYS, GatePreset, PulseHamiltonian, controls, get_preset, target_unitary

log = logging.getLogger("geopulse")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

VERIFY_MAX_D12 = 0.05
VERIFY_MAX_RESIDUAL = 0.02
VERIFY_MIN_FIDELITY = 0.999

RUN_KEYS = {
    "preset": str,
    "grid": int,
    "samples": int,
    "points": int,
    "seed": int,
    "starts": int,
    "steps_per_unit": int,
    "format": str,
    "out": str,
    "gamma1": float,
    "gamma2": float,
    "noise": str,
}


class UsageError(Exception):
    pass


def _f9(x: float) -> str:
    return f"{x:.9f}"


def _emit(text: str, out: str | None) -> None:
    if out:
        atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


def _load_config(args) -> dict[str, str]:
    if not args.config:
        return {}
    try:
        return read_kv(args.config)
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    except ValueError as exc:
        raise UsageError(f"bad config: {exc}") from None


def _merge(args, cfg: dict[str, str]) -> None:
    """Fill unset flags from the config file."""
    for key, conv in RUN_KEYS.items():
        if key in cfg and getattr(args, key, None) is None and hasattr(args, key):
            try:
                setattr(args, key, conv(cfg[key]))
            except ValueError:
                raise UsageError(f"bad config value for {key}: {cfg[key]!r}") from None
    if "range" in cfg and getattr(args, "range", None) is None and hasattr(args, "range"):
        try:
            args.range = [float(v) for v in cfg["range"].replace(",", " ").split()]
        except ValueError:
            raise UsageError(f"bad config value for range: {cfg['range']!r}") from None


def _preset(args, cfg: dict[str, str], default: str | None = None) -> GatePreset:
    name = args.preset
    if name is None and any(k in cfg for k in PRESET_KEYS if k != "name"):
        try:
            return GatePreset.from_mapping(cfg)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    name = name or default
    if name is None:
        raise UsageError("no preset given (use --preset or --config)")
    try:
        return get_preset(name)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None


def _grid(args, default_points: int) -> GridSpec:
    points = args.grid if args.grid is not None else default_points
    rng = args.range if args.range is not None else [0.2]
    try:
        if len(rng) == 1:
            return GridSpec.symmetric(points, abs(rng[0]))
        if len(rng) == 2:
            return GridSpec(points, rng[0], rng[1])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    raise UsageError("--range takes one half-width or two bounds")


def _save_grid(grid, args) -> None:
    fmt = args.format or "csv"
    text = grid.to_csv() if fmt == "csv" else grid.to_json()
    _emit(text, args.out)


def _threshold(value: float, limit: float | None, label: str) -> int:
    if limit is None:
        return EXIT_OK
    ok = value >= limit
    print(f"{label} {value:.9f} {'>=' if ok else '<'} {limit}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_synth(args, cfg) -> int:
    preset = _preset(args, cfg)
    n = args.samples or 1000
    if n < 2:
        raise UsageError("--samples must be at least 2")
    t = np.linspace(0.0, preset.tau, n)
    th, _ = preset.theta.values(t)
    ph, _ = preset.phi.values(t)
    be, _ = preset.beta.values(t)
    delta, omega, psi = controls(preset, t)
    fmt = args.format or "csv"
    if fmt == "csv":
        buf = io.StringIO()
        buf.write("t,theta,phi,beta,delta,omega,psi\n")
        for row in zip(t, th, ph, be, delta, omega, psi):
            buf.write(",".join(_f9(v) for v in row) + "\n")
        text = buf.getvalue()
    else:
        cols = {"t": t, "theta": th, "phi": ph, "beta": be, "delta": delta, "omega": omega, "psi": psi}
        doc = {"preset": preset.to_mapping(), "columns": {k: np.round(v, 9).tolist() for k, v in cols.items()}}
        text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    _emit(text, args.out)
    return EXIT_OK


def cmd_verify(args, cfg) -> int:
    preset = _preset(args, cfg)
    rep = phase_report(preset)
    U = propagate_unitary(PulseHamiltonian(preset), preset.grid(args.steps_per_unit))
    fid = gate_fidelity(U, target_unitary(*preset.target))
    checks = {
        "d12": abs(rep.d12) <= VERIFY_MAX_D12,
        "dynamical_residual": abs(rep.dynamical_residual) <= VERIFY_MAX_RESIDUAL,
        "fidelity": fid >= VERIFY_MIN_FIDELITY,
    }
    out = {"name": preset.name, "gamma": repr(rep.geometric_phase), **rep.to_mapping(), "fidelity": repr(fid)}
    for key, ok in checks.items():
        out[f"check_{key}"] = "pass" if ok else "fail"
    text = format_kv(out)
    if args.out:
        atomic_write_text(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK if all(checks.values()) else EXIT_FAIL


def cmd_optimize(args, cfg) -> int:
    if args.target is not None:
        target = tuple(args.target)
        seed = initial_guess(target, name=args.name or "optimized")
    else:
        seed = _preset(args, cfg)
        target = seed.target
    try:
        opt = OptimizerConfig(
            learning_rate=args.learning_rate,
            loss_tolerance=args.tolerance,
            max_iters=args.max_iters,
            omega_penalty_weight=args.omega_penalty,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    try:
        res = optimize_multistart(target, seed, opt, starts=args.starts or 1, rng_seed=args.seed or 0)
    except OptimizationError as exc:
        print(f"optimization failed: {exc}", file=sys.stderr)
        _emit(format_kv(exc.best.to_mapping()), args.out)
        return EXIT_FAIL
    preset = res.preset if not args.name else res.preset.replace(name=args.name)
    text = format_kv({**preset.to_mapping(), **res.report.to_mapping(), "iterations": res.iterations})
    _emit(text, args.out)
    print(f"|D12| = {abs(res.report.d12):.3e}, tau = {preset.tau / math.pi:.4f} pi", file=sys.stderr)
    return EXIT_OK


def cmd_sweep_unitary(args, cfg) -> int:
    preset = _preset(args, cfg)
    constraint = "diagonal" if args.diagonal else "full"
    grid = sweep_unitary_fidelity(preset, _grid(args, 41), constraint, args.steps_per_unit)
    _save_grid(grid, args)
    return _threshold(float(grid.diagonal().min()), args.min_fidelity, "min diagonal fidelity")


def cmd_sweep_lindblad(args, cfg) -> int:
    preset = _preset(args, cfg)
    try:
        spec = DecoherenceSpec(
            args.gamma1 if args.gamma1 is not None else 0.0,
            args.gamma2 if args.gamma2 is not None else DecoherenceSpec().gamma2,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    constraint = "diagonal" if args.diagonal else "full"
    grid = sweep_lindblad_fidelity(preset, _grid(args, 41), spec, constraint, args.steps_per_unit)
    _save_grid(grid, args)
    return _threshold(float(grid.diagonal().min()), args.min_fidelity, "min diagonal fidelity")


def cmd_sweep_ct(args, cfg) -> int:
    try:
        params = RydbergParams.from_mapping(cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    noise = (args.noise or "on").lower()
    if noise not in ("on", "off"):
        raise UsageError("--noise takes 'on' or 'off'")
    grid = sweep_ct_fidelity(_grid(args, 21), params, noise == "on", steps_per_unit=args.steps_per_unit)
    _save_grid(grid, args)
    return _threshold(grid.peak, args.min_fidelity, "peak fidelity")


def cmd_order_fit(args, cfg) -> int:
    preset = _preset(args, cfg)
    if args.reoptimize:
        try:
            preset = reoptimize(preset).preset
        except OptimizationError as exc:
            print(f"re-optimization failed: {exc}", file=sys.stderr)
            return EXIT_FAIL
    rng = args.range if args.range is not None else [0.01, 0.1]
    if len(rng) != 2:
        raise UsageError("--range takes two bounds for order-fit")
    points = args.points if args.points is not None else 8
    try:
        fit = robustness_order_fit(preset, (rng[0], rng[1]), points, args.steps_per_unit)
    except ValueError as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    lines = [f"point eps={_f9(e)} excess_infidelity={v:.6e}" for e, v in zip(fit.epsilons, fit.excess_infidelity)]
    lines.append(f"slope {fit.slope:.6f}")
    text = "\n".join(lines) + "\n"
    _emit(text, args.out)
    if args.out:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geopulse", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, grid=False):
        p.add_argument("--preset", help="builtin preset name (H, S, T)")
        p.add_argument("--config", help="flat key = value file")
        p.add_argument("--out", help="output path (default stdout)")
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--steps-per-unit", dest="steps_per_unit", type=int)
        if grid:
            p.add_argument("--grid", type=int, help="points per error axis")
            p.add_argument("--range", type=float, nargs="+", help="half-width, or lo hi")
            p.add_argument("--min-fidelity", dest="min_fidelity", type=float)
        return p

    p = common(sub.add_parser("synth", help="dump the control waveforms"))
    p.add_argument("--samples", type=int)
    p.set_defaults(func=cmd_synth)

    p = common(sub.add_parser("verify", help="check phases, D12 and gate fidelity"))
    p.set_defaults(func=cmd_verify)

    p = common(sub.add_parser("optimize", help="drive D12 to zero"))
    p.add_argument("--target", type=float, nargs=3, metavar=("GAMMA", "THETA0", "PHI0"))
    p.add_argument("--name")
    p.add_argument("--seed", type=int)
    p.add_argument("--starts", type=int)
    p.add_argument("--tolerance", type=float, default=1e-10, help="loss tolerance on |D12|^2")
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=1e-2)
    p.add_argument("--max-iters", dest="max_iters", type=int, default=50_000)
    p.add_argument("--omega-penalty", dest="omega_penalty", type=float, default=0.0)
    p.set_defaults(func=cmd_optimize)

    p = common(sub.add_parser("sweep-unitary", help="closed-system error grid"), grid=True)
    p.add_argument("--diagonal", action="store_true", help="only eta = epsilon")
    p.set_defaults(func=cmd_sweep_unitary)

    p = common(sub.add_parser("sweep-lindblad", help="dephasing error grid"), grid=True)
    p.add_argument("--diagonal", action="store_true", help="only eta = epsilon")
    p.add_argument("--gamma1", type=float)
    p.add_argument("--gamma2", type=float)
    p.set_defaults(func=cmd_sweep_lindblad)

    p = common(sub.add_parser("sweep-ct", help="two-atom controlled-phase error grid"), grid=True)
    p.add_argument("--noise", choices=("on", "off"))
    p.set_defaults(func=cmd_sweep_ct)

    p = common(sub.add_parser("order-fit", help="robustness exponent along eta = epsilon"))
    p.add_argument("--range", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--points", type=int)
    p.add_argument("--reoptimize", action="store_true")
    p.set_defaults(func=cmd_order_fit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    _kernels.set_threads_from_env()
    try:
        cfg = _load_config(args)
        _merge(args, cfg)
        if getattr(args, "format", None) not in (None, "csv", "json"):
            raise UsageError("--format takes csv or json")
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
