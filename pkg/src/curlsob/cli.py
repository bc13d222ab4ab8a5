"""Command-line entry points.

Every command prints (or writes with ``--json``) a JSON report carrying the
tool version, the full configuration, grid parameters, norms, residuals and
wall time.  Exit codes: 0 success, 1 operational error, 2 threshold failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, conformal, families, spectral, vf3
from .closed_forms import (loss_yau_field, loss_yau_spinor, pauli_expectation,
                           spinor_quotient, zero_mode_residual)
from .fields import VectorField, lp_norm, make_grid
from .gauge import GaugeSolverError, gauge_fix
from .variational import (DegenerateFieldError, MinimizeOptions, ball_el_residual,
                          el_residual, improved_ratio, improved_ratio_spinor, minimize)

GOLDEN_QUOTIENT = 4 * np.pi  # exact quotient of the closed-form field on ℝ³

# verify-optimizer thresholds, applied on the ball |x| < L/4
ZERO_MODE_MAX = 0.05
EL_MAX = 0.15
CONSTRAINT_MAX = 1e-6
CONFORMAL_GAP_MAX = 0.01


class UsageError(Exception):
    """Invalid input detected before or during a run (exit 1)."""


def _vector(text: str, size: int, name: str) -> np.ndarray:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"{name} must be {size} comma-separated numbers") from None
    if len(vals) != size or not np.all(np.isfinite(vals)):
        raise UsageError(f"{name} must be {size} comma-separated finite numbers")
    return np.array(vals)


def _eta(text: str) -> np.ndarray:
    parts = text.split(",")
    if len(parts) == 2:
        v = _vector(text, 2, "eta").astype(complex)
    else:
        r = _vector(text, 4, "eta")
        v = np.array([r[0] + 1j * r[1], r[2] + 1j * r[3]])
    norm = np.linalg.norm(v)
    if norm == 0:
        raise UsageError("eta must be nonzero")
    # the matched pair solves the zero-mode equation only for unit η
    return v / norm


def _w(args, eta=None) -> np.ndarray:
    if args.w is None:
        return pauli_expectation(eta if eta is not None else _eta(args.eta)).w
    w = _vector(args.w, 3, "w")
    if not np.any(w):
        raise UsageError("w must be nonzero")
    return w


def _grid(args):
    try:
        return make_grid(args.n, args.box)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load_vector(path: str):
    try:
        field = vf3.load(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except vf3.VF3FormatError as exc:
        raise UsageError(f"malformed vf3 file {path}: {exc}") from None
    if not isinstance(field, VectorField):
        raise UsageError(f"{path} holds a {field.kind} field, expected vector")
    return field


def _input_field(args, default: str):
    if args.input:
        return _load_vector(args.input)
    grid = _grid(args)
    name = args.init or default
    try:
        return families.build(name, grid, args.seed, _w(args) if name == "lossyau" else (0, 0, 1))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _grid_info(grid) -> dict:
    return {"n": grid.n, "L": grid.L, "h": grid.h}


def _emit(report: dict, args) -> None:
    text = json.dumps(report, indent=2, default=_jsonable)
    if args.json:
        Path(args.json).write_text(text + "\n")
    else:
        print(text)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"not serialisable: {type(obj).__name__}")


# --- commands ---------------------------------------------------------------------

def cmd_verify_optimizer(args) -> tuple[dict, int]:
    grid = _grid(args)
    eta = _eta(args.eta)
    w = _w(args, eta)
    A = loss_yau_field(w, grid)
    psi = loss_yau_spinor(eta, grid)
    radius = grid.L / 4
    gr = gauge_fix(A, args.tol, args.max_iter)
    a3 = lp_norm(A, 3)
    grad = A - gr.a_fixed
    ball = grid.r2 < radius**2
    cn = lp_norm(spectral.curl(A), 1.5)
    q = cn**1.5 / gr.seminorm**1.5
    lam = cn**1.5 / gr.seminorm**3
    el_box = el_residual(gr.a_fixed, lam, args.eps_reg)
    el_ball, lam_ball = ball_el_residual(A, radius, eps_reg=args.eps_reg)
    zm_box = zero_mode_residual(A, psi)
    zm_ball = zero_mode_residual(A, psi, radius=radius)
    checks = {
        "gauge_constraint": gr.constraint_residual <= CONSTRAINT_MAX and gr.converged,
        "zero_mode_ball": zm_ball.relative_residual <= ZERO_MODE_MAX,
        "el_ball": el_ball <= EL_MAX,
    }
    report = {
        "w": w,
        "eta": [[z.real, z.imag] for z in eta],
        "norms": {"A_l3": a3, "curl_l32": cn, "seminorm": gr.seminorm, "spinor_l3": lp_norm(psi, 3)},
        "gauge": {
            **gr.to_dict(),
            "grad_phi0_ratio": lp_norm(grad, 3) / a3,
            "grad_phi0_ratio_ball": float(np.sum(grad.magnitude()[ball] ** 3) / np.sum(A.magnitude()[ball] ** 3)) ** (1 / 3),
        },
        "quotient": {"value": q, "multiplier": lam, "golden": GOLDEN_QUOTIENT, "relative_to_golden": q / GOLDEN_QUOTIENT - 1},
        "el_residual": {"box": el_box, "ball": el_ball, "ball_multiplier": lam_ball},
        "zero_mode": {"box": zm_box.to_dict(), "ball": zm_ball.to_dict()},
        "spinor_quotient": spinor_quotient(psi),
        "ball_radius": radius,
        "thresholds": {"zero_mode_ball": ZERO_MODE_MAX, "el_ball": EL_MAX, "gauge_constraint": CONSTRAINT_MAX},
        "checks": checks,
    }
    return report, 0 if all(checks.values()) else 2


def cmd_minimize(args) -> tuple[dict, int]:
    opts = MinimizeOptions(step=args.step, tol=args.tol, max_iter=args.max_iter, eps_reg=args.eps_reg,
                           recenter_every=args.recenter_every, seed=args.seed, harmonic=args.harmonic)
    starts = []
    rows = ["start,iteration,quotient,el_residual,step"]
    for k in range(args.starts):
        seed = args.seed + k
        if args.input:
            A0 = _load_vector(args.input)
        else:
            grid = _grid(args)
            name = args.init or "gaussian-bump"
            try:
                A0 = families.build(name, grid, seed, _w(args) if name == "lossyau" else (0, 0, 1))
            except ValueError as exc:
                raise UsageError(str(exc)) from None
        trace = minimize(A0, opts)
        for line in trace.to_csv().splitlines()[1:]:
            rows.append(f"{k},{line}")
        starts.append({"seed": seed, **trace.summary()})
        grid_used = A0.grid
    if args.out:
        Path(args.out).write_text("\n".join(rows) + "\n")
    best = min(s["final_quotient"] for s in starts)
    report = {
        "starts": starts,
        "best_quotient": best,
        "golden_quotient": GOLDEN_QUOTIENT,
        "best_relative_to_golden": best / GOLDEN_QUOTIENT - 1,
        "within_5_percent_above_golden": best <= 1.05 * GOLDEN_QUOTIENT,
        "grid_used": _grid_info(grid_used),
        "trace_csv": args.out,
    }
    return report, 0


def cmd_gauge_fix(args) -> tuple[dict, int]:
    A = _input_field(args, "lossyau")
    gr = gauge_fix(A, args.tol, args.max_iter, harmonic=args.harmonic)
    if args.out:
        vf3.save(gr.a_fixed, args.out)
        if args.phi_out:
            vf3.save(gr.phi0, args.phi_out)
    a3 = lp_norm(A, 3)
    report = {
        **gr.to_dict(),
        "A_l3": a3,
        "grad_phi0_ratio": lp_norm(A - gr.a_fixed, 3) / a3 if a3 > 0 else 0.0,
        "grid_used": _grid_info(A.grid),
    }
    ok = gr.converged and gr.constraint_residual <= max(10 * args.tol, CONSTRAINT_MAX)
    return report, 0 if ok else 2


def cmd_conformal_check(args) -> tuple[dict, int]:
    A = _input_field(args, "lossyau")
    radius = A.grid.L if args.radius is None else (None if args.radius <= 0 else args.radius)
    energy = conformal.conformal_energy_check(A, args.samples, args.seed, seminorm=True,
                                              gauge_tol=args.tol, radius=radius)
    other = families.random_bumps(A.grid, np.random.default_rng(args.seed))
    weighted = conformal.weighted_norm_check(A, other, args.q, args.samples, args.seed, radius=radius)
    gaps = {"energy": energy.energy.gap, "seminorm": energy.seminorm.gap, "weighted": weighted.energy.gap}
    report = {
        "energy_identity": energy.to_dict(),
        "weighted_identity": weighted.to_dict(),
        "gaps": gaps,
        "threshold": CONFORMAL_GAP_MAX,
        "grid_used": _grid_info(A.grid),
    }
    return report, 0 if max(gaps.values()) < CONFORMAL_GAP_MAX else 2


def cmd_improved(args) -> tuple[dict, int]:
    A = _input_field(args, "gaussian-bump")
    rep = improved_ratio(A, tol=args.tol)
    report = {"vector": rep.__dict__, "grid_used": _grid_info(A.grid)}
    if not args.input and (args.init or "gaussian-bump") == "lossyau":
        report["spinor"] = improved_ratio_spinor(loss_yau_spinor(_eta(args.eta), A.grid)).__dict__
    finite = np.isfinite(rep.ratio) and np.isfinite(rep.holder_ratio)
    return report, 0 if finite else 2


def cmd_zero_mode(args) -> tuple[dict, int]:
    grid = _grid(args)
    eta = _eta(args.eta)
    w = _w(args, eta)
    A = loss_yau_field(w, grid)
    psi = loss_yau_spinor(eta, grid)
    radius = grid.L / 4
    box = zero_mode_residual(A, psi, sign=args.sign)
    ball = zero_mode_residual(A, psi, sign=args.sign, radius=radius)
    report = {
        "w": w,
        "eta": [[z.real, z.imag] for z in eta],
        "box": box.to_dict(),
        "ball": ball.to_dict(),
        "threshold_ball": ZERO_MODE_MAX,
    }
    return report, 0 if ball.relative_residual <= ZERO_MODE_MAX else 2


COMMANDS = {
    "verify-optimizer": (cmd_verify_optimizer, {"max_iter": 2000, "tol": 1e-7}),
    "minimize": (cmd_minimize, {"max_iter": 200, "tol": 0.05}),
    "gauge-fix": (cmd_gauge_fix, {"max_iter": 2000, "tol": 1e-7}),
    "conformal-check": (cmd_conformal_check, {"max_iter": 2000, "tol": 1e-7}),
    "improved": (cmd_improved, {"max_iter": 2000, "tol": 1e-7}),
    "zero-mode": (cmd_zero_mode, {"max_iter": 0, "tol": 1e-7}),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--n", type=int, default=64, help="grid points per axis (even, ≥ 8)")
    common.add_argument("--box", type=float, default=8.0, help="box half-width L")
    common.add_argument("--tol", type=float, default=None)
    common.add_argument("--max-iter", type=int, default=None)
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--eps-reg", type=float, default=1e-8)
    common.add_argument("--w", default=None, help="x,y,z (default ⟨η,ση⟩)")
    common.add_argument("--eta", default="1,0,0,0", help="re1,im1,re2,im2 or re1,re2")
    common.add_argument("--in", dest="input", default=None, help="vf3 vector field input")
    common.add_argument("--out", default=None)
    common.add_argument("--init", default=None, choices=families.FAMILIES)
    common.add_argument("--json", default=None, help="write the report here instead of stdout")

    parser = argparse.ArgumentParser(prog="curlsob", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"curlsob {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("verify-optimizer", parents=[common])
    p = sub.add_parser("minimize", parents=[common])
    p.add_argument("--starts", type=int, default=1)
    p.add_argument("--step", type=float, default=0.05)
    p.add_argument("--recenter-every", type=int, default=25)
    p.add_argument("--harmonic", action="store_true", help="let the gauge remove constant vectors")
    p = sub.add_parser("gauge-fix", parents=[common])
    p.add_argument("--phi-out", default=None)
    p.add_argument("--harmonic", action="store_true")
    p = sub.add_parser("conformal-check", parents=[common])
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--q", type=float, default=2.0)
    p.add_argument("--radius", type=float, default=None, help="comparison ball radius (default L; ≤ 0 for the whole box)")
    sub.add_parser("improved", parents=[common])
    p = sub.add_parser("zero-mode", parents=[common])
    p.add_argument("--sign", type=int, default=1, choices=(1, -1))
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    fn, defaults = COMMANDS[args.command]
    for key, value in defaults.items():
        if getattr(args, key) is None:
            setattr(args, key, value)
    config = {k: v for k, v in vars(args).items()}
    start = time.perf_counter()
    try:
        report, code = fn(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DegenerateFieldError, GaugeSolverError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    full = {
        "tool": "curlsob",
        "version": __version__,
        "command": args.command,
        "config": config,
        "grid": {"n": args.n, "L": args.box, "h": 2 * args.box / args.n},
        **report,
        "exit_code": code,
        "wall_time_s": time.perf_counter() - start,
    }
    try:
        _emit(full, args)
    except OSError as exc:
        print(f"error: cannot write report: {exc}", file=sys.stderr)
        return 1
    return code


if __name__ == "__main__":
    sys.exit(main())
