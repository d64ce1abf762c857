"""Headless entry points: run benchmarks, sweep fields, start the service.

Exit codes: 0 success, 1 input error, 2 solve did not converge. Identical
invocations produce byte-identical VTK/CSV outputs.
"""

from __future__ import annotations

import argparse
import json
import os
import socket
import sys
from pathlib import Path

import numpy as np

from .errors import MagsimError
from .models import builtin_models_dir, load_model
from .simulation import Simulation
from .vtk_io import write_vtk

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_NOT_CONVERGED = 2


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MagsimError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="magsim",
        description="Finite-element simulator for hard-magnetic soft robots")
    sub = parser.add_subparsers(required=True)

    sim = sub.add_parser("simulate", help="run one model to N steps or to "
                         "quasi-static equilibrium")
    _common_model_flags(sim)
    sim.add_argument("--mode", choices=("dynamic", "static"),
                     default="static")
    sim.add_argument("--steps", type=int, default=100,
                     help="step count in dynamic mode")
    sim.add_argument("--tolerance", type=float, default=None,
                     help="override Newton tolerance in static mode")
    sim.add_argument("--dt", type=float, default=None,
                     help="override time step (s)")
    sim.add_argument("--out", type=Path, default=None,
                     help="write final state as legacy-ASCII VTK")
    sim.set_defaults(func=cmd_simulate)

    sweep = sub.add_parser("sweep", help="quasi-static solves over a list "
                           "of field magnitudes")
    _common_model_flags(sweep)
    sweep.add_argument("--magnitudes", required=True,
                       help="comma-separated field magnitudes (Tesla)")
    sweep.add_argument("--out", type=Path, default=None,
                       help="CSV output path (default stdout)")
    sweep.set_defaults(func=cmd_sweep)

    serve = sub.add_parser("serve", help="start the interactive service")
    serve.add_argument("--port", type=int, default=8642)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--models-dir", type=Path, default=None)
    serve.add_argument("--ui-dir", type=Path, default=None)
    serve.set_defaults(func=cmd_serve)
    return parser


def _common_model_flags(p: argparse.ArgumentParser):
    p.add_argument("--model", required=True,
                   help="model name from the models directory")
    p.add_argument("--field", default=None,
                   help="external field as 'bx,by,bz' in Tesla")
    p.add_argument("--models-dir", type=Path, default=None)


def _models_dir(args) -> Path:
    if args.models_dir is not None:
        return args.models_dir
    env = os.environ.get("MAGSIM_MODELS_DIR")
    return Path(env) if env else builtin_models_dir()


def _parse_field(text: str) -> np.ndarray:
    parts = text.split(",")
    if len(parts) != 3:
        raise ValueError(f"--field expects 'bx,by,bz', got {text!r}")
    return np.array([float(p) for p in parts])


def _setup(args) -> Simulation:
    model = load_model(args.model, _models_dir(args))
    sim = Simulation(model)
    if args.field is not None:
        sim.set_field(_parse_field(args.field))
    return sim


def cmd_simulate(args) -> int:
    try:
        sim = _setup(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    from dataclasses import replace
    if args.dt is not None:
        sim.set_solver(replace(sim.config, dt=args.dt))
    if args.mode == "static" and args.tolerance is not None:
        sim.set_solver(replace(sim.config, newton_tolerance=args.tolerance))

    exit_code = EXIT_OK
    summary = {"model": args.model, "mode": args.mode,
               "field_T": sim.magnetics.field.tolist()}
    if args.mode == "static":
        report = sim.solve_static()
        summary["newton_iters"] = report.total_newton_iters
        summary["residual"] = report.final_residual
        summary["converged"] = report.converged
        if not report.converged:
            exit_code = EXIT_NOT_CONVERGED
    else:
        failed = 0
        for _ in range(args.steps):
            if not sim.step().ok:
                failed += 1
                break
        summary["steps"] = sim.state.step
        summary["sim_time_s"] = sim.state.time
        summary["converged"] = failed == 0

    fld = sim.stress()
    summary["max_displacement_m"] = sim.max_displacement()
    summary["max_von_mises_Pa"] = fld.vm_max
    if args.out is not None:
        args.out.write_text(write_vtk(sim.model.mesh, sim.state.positions,
                                      fld.von_mises,
                                      title=f"magsim {args.model}"))
        summary["vtk"] = str(args.out)
    print(json.dumps(summary, sort_keys=True))
    return exit_code


def cmd_sweep(args) -> int:
    try:
        sim = _setup(args)
        magnitudes = [float(m) for m in args.magnitudes.split(",") if m]
        direction = (_parse_field(args.field) if args.field is not None
                     else np.asarray(sim.model.default_field, float))
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    if not magnitudes:
        print("error: --magnitudes needs at least one value",
              file=sys.stderr)
        return EXIT_INPUT_ERROR
    norm = np.linalg.norm(direction)
    if norm == 0.0:
        direction = np.array([0.0, 0.0, 1.0])
        norm = 1.0
    direction = direction / norm

    rows = ["B_magnitude_T,tip_or_max_displacement_m,max_von_mises_Pa,"
            "newton_iters,status"]
    prev_magnitude = 0.0
    any_failed = False
    for mag_t in magnitudes:
        sim.set_field(direction * mag_t)
        # warm start: ramp from the previous solved magnitude
        scale0 = prev_magnitude / mag_t if mag_t else 0.0
        scale0 = min(max(scale0, 0.0), 0.999) if np.isfinite(scale0) else 0.0
        report = sim.solve_static(initial_field_scale=scale0)
        fld = sim.stress()
        status = "ok" if report.converged else "not_converged"
        any_failed |= not report.converged
        rows.append(f"{mag_t:.17g},{sim.max_displacement():.17g},"
                    f"{fld.vm_max:.17g},{report.total_newton_iters},{status}")
        prev_magnitude = mag_t

    text = "\n".join(rows) + "\n"
    if args.out is not None:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_NOT_CONVERGED if any_failed else EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app, default_ui_dir

    models_dir = args.models_dir or (
        Path(os.environ["MAGSIM_MODELS_DIR"])
        if os.environ.get("MAGSIM_MODELS_DIR") else builtin_models_dir())
    ui_dir = args.ui_dir or default_ui_dir()
    app = create_app(models_dir=models_dir, ui_dir=ui_dir)

    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        sock.bind((args.host, args.port))
    except OSError as exc:
        sock.close()
        print(f"error: PortInUse: cannot bind {args.host}:{args.port} "
              f"({exc})", file=sys.stderr)
        return EXIT_INPUT_ERROR
    host, port = sock.getsockname()[:2]
    print(f"magsim serving on http://{host}:{port} (socket /sim, "
          f"models: {models_dir})", flush=True)
    sock.listen(128)

    config = uvicorn.Config(app, log_level="warning")
    server = uvicorn.Server(config)
    try:
        server.run(sockets=[sock])
    except KeyboardInterrupt:
        pass
    print("magsim service stopped", flush=True)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
