"""Command line interface: ``tacsim simulate|markers|metrics|check``.

Exit codes: 0 success, 2 usage error, 3 configuration error, 4 solver
failure, 5 input/output or data error, 6 a self-check failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checks import ccd_suite, gradient_suite
from .geometry import load_tet_mesh
from .scene import ConfigError, config_hash, load_scene, load_state, run
from .tactile import (
    SensorPlane, embed_markers, front_triangles, image_metrics, marker_displacements, read_image,
    write_marker_csv,
)

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO, EXIT_CHECK = 0, 2, 3, 4, 5, 6

logger = logging.getLogger("tacsim")


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _emit(args, payload: dict, human: str) -> None:
    if args.json:
        sys.stdout.write(json.dumps(payload, sort_keys=True) + "\n")
    else:
        sys.stderr.write(human.rstrip() + "\n")


def cmd_simulate(args) -> int:
    try:
        scene = load_scene(args.config, args.override)
    except ConfigError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from exc
    except (OSError, ValueError) as exc:
        raise CliError(str(exc), EXIT_IO) from exc
    extra = {"config": str(Path(args.config).resolve()), "config_hash": config_hash(args.config),
             "overrides": list(args.override)}
    if scene.plane is not None and "indenter" in scene.config and scene.config["indenter"]:
        extra["marker_center"] = (scene.base_pose[:2, 3] - scene.plane.origin[:2]).tolist()
    result = run(scene, args.steps, out_dir=args.out, manifest_extra=extra)
    payload = {"out": str(args.out), **result.summary}
    if result.error:
        payload["error"] = result.error
        _emit(args, payload, f"solver failed after {result.summary['steps']} steps: {result.error}")
        return EXIT_SOLVER
    _emit(args, payload, f"{result.summary['steps']} steps, {result.summary['newton_iters']} Newton "
                         f"iterations, min distance {result.summary['min_distance']:.3e} m -> {args.out}")
    return EXIT_OK


def _load_trajectory(traj: Path):
    try:
        manifest = json.loads((traj / "manifest.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read manifest in {traj}: {exc}", EXIT_IO) from exc
    states = []
    for entry in manifest["frames"]:
        p = traj / entry["state"]
        if not p.exists():
            raise CliError(f"missing frame {p}", EXIT_IO)
        try:
            states.append(load_state(p)[0])
        except ValueError as exc:
            raise CliError(str(exc), EXIT_IO) from exc
    if not states:
        raise CliError(f"trajectory {traj} has no frames", EXIT_IO)
    return manifest, states


def cmd_markers(args) -> int:
    traj = Path(args.trajectory)
    manifest, states = _load_trajectory(traj)
    try:
        gel = load_tet_mesh(traj / manifest.get("gel_mesh", "gel.vtk"), "vtk")
    except (OSError, ValueError) as exc:
        raise CliError(str(exc), EXIT_IO) from exc
    p = manifest.get("plane")
    if p is None:
        lo, hi = gel.vertices.min(axis=0), gel.vertices.max(axis=0)
        plane = SensorPlane.centered(((lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2), 1.0, 1, lo[2])
    else:
        plane = SensorPlane(np.array(p["origin"]), np.array(p["u"]), np.array(p["v"]), p["pixel_size"],
                            p["width"], p["height"])
    center = args.center if args.center is not None else manifest.get("marker_center", [0.0, 0.0])
    front = front_triangles(gel.vertices, gel.surface_tris)
    try:
        markers = embed_markers(gel.vertices, front, plane, args.rows, args.cols, args.spacing, center=center)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from exc
    n = gel.n_vertices
    xs = [s.x[:n] for s in states]
    out_csv = Path(args.out) if args.out else traj / "markers.csv"
    write_marker_csv(out_csv, markers, xs, plane)
    ref = None
    if args.reference_frame is not None:
        if not 0 <= args.reference_frame < len(xs):
            raise CliError(f"reference frame {args.reference_frame} out of range", EXIT_CONFIG)
        from .tactile import marker_positions
        ref = marker_positions(markers, xs[args.reference_frame])
    _, mean = marker_displacements(markers, xs, plane, reference=ref)
    curve = {
        "frames": list(range(len(xs))),
        "time": [s.time for s in states],
        "mean_displacement_m": mean.tolist(),
        "mean_displacement_px": (mean / plane.pixel_size).tolist() if p is not None else None,
        "markers": len(markers),
    }
    curve_path = Path(args.curve) if args.curve else out_csv.with_suffix(".curve.json")
    curve_path.write_text(json.dumps(curve, indent=2, sort_keys=True) + "\n")
    _emit(args, {"csv": str(out_csv), "curve": str(curve_path), **curve},
          f"{len(markers)} markers x {len(xs)} frames -> {out_csv}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    try:
        a, b = read_image(args.image_a), read_image(args.image_b)
    except (OSError, ValueError) as exc:
        raise CliError(str(exc), EXIT_IO) from exc
    try:
        m = image_metrics(a, b, psnr_ceiling=args.psnr_ceiling)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_IO) from exc
    text = json.dumps(m, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    sys.stdout.write(text + "\n")
    return EXIT_OK


def cmd_check(args) -> int:
    if not args.tolerance > 0 or not args.hessian_tolerance > 0:
        raise CliError("tolerances must be positive", EXIT_CONFIG)
    if args.samples < 1:
        raise CliError("--samples must be at least 1", EXIT_CONFIG)
    try:
        scene = load_scene(args.config, args.override)
    except ConfigError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from exc
    model = scene.model
    grads = gradient_suite(model, scene.solver.h, n_configs=args.samples, seed=args.seed)
    checks = []
    for name, rec in grads.items():
        ok = rec["samples"] > 0 and rec["grad"] < args.tolerance and rec["hess"] < args.hessian_tolerance
        checks.append({"check": f"gradient.{name}", "passed": bool(ok), "grad_rel_error": rec["grad"],
                       "hessvec_rel_error": rec["hess"], "samples": rec["samples"]})
    if model.indenter is not None:
        ccd = ccd_suite(model, n_motions=args.samples * 4, seed=args.seed)
        checks.append({"check": "ccd.conservative", "passed": bool(ccd["min_d2"] > 0), **ccd})
    failed = [c["check"] for c in checks if not c["passed"]]
    report = {"seed": args.seed, "tolerance": args.tolerance, "checks": checks, "passed": not failed}
    text = json.dumps(report, sort_keys=True, indent=None if args.json else 2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    if args.json:
        sys.stdout.write(text + "\n")
    else:
        for c in checks:
            sys.stderr.write(f"{'PASS' if c['passed'] else 'FAIL'} {c['check']}\n")
    return EXIT_CHECK if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tacsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"tacsim {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable JSON on stdout")
    common.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="run a scene and write its trajectory")
    p.add_argument("config")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("markers", parents=[common], help="marker trajectories of a simulated run")
    p.add_argument("trajectory")
    p.add_argument("--rows", type=int, default=5)
    p.add_argument("--cols", type=int, default=4)
    p.add_argument("--spacing", type=float, default=4e-4)
    p.add_argument("--center", type=float, nargs=2, default=None, metavar=("U", "V"))
    p.add_argument("--reference-frame", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--curve", default=None)
    p.set_defaults(func=cmd_markers)

    p = sub.add_parser("metrics", parents=[common], help="SSIM, MAE and PSNR of two images")
    p.add_argument("image_a")
    p.add_argument("image_b")
    p.add_argument("--psnr-ceiling", type=float, default=100.0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("check", parents=[common], help="derivative and CCD self-checks")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=3)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--hessian-tolerance", type=float, default=1e-3)
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_check)
    return parser


def _limit_threads():
    n = os.environ.get("TACSIM_THREADS")
    if not n:
        return None
    try:
        n = int(n)
    except ValueError:
        raise CliError(f"TACSIM_THREADS must be an integer, got {n!r}", EXIT_USAGE) from None
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=max(n, 1))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        limiter = _limit_threads()
        try:
            return args.func(args)
        finally:
            if limiter is not None:
                limiter.unregister()
    except CliError as exc:
        if args.json:
            sys.stdout.write(json.dumps({"error": str(exc), "exit_code": exc.code}) + "\n")
        sys.stderr.write(f"error: {exc}\n")
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
