"""Command-line surface for the full pipeline.

Exit codes: 0 success, 1 user error (flags, files, formats), 2 numerical
failure (non-finite values during assembly or solving).  Diagnostics go to
stderr as a single machine-parsable line; result data goes to files only.

The --threads flag caps the package's chunk-level parallelism.  The BLAS
library is pinned to a single thread per call (set before numpy is first
imported), so coefficient files are bitwise identical for any --threads
value.
"""

from __future__ import annotations

import argparse
import os
import sys

PROG = "sphereflow"
_BLAS_ENV = ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS",
             "NUMEXPR_NUM_THREADS")


class CliError(Exception):
    """User-level error carrying the exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); we map to exit 1
        raise CliError(message)


def _pin_blas() -> None:
    if "numpy" not in sys.modules:
        for var in _BLAS_ENV:
            os.environ.setdefault(var, "1")


def _version_string() -> str:
    from . import FORMAT_VERSIONS, __version__
    formats = " ".join(f"{k}={v}" for k, v in sorted(FORMAT_VERSIONS.items()))
    return f"{PROG} {__version__} formats: {formats}"


def _parse_axis(text: str):
    parts = text.split(",")
    if len(parts) != 3:
        raise CliError(f"--axis expects 'x,y,z', got '{text}'")
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise CliError(f"--axis expects three numbers, got '{text}'")


def write_report(path, entries: dict) -> None:
    """Text report, one '<key>=<value>' per line."""
    with open(path, "w") as fh:
        for key, value in entries.items():
            if isinstance(value, float):
                fh.write(f"{key}={value:.17g}\n")
            else:
                fh.write(f"{key}={value}\n")


def read_report(path) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(f"{path}: line {lineno}: expected 'key=value'")
            key, value = line.split("=", 1)
            out[key] = value
    return out


def _solver_flags(sub, hier: bool = False):
    sub.add_argument("--tol", type=float, default=0.02,
                     help="relative residual target (default 0.02)")
    sub.add_argument("--maxiter", type=int, default=100,
                     help="total iteration cap (default 100)")
    sub.add_argument("--method", choices=("gmres", "cg"), default="gmres")
    sub.add_argument("--restart", type=int, default=50,
                     help="GMRES restart length (default 50)")
    sub.add_argument("--gradient", choices=("f0", "mid"), default="f0",
                     help="frame anchoring the spatial gradient")
    mode = sub.add_mutually_exclusive_group()
    mode.add_argument("--matrix-free", action="store_true",
                      help="never materialize the dense data matrix")
    mode.add_argument("--force-dense", action="store_true",
                      help="materialize the dense data matrix regardless of size")


def build_parser() -> _Parser:
    parser = _Parser(prog=PROG, description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="store_true",
                        help="print the format-compatibility string and exit")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap chunk-level parallelism (default: all cores)")
    # accept --threads after the subcommand too, without clobbering a value
    # parsed before it
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    subs = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add_parser(name, **kwargs):
        return subs.add_parser(name, parents=[common], **kwargs)

    s = add_parser("icosphere", help="build an icosphere mesh file")
    s.add_argument("--level", type=int, required=True)
    s.add_argument("--hemisphere", action="store_true",
                   help="keep only faces with all vertices at z >= -1e-12")
    s.add_argument("--out", required=True)

    s = add_parser("synth", help="synthetic rotation frame pair with truth")
    s.add_argument("--mesh", required=True)
    s.add_argument("--seed", type=int, required=True,
                   help="generator seed (explicit; no hidden entropy)")
    s.add_argument("--base-nmax", type=int, default=10,
                   help="degree band of the random base field (default 10)")
    s.add_argument("--axis", default="0,0,1", help="rotation axis 'x,y,z'")
    s.add_argument("--delta", type=float, default=0.01, help="rotation angle")
    s.add_argument("--out-f0", required=True)
    s.add_argument("--out-f1", required=True)
    s.add_argument("--out-flow", required=True,
                   help="ground-truth flow coefficient file")
    s.add_argument("--report", default=None,
                   help="write seed/axis/delta metadata here")

    s = add_parser("fitsphere", help="least-squares sphere through points")
    s.add_argument("--points", required=True, help="CSV rows 'x,y,z'")
    s.add_argument("--out", required=True, help="report with center and radius")

    s = add_parser("project", help="radial max projection of voxel data")
    s.add_argument("--voxels", required=True)
    s.add_argument("--mesh", required=True)
    s.add_argument("--fit", required=True, help="report from fitsphere")
    s.add_argument("--eps", type=float, default=0.1,
                   help="radial search half-width (default 0.1)")
    s.add_argument("--samples", type=int, default=11,
                   help="radial sample count (default 11)")
    s.add_argument("--no-normalize", action="store_true",
                   help="skip the [0,1] rescaling of the projected frame")
    s.add_argument("--out", required=True)

    s = add_parser("estimate", help="single-field flow estimate")
    s.add_argument("--mesh", required=True)
    s.add_argument("--f0", required=True)
    s.add_argument("--f1", required=True)
    s.add_argument("--nmax", type=int, required=True)
    s.add_argument("--kind", choices=("power", "halving", "exponent"),
                   default="power")
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--s", type=float, required=True,
                   help="Sobolev exponent of the weights")
    _solver_flags(s)
    s.add_argument("--out", required=True)
    s.add_argument("--report", default=None)

    s = add_parser("uv", help="smooth + oscillatory two-field split")
    s.add_argument("--mesh", required=True)
    s.add_argument("--f0", required=True)
    s.add_argument("--f1", required=True)
    s.add_argument("--nmax", type=int, required=True)
    s.add_argument("--r", type=float, required=True,
                   help="Sobolev exponent of the u weights")
    s.add_argument("--s", type=float, required=True,
                   help="Sobolev exponent of the v weights")
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--beta", type=float, required=True)
    _solver_flags(s)
    s.add_argument("--out-u", required=True)
    s.add_argument("--out-v", required=True)
    s.add_argument("--report", default=None)

    s = add_parser("hier", help="hierarchical multiscale decomposition")
    s.add_argument("--mesh", required=True)
    s.add_argument("--f0", required=True)
    s.add_argument("--f1", required=True)
    s.add_argument("--nmax", type=int, required=True)
    s.add_argument("--schedule", choices=("halving", "exponent", "power"),
                   default="halving")
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--s", type=float, required=True)
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--paper-first-step", action="store_true",
                   help="loosen step 1 to 1000 iterations / tol 0.025")
    _solver_flags(s)
    s.add_argument("--out-prefix", required=True,
                   help="writes <prefix>_stepNN.csv and <prefix>_accNN.csv")
    s.add_argument("--report", default=None)

    s = add_parser("helmholtz", help="split coefficients by vector type")
    s.add_argument("--coeffs", required=True)
    s.add_argument("--out-curlfree", required=True)
    s.add_argument("--out-divfree", required=True)

    s = add_parser("eval", help="coefficients -> per-triangle field file")
    s.add_argument("--mesh", required=True)
    s.add_argument("--coeffs", required=True)
    s.add_argument("--out", required=True)

    s = add_parser("render", help="color-coded top view image (PPM)")
    s.add_argument("--mesh", required=True)
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--coeffs")
    src.add_argument("--field", help="a spheretrifield file")
    s.add_argument("--radius", type=float, default=None,
                   help="color disk radius (default: longest vector)")
    s.add_argument("--size", type=int, default=512)
    s.add_argument("--out", required=True)

    s = add_parser("streamlines", help="Euler streamline tracing")
    s.add_argument("--mesh", required=True)
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--coeffs")
    src.add_argument("--field")
    s.add_argument("--tau", type=int, default=50)
    s.add_argument("--h", type=float, default=None,
                   help="Euler step (default: 1/(10 max |v|))")
    s.add_argument("--seeds", default=None,
                   help="CSV of seed points (default: level-4 vertices)")
    s.add_argument("--out", required=True, help="streamline CSV")
    s.add_argument("--image", default=None,
                   help="also rasterize the lines to this PPM")
    s.add_argument("--size", type=int, default=512)
    return parser


def _load_mesh(path):
    from .mesh import read_mesh
    if not os.path.exists(path):
        raise CliError(f"mesh file not found: {path}")
    return read_mesh(path)


def _load_frame(path, mesh):
    from .fields import read_frame
    if not os.path.exists(path):
        raise CliError(f"frame file not found: {path}")
    return read_frame(path, mesh)


def _load_coeffs(path):
    from .spectral import read_coeffs
    if not os.path.exists(path):
        raise CliError(f"coefficient file not found: {path}")
    return read_coeffs(path)


def _dense_mode(args, dim: int):
    from .assembly import DENSE_LIMIT
    if args.matrix_free:
        return False
    if args.force_dense:
        return True
    if dim > DENSE_LIMIT:
        raise CliError(
            f"basis dimension {dim} exceeds {DENSE_LIMIT}: pass "
            "--matrix-free (recommended) or --force-dense")
    return True


def _quadrature(args):
    from .assembly import build_quadrature
    from .harmonics import BasisSpec, mesh_basis
    mesh = _load_mesh(args.mesh)
    f0 = _load_frame(args.f0, mesh)
    f1 = _load_frame(args.f1, mesh)
    if args.nmax < 1:
        raise CliError(f"--nmax must be >= 1, got {args.nmax}")
    basis = mesh_basis(mesh, BasisSpec(args.nmax))
    return build_quadrature(basis, f0, f1, gradient_anchor=args.gradient)


def _report_entries(report, extra=None):
    entries = {
        "iterations": report.iterations,
        "relative_residual": report.relative_residual,
        "converged": int(report.converged),
        "wall_time": report.wall_time,
    }
    if extra:
        entries.update(extra)
    return entries


def _field_from_args(args, mesh):
    from .harmonics import BasisSpec, mesh_basis
    from .spectral import read_trifield, synthesize
    if args.field:
        return read_trifield(args.field, mesh)
    coeffs = _load_coeffs(args.coeffs)
    basis = mesh_basis(mesh, coeffs.spec)
    return synthesize(coeffs, basis)


def _cmd_icosphere(args):
    from .mesh import build_icosphere, hemisphere_filter, write_mesh
    mesh = build_icosphere(args.level)
    if args.hemisphere:
        mesh = hemisphere_filter(mesh)
    write_mesh(mesh, args.out)


def _cmd_synth(args):
    from .fields import random_band_coeffs, synth_rotation, write_frame
    from .spectral import write_coeffs
    mesh = _load_mesh(args.mesh)
    axis = _parse_axis(args.axis)
    base = random_band_coeffs(args.base_nmax, seed=args.seed)
    truth = synth_rotation(mesh, base, axis, args.delta)
    write_frame(truth.frame0, args.out_f0)
    write_frame(truth.frame1, args.out_f1)
    write_coeffs(truth.true_flow, args.out_flow)
    if args.report:
        write_report(args.report, {
            "seed": args.seed, "base_nmax": args.base_nmax,
            "axis": args.axis, "delta": args.delta,
        })


def _cmd_fitsphere(args):
    from .fields import fit_sphere, read_points
    if not os.path.exists(args.points):
        raise CliError(f"points file not found: {args.points}")
    fit = fit_sphere(read_points(args.points))
    write_report(args.out, {
        "center_x": float(fit.center[0]),
        "center_y": float(fit.center[1]),
        "center_z": float(fit.center[2]),
        "radius": fit.radius,
        "rms": fit.rms,
    })


def _cmd_project(args):
    from .fields import (SphereFit, normalize_frame, project_voxels,
                         read_voxels, write_frame)
    mesh = _load_mesh(args.mesh)
    if not os.path.exists(args.voxels):
        raise CliError(f"voxel file not found: {args.voxels}")
    grid = read_voxels(args.voxels)
    if not os.path.exists(args.fit):
        raise CliError(f"fit report not found: {args.fit}")
    rep = read_report(args.fit)
    try:
        fit = SphereFit(
            center=[float(rep["center_x"]), float(rep["center_y"]),
                    float(rep["center_z"])],
            radius=float(rep["radius"]),
            rms=float(rep.get("rms", "0")),
        )
    except KeyError as missing:
        raise CliError(f"{args.fit}: missing field {missing}")
    frame = project_voxels(grid, fit, mesh, eps=args.eps,
                           samples=args.samples)
    if not args.no_normalize:
        frame = normalize_frame(frame)
    write_frame(frame, args.out)


def _cmd_estimate(args):
    from .models import estimate_flow
    from .spectral import WeightSequence, write_coeffs
    qt = _quadrature(args)
    dense = _dense_mode(args, qt.dimension)
    weights = WeightSequence(kind=args.kind, alpha=args.alpha, s=args.s)
    result = estimate_flow(qt, weights, tol=args.tol, max_iter=args.maxiter,
                           method=args.method, restart=args.restart,
                           dense=dense)
    write_coeffs(result.coeffs, args.out)
    if args.report:
        write_report(args.report, _report_entries(
            result.report, {"weights": result.weights}))


def _cmd_uv(args):
    from .models import solve_uv
    from .spectral import WeightSequence, write_coeffs
    qt = _quadrature(args)
    dense = _dense_mode(args, qt.dimension)
    wu = WeightSequence(kind="power", alpha=args.alpha, s=args.r)
    wv = WeightSequence(kind="power", alpha=args.beta, s=args.s)
    result = solve_uv(qt, wu, wv, tol=args.tol, max_iter=args.maxiter,
                      method=args.method, restart=args.restart, dense=dense)
    write_coeffs(result.u, args.out_u)
    write_coeffs(result.v, args.out_v)
    if args.report:
        write_report(args.report, _report_entries(result.report, {
            "weights_u": wu.describe(), "weights_v": wv.describe()}))


def _cmd_hier(args):
    from .models import FIRST_STEP_OVERRIDES, solve_hierarchical
    from .spectral import WeightSequence, write_coeffs
    qt = _quadrature(args)
    dense = _dense_mode(args, qt.dimension)
    schedule = WeightSequence(kind=args.schedule, alpha=args.alpha, s=args.s)
    overrides = FIRST_STEP_OVERRIDES if args.paper_first_step else None
    result = solve_hierarchical(qt, schedule, steps=args.steps, tol=args.tol,
                                max_iter=args.maxiter,
                                first_step_overrides=overrides,
                                method=args.method, restart=args.restart,
                                dense=dense)
    for k, (inc, acc) in enumerate(zip(result.steps, result.accumulated),
                                   start=1):
        write_coeffs(inc, f"{args.out_prefix}_step{k:02d}.csv")
        write_coeffs(acc, f"{args.out_prefix}_acc{k:02d}.csv")
    if args.report:
        entries = {"schedule": result.schedule, "steps": args.steps}
        for k, (rep, term) in enumerate(zip(result.reports,
                                            result.data_terms), start=1):
            entries[f"step{k:02d}_iterations"] = rep.iterations
            entries[f"step{k:02d}_residual"] = rep.relative_residual
            entries[f"step{k:02d}_data_term"] = term
        write_report(args.report, entries)


def _cmd_helmholtz(args):
    from .spectral import helmholtz_split, write_coeffs
    coeffs = _load_coeffs(args.coeffs)
    curl_free, div_free = helmholtz_split(coeffs)
    write_coeffs(curl_free, args.out_curlfree)
    write_coeffs(div_free, args.out_divfree)


def _cmd_eval(args):
    from .harmonics import BasisSpec, mesh_basis
    from .spectral import synthesize, write_trifield
    mesh = _load_mesh(args.mesh)
    coeffs = _load_coeffs(args.coeffs)
    basis = mesh_basis(mesh, coeffs.spec)
    write_trifield(synthesize(coeffs, basis), args.out)


def _cmd_render(args):
    import numpy as np

    from .viz import colorize, write_ppm
    mesh = _load_mesh(args.mesh)
    fld = _field_from_args(args, mesh)
    radius = args.radius
    if radius is None:
        radius = float(np.linalg.norm(fld.vectors, axis=1).max(initial=0.0))
        if radius == 0.0:
            raise CliError("field is identically zero; pass --radius")
    image = colorize(fld, radius, size=args.size)
    write_ppm(image, args.out)


def _cmd_streamlines(args):
    from .fields import read_points
    from .viz import (default_seeds, render_streamlines, trace_streamlines,
                      write_ppm, write_streamlines_csv)
    mesh = _load_mesh(args.mesh)
    fld = _field_from_args(args, mesh)
    if args.seeds:
        if not os.path.exists(args.seeds):
            raise CliError(f"seeds file not found: {args.seeds}")
        seeds = read_points(args.seeds)
    else:
        seeds = default_seeds(mesh)
    lines = trace_streamlines(fld, seeds, tau=args.tau, h=args.h)
    write_streamlines_csv(lines, args.out)
    if args.image:
        write_ppm(render_streamlines(lines, size=args.size), args.image)


_COMMANDS = {
    "icosphere": _cmd_icosphere,
    "synth": _cmd_synth,
    "fitsphere": _cmd_fitsphere,
    "project": _cmd_project,
    "estimate": _cmd_estimate,
    "uv": _cmd_uv,
    "hier": _cmd_hier,
    "helmholtz": _cmd_helmholtz,
    "eval": _cmd_eval,
    "render": _cmd_render,
    "streamlines": _cmd_streamlines,
}


def run(argv) -> int:
    _pin_blas()
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        if args.version:
            print(_version_string())
            return 0
        if args.command is None:
            raise CliError("no subcommand given (see --help)")
        threads = getattr(args, "threads", None)
        if threads is not None:
            from . import parallel
            parallel.set_thread_count(threads)
        _COMMANDS[args.command](args)
        return 0
    except CliError as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1
    except MemoryError as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:  # includes FormatError, MeshError, CoverageError
        message = " ".join(str(exc).split())
        print(f"{PROG}: error: {message}", file=sys.stderr)
        return 1
    except Exception as exc:
        from .errors import NumericalError
        if isinstance(exc, NumericalError):
            print(f"{PROG}: numerical failure: {exc}", file=sys.stderr)
            return 2
        raise


def main() -> None:
    sys.exit(run(sys.argv[1:]))
