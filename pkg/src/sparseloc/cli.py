"""Command-line front end: simulate, sum, localize, evaluate, render.

Every command writes a JSON manifest next to its primary output capturing the
resolved parameters and tool version; re-running the recorded command line (at
``--threads 1``) reproduces the outputs byte-identically.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .errors import ConvergenceError, DataFormatError, NumericalError
from .evaluation import format_sweep_table, jaccard_sweep, sweep_table_csv
from .fileio import read_molecules, read_stack, render_histogram, write_molecules, write_stack
from .model import GridGeometry, MoleculeSet
from .operator import OperatorSpec, PsfSpec
from .simulate import SimulationSpec, TubePhantom, UniformPhantom, rebin_molecule_frames, simulate, sum_frames
from .solver import SolverConfig, solve_frame

USAGE_EXIT = 1
DATA_EXIT = 2
NUMERIC_EXIT = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(USAGE_EXIT)


def _positive_int(text):
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {value}")
    return value


def _positive_float(text):
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {value}")
    return value


def _tolerance_list(text):
    try:
        values = [float(t) for t in text.split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad tolerance list {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("tolerance list is empty")
    return values


def write_manifest(out_path, command: str, parameters: dict) -> Path:
    """Serialize the run configuration next to the output it produced."""
    manifest = {
        "tool": "sparseloc",
        "version": __version__,
        "command": command,
        "parameters": parameters,
    }
    path = Path(str(out_path) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sparseloc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"sparseloc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a synthetic stack and ground truth")
    sim.add_argument("--size", type=_positive_int, default=64, help="coarse pixels per side")
    sim.add_argument("--upsample", type=_positive_int, default=4)
    sim.add_argument("--pixel-nm", type=_positive_float, default=100.0)
    sim.add_argument("--fwhm-nm", type=_positive_float, default=258.21)
    sim.add_argument("--kernel-radius", type=_positive_int, default=None,
                     help="PSF truncation radius in fine pixels (default: ceil(4 sigma))")
    sim.add_argument("--frames", type=int, default=1)
    sim.add_argument("--molecules-per-frame", type=int, default=10)
    sim.add_argument("--phantom", choices=["uniform", "tubes"], default="uniform")
    sim.add_argument("--tube-count", type=_positive_int, default=8)
    sim.add_argument("--tube-width-nm", type=_positive_float, default=30.0)
    sim.add_argument("--intensity-lo", type=float, default=50.0)
    sim.add_argument("--intensity-hi", type=float, default=200.0)
    sim.add_argument("--noise-sigma", type=float, default=None,
                     help="Gaussian noise level (default: 1%% of peak clean signal)")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out-stack", required=True)
    sim.add_argument("--out-truth", required=True)
    sim.set_defaults(func=cmd_simulate)

    ssum = sub.add_parser("sum", help="sum groups of consecutive frames")
    ssum.add_argument("--group", type=_positive_int, required=True)
    ssum.add_argument("--in", dest="in_stack", required=True)
    ssum.add_argument("--out", dest="out_stack", required=True)
    ssum.add_argument("--in-truth", default=None)
    ssum.add_argument("--out-truth", default=None)
    ssum.set_defaults(func=cmd_sum)

    loc = sub.add_parser("localize", help="reconstruct molecules from a stack")
    loc.add_argument("--in-stack", required=True)
    loc.add_argument("--upsample", type=_positive_int, default=None,
                     help="override the stack header upsample factor")
    loc.add_argument("--pixel-nm", type=_positive_float, default=None)
    loc.add_argument("--fwhm-nm", type=_positive_float, default=258.21)
    loc.add_argument("--kernel-radius", type=_positive_int, default=None)
    loc.add_argument("--k", type=_positive_float, default=170.0, help="sparsity budget")
    loc.add_argument("--rho0", type=_positive_float, default=1e-4)
    loc.add_argument("--rho-growth", type=_positive_float, default=10.0)
    loc.add_argument("--rho-final", default="auto",
                     help="'auto' for the spectral exactness bound, or a value")
    loc.add_argument("--fista-tol", type=_positive_float, default=1e-6)
    loc.add_argument("--fista-max-iter", type=_positive_int, default=2000)
    loc.add_argument("--pam-tol", type=_positive_float, default=1e-5)
    loc.add_argument("--pam-max-iter", type=_positive_int, default=200)
    loc.add_argument("--gap-tol", type=_positive_float, default=1e-8)
    loc.add_argument("--no-support-fallback", action="store_true")
    loc.add_argument("--threads", type=_positive_int, default=1)
    loc.add_argument("--out-molecules", required=True)
    loc.add_argument("--out-trace", default=None)
    loc.set_defaults(func=cmd_localize)

    ev = sub.add_parser("evaluate", help="Jaccard sweep of a reconstruction vs truth")
    ev.add_argument("--truth", required=True)
    ev.add_argument("--recon", required=True)
    ev.add_argument("--tolerances", type=_tolerance_list, default=[50.0, 100.0, 150.0, 200.0, 250.0])
    ev.add_argument("--offset-nm", type=float, nargs=2, default=(0.0, 0.0),
                    metavar=("DX", "DY"), help="global shift applied to the reconstruction")
    ev.add_argument("--optimal", action="store_true", help="optimal-assignment matching")
    ev.add_argument("--out-table", required=True)
    ev.set_defaults(func=cmd_evaluate)

    ren = sub.add_parser("render", help="render a molecule list to a PGM image")
    ren.add_argument("--molecules", required=True)
    ren.add_argument("--size", type=_positive_int, default=64)
    ren.add_argument("--upsample", type=_positive_int, default=4)
    ren.add_argument("--pixel-nm", type=_positive_float, default=100.0)
    ren.add_argument("--weight", choices=["count", "intensity"], default="count")
    ren.add_argument("--out", required=True)
    ren.set_defaults(func=cmd_render)
    return parser


def _psf_from_args(args, fine_pixel_nm: float) -> PsfSpec:
    return PsfSpec.from_fwhm(args.fwhm_nm, fine_pixel_nm, kernel_radius_px=args.kernel_radius)


def cmd_simulate(args) -> int:
    if args.frames < 0:
        raise DataFormatError("--frames must be nonnegative")
    geometry = GridGeometry(args.size, args.upsample, args.pixel_nm)
    psf = _psf_from_args(args, geometry.fine_pixel_nm)
    if args.phantom == "tubes":
        phantom = TubePhantom(args.molecules_per_frame, args.tube_count, args.tube_width_nm)
    else:
        phantom = UniformPhantom(args.molecules_per_frame)
    spec = SimulationSpec(
        geometry=geometry,
        psf=psf,
        molecules_per_frame=phantom,
        intensity_range=(args.intensity_lo, args.intensity_hi),
        noise_sigma=args.noise_sigma,
        frames=args.frames,
        rng_seed=args.seed,
    )
    stack, truth = simulate(spec)
    write_stack(stack, args.out_stack)
    write_molecules(truth, args.out_truth)
    params = {k: v for k, v in vars(args).items() if k != "func"}
    write_manifest(args.out_stack, "simulate", params)
    return 0


def cmd_sum(args) -> int:
    if (args.in_truth is None) != (args.out_truth is None):
        raise DataFormatError("--in-truth and --out-truth must be given together")
    stack = read_stack(args.in_stack)
    summed = sum_frames(stack, args.group)
    write_stack(summed, args.out_stack)
    if args.in_truth is not None:
        truth = read_molecules(args.in_truth)
        write_molecules(rebin_molecule_frames(truth, args.group), args.out_truth)
    params = {k: v for k, v in vars(args).items() if k != "func"}
    write_manifest(args.out_stack, "sum", params)
    return 0


def _solve_one(payload):
    frame, op, cfg = payload
    report = solve_frame(frame, op, cfg)
    return report.molecules.molecules, report.trace, report.flags


def cmd_localize(args) -> int:
    stack = read_stack(args.in_stack, upsample_factor=args.upsample,
                       coarse_pixel_nm=args.pixel_nm)
    geometry = stack.geometry
    psf = _psf_from_args(args, geometry.fine_pixel_nm)
    op = OperatorSpec(geometry, psf)
    rho_final = None if args.rho_final == "auto" else float(args.rho_final)
    if rho_final is not None and rho_final <= 0:
        raise DataFormatError("--rho-final must be positive or 'auto'")
    cfg = SolverConfig(
        k=args.k,
        rho0=args.rho0,
        rho_growth=args.rho_growth,
        rho_final=rho_final,
        fista_tol=args.fista_tol,
        fista_max_iter=args.fista_max_iter,
        pam_tol=args.pam_tol,
        pam_max_iter=args.pam_max_iter,
        gap_tol=args.gap_tol,
        support_fallback=not args.no_support_fallback,
    )

    payloads = [(frame, op, cfg) for frame in stack.frames]
    failures = []
    results = [None] * len(payloads)
    if args.threads > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            futures = [pool.submit(_solve_one, payload) for payload in payloads]
            for idx, future in enumerate(futures):
                try:
                    results[idx] = future.result()
                except (NumericalError, ConvergenceError) as exc:
                    failures.append((idx, str(exc)))
    else:
        for idx, payload in enumerate(payloads):
            try:
                results[idx] = _solve_one(payload)
            except (NumericalError, ConvergenceError) as exc:
                failures.append((idx, str(exc)))

    all_mols = []
    trace_lines = ["frame,outer_iter,rho,objective,gap,l0"]
    for idx, result in enumerate(results):
        if result is None:
            continue
        mols, trace, _ = result
        all_mols.extend(mols)
        for outer, stage in enumerate(trace):
            trace_lines.append(
                f"{idx},{outer},{stage.rho:.9g},{stage.objective:.9g},"
                f"{stage.gap:.9g},{stage.l0}"
            )
    write_molecules(MoleculeSet(tuple(all_mols), geometry), args.out_molecules)
    if args.out_trace:
        Path(args.out_trace).write_text("\n".join(trace_lines) + "\n")
    params = {k: v for k, v in vars(args).items() if k != "func"}
    write_manifest(args.out_molecules, "localize", params)
    for idx, message in failures:
        print(f"frame {idx} failed: {message}", file=sys.stderr)
    if failures:
        raise NumericalError(f"{len(failures)} frame(s) failed to solve")
    return 0


def cmd_evaluate(args) -> int:
    truth = read_molecules(args.truth)
    recon = read_molecules(args.recon)
    results = jaccard_sweep(
        truth, recon, args.tolerances,
        recon_offset_nm=tuple(args.offset_nm),
        method="optimal" if args.optimal else "greedy",
    )
    label = Path(args.recon).name
    table = {label: results}
    print(format_sweep_table(table))
    Path(args.out_table).write_text(sweep_table_csv(table))
    params = {k: v for k, v in vars(args).items() if k != "func"}
    write_manifest(args.out_table, "evaluate", params)
    return 0


def cmd_render(args) -> int:
    geometry = GridGeometry(args.size, args.upsample, args.pixel_nm)
    mols = read_molecules(args.molecules, geometry)
    render_histogram(mols, geometry, args.out, weight=args.weight)
    params = {k: v for k, v in vars(args).items() if k != "func"}
    write_manifest(args.out, "render", params)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except (ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except (NumericalError, ConvergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERIC_EXIT


if __name__ == "__main__":
    sys.exit(main())
