#!/usr/bin/env python3
"""Benchmark the compiled kernels against the NumPy fallback.

Times the separable convolution, the block reductions, the composed forward
and adjoint operators, and one full frame solve, on every backend available
in this build.

    python benchmarks/bench_kernels.py [--size 64] [--upsample 4] [--repeats 50]
"""

import argparse
import time

import numpy as np

from sparseloc import (
    CoarseFrame,
    GridGeometry,
    OperatorSpec,
    PsfSpec,
    SimulationSpec,
    SolverConfig,
    UniformPhantom,
    simulate,
    solve_frame,
)
from sparseloc import kernels
from sparseloc.operator import _apply_A_raw, _apply_At_raw, build_kernel


def time_call(fn, repeats):
    fn()  # warm up
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--size", type=int, default=64, help="coarse pixels per side")
    parser.add_argument("--upsample", type=int, default=4)
    parser.add_argument("--repeats", type=int, default=50)
    parser.add_argument("--skip-solve", action="store_true",
                        help="skip the end-to-end frame solve")
    args = parser.parse_args()

    geometry = GridGeometry(args.size, args.upsample, 100.0)
    psf = PsfSpec.from_fwhm(258.21, geometry.fine_pixel_nm)
    op = OperatorSpec(geometry, psf)
    taps = build_kernel(psf)
    n = geometry.fine_size
    rng = np.random.default_rng(0)
    x = rng.random((n, n))
    d = rng.random((args.size, args.size))

    spec = SimulationSpec(geometry, psf, UniformPhantom(20), frames=1, rng_seed=1)
    frame = simulate(spec)[0].frames[0]
    cfg = SolverConfig(k=50, rho_final=100.0, fista_max_iter=50, pam_max_iter=6)

    cases = {
        "convolve_sep2d": lambda: kernels.convolve_sep2d(x, taps),
        "block_sum": lambda: kernels.block_sum(x, args.upsample),
        "block_expand": lambda: kernels.block_expand(d, args.upsample),
        "apply_A": lambda: _apply_A_raw(x, taps, args.upsample),
        "apply_A_adjoint": lambda: _apply_At_raw(d, taps, args.upsample),
    }
    if not args.skip_solve:
        cases["solve_frame"] = lambda: solve_frame(frame, op, cfg)

    backends = kernels.available()
    print(f"grid {n}x{n} fine / {args.size}x{args.size} coarse, "
          f"kernel radius {psf.kernel_radius_px}, {args.repeats} repeats")
    header = f"{'kernel':<18}" + "".join(f"{b:>14}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for name, fn in cases.items():
        repeats = 1 if name == "solve_frame" else args.repeats
        row = f"{name:<18}"
        times = []
        for backend in backends:
            kernels.use(backend)
            times.append(time_call(fn, repeats))
            row += f"{1e3 * times[-1]:>12.3f}ms"
        if len(times) == 2:
            row += f"{times[1] / times[0]:>9.2f}x" if backends[0] == "compiled" else ""
        print(row)
    kernels.use("auto")


if __name__ == "__main__":
    main()
