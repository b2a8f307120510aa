"""Synthetic acquisitions: phantom generation, forward simulation, frame summing.

Every operation is a pure function of its inputs and the seed; frame f uses
the derived seed ``rng_seed ^ f`` so frames can be generated independently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import CoarseFrame, FineImage, GridGeometry, Molecule, MoleculeSet
from .operator import PsfSpec, _apply_A_raw, build_kernel

__all__ = [
    "UniformPhantom",
    "TubePhantom",
    "SimulationSpec",
    "FrameStack",
    "simulate",
    "sum_frames",
    "rebin_molecule_frames",
]


@dataclass(frozen=True)
class UniformPhantom:
    """Molecules placed uniformly at random over the field of view.

    ``margin_fine_px`` keeps placements away from the border (useful when a
    test needs the full PSF mass inside the frame); ``on_grid`` snaps ground
    truth to fine-pixel centers so it is exactly representable.
    """

    count: int
    margin_fine_px: int = 0
    on_grid: bool = True


@dataclass(frozen=True)
class TubePhantom:
    """Molecules sampled along smooth curved tubes of a given width."""

    count: int
    tube_count: int = 8
    width_nm: float = 30.0
    on_grid: bool = True


@dataclass(frozen=True)
class SimulationSpec:
    geometry: GridGeometry
    psf: PsfSpec
    molecules_per_frame: int | UniformPhantom | TubePhantom
    intensity_range: tuple[float, float] = (50.0, 200.0)
    noise_sigma: float | None = None  # None -> 1% of the peak clean signal
    frames: int = 1
    rng_seed: int = 0

    def __post_init__(self):
        lo, hi = self.intensity_range
        if not (0 <= lo <= hi):
            raise ValueError(f"bad intensity range [{lo}, {hi}]")
        if self.noise_sigma is not None and self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        if self.frames < 0:
            raise ValueError("frames must be nonnegative")


@dataclass(frozen=True, eq=False)
class FrameStack:
    """Ordered frames sharing one geometry."""

    frames: tuple[CoarseFrame, ...]
    geometry: GridGeometry

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        for f in self.frames:
            if f.geometry != self.geometry:
                raise ValueError("all frames must share the stack geometry")

    def __len__(self) -> int:
        return len(self.frames)

    def as_array(self) -> np.ndarray:
        m = self.geometry.coarse_size
        out = np.empty((len(self.frames), m, m))
        for i, f in enumerate(self.frames):
            out[i] = f.values
        return out


def _phantom_of(spec: SimulationSpec):
    p = spec.molecules_per_frame
    if isinstance(p, (UniformPhantom, TubePhantom)):
        return p
    return UniformPhantom(count=int(p))


def _tube_curves(geometry: GridGeometry, tube_count: int, rng: np.random.Generator):
    """Quadratic Bezier control points per tube, endpoints on the border."""
    fov = geometry.fov_nm
    curves = []
    for _ in range(tube_count):
        # endpoints on two random border sides, control point in the interior
        def border_point():
            side = rng.integers(0, 4)
            t = rng.uniform(0.0, fov)
            return {
                0: (t, 0.0),
                1: (t, fov),
                2: (0.0, t),
                3: (fov, t),
            }[int(side)]

        p0 = border_point()
        p2 = border_point()
        p1 = (rng.uniform(0.2 * fov, 0.8 * fov), rng.uniform(0.2 * fov, 0.8 * fov))
        curves.append((p0, p1, p2))
    return curves


def _sample_tube_positions(curves, width_nm, count, fov, rng):
    xs = np.empty(count)
    ys = np.empty(count)
    for i in range(count):
        (x0, y0), (x1, y1), (x2, y2) = curves[int(rng.integers(0, len(curves)))]
        t = rng.uniform(0.0, 1.0)
        s = 1.0 - t
        px = s * s * x0 + 2 * s * t * x1 + t * t * x2
        py = s * s * y0 + 2 * s * t * y1 + t * t * y2
        # unit normal from the curve tangent
        dx = 2 * s * (x1 - x0) + 2 * t * (x2 - x1)
        dy = 2 * s * (y1 - y0) + 2 * t * (y2 - y1)
        norm = float(np.hypot(dx, dy))
        if norm == 0.0:
            nx, ny = 1.0, 0.0
        else:
            nx, ny = -dy / norm, dx / norm
        off = rng.uniform(-0.5 * width_nm, 0.5 * width_nm)
        xs[i] = min(max(px + off * nx, 0.0), fov)
        ys[i] = min(max(py + off * ny, 0.0), fov)
    return xs, ys


def _place_frame(spec: SimulationSpec, phantom, curves, frame_index: int,
                 rng: np.random.Generator):
    """Draw one frame's molecules and rasterize them onto the fine grid."""
    g = spec.geometry
    n = g.fine_size
    p = g.fine_pixel_nm
    lo, hi = spec.intensity_range

    if isinstance(phantom, UniformPhantom):
        count = phantom.count
        m = phantom.margin_fine_px
        if 2 * m >= n:
            raise ValueError("margin leaves no room for placements")
        if phantom.on_grid:
            ii = rng.integers(m, n - m, size=count)
            jj = rng.integers(m, n - m, size=count)
            xs = (jj + 0.5) * p
            ys = (ii + 0.5) * p
        else:
            xs = rng.uniform(m * p, (n - m) * p, size=count)
            ys = rng.uniform(m * p, (n - m) * p, size=count)
    else:
        count = phantom.count
        xs, ys = _sample_tube_positions(curves, phantom.width_nm, count, g.fov_nm, rng)
        if phantom.on_grid:
            jj = np.clip(np.floor(xs / p).astype(int), 0, n - 1)
            ii = np.clip(np.floor(ys / p).astype(int), 0, n - 1)
            xs = (jj + 0.5) * p
            ys = (ii + 0.5) * p

    intensities = rng.uniform(lo, hi, size=count)
    image = np.zeros((n, n))
    mols = []
    for x_nm, y_nm, inten in zip(xs, ys, intensities):
        i = min(max(int(np.floor(y_nm / p)), 0), n - 1)
        j = min(max(int(np.floor(x_nm / p)), 0), n - 1)
        image[i, j] += inten
        mols.append(Molecule(float(x_nm), float(y_nm), float(inten), frame_index))
    return image, mols


def simulate(spec: SimulationSpec) -> tuple[FrameStack, MoleculeSet]:
    """Generate noisy acquisitions plus exact ground truth.

    Per frame: place molecules, rasterize onto the fine grid, push through the
    acquisition operator, then add i.i.d. Gaussian noise. With
    ``noise_sigma=None`` the noise level is 1% of the peak clean signal across
    the stack (0 for an empty stack).
    """
    g = spec.geometry
    phantom = _phantom_of(spec)
    curves = None
    if isinstance(phantom, TubePhantom):
        curves = _tube_curves(g, phantom.tube_count, np.random.default_rng(spec.rng_seed))

    taps = build_kernel(spec.psf)
    factor = g.upsample_factor
    clean = []
    rngs = []
    all_mols = []
    for f in range(spec.frames):
        rng = np.random.default_rng(spec.rng_seed ^ f)
        image, mols = _place_frame(spec, phantom, curves, f, rng)
        clean.append(_apply_A_raw(image, taps, factor))
        rngs.append(rng)
        all_mols.extend(mols)

    sigma = spec.noise_sigma
    if sigma is None:
        peak = max((float(c.max()) for c in clean), default=0.0)
        sigma = 0.01 * max(peak, 0.0)

    frames = []
    for f, (c, rng) in enumerate(zip(clean, rngs)):
        noisy = c + rng.normal(0.0, sigma, size=c.shape) if sigma > 0 else c
        frames.append(CoarseFrame(g, noisy, frame_index=f))
    return FrameStack(tuple(frames), g), MoleculeSet(tuple(all_mols), g)


def sum_frames(stack: FrameStack, group: int, allow_partial: bool = False) -> FrameStack:
    """Sum consecutive groups of ``group`` frames into one frame each."""
    if group < 1:
        raise ValueError("group must be >= 1")
    total = len(stack)
    if total % group != 0 and not allow_partial:
        raise ValueError(
            f"stack length {total} is not divisible by group {group}; "
            "pass allow_partial=True to keep the trailing remainder"
        )
    out = []
    for start in range(0, total, group):
        chunk = stack.frames[start : start + group]
        acc = np.zeros_like(chunk[0].values)
        for f in chunk:
            acc = acc + f.values
        out.append(CoarseFrame(stack.geometry, acc, frame_index=start // group))
    return FrameStack(tuple(out), stack.geometry)


def rebin_molecule_frames(mols: MoleculeSet, group: int) -> MoleculeSet:
    """Remap ground-truth frame indices after summing: new = old // group."""
    if group < 1:
        raise ValueError("group must be >= 1")
    remapped = tuple(
        Molecule(m.x_nm, m.y_nm, m.intensity, m.frame_index // group) for m in mols
    )
    return MoleculeSet(remapped, mols.geometry)
