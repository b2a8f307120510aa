"""On-disk formats: raw frame stacks, molecule CSVs, and PGM renderings.

Stack format: a text header ``<base>.hdr`` with ``key=value`` lines (width,
height, frames, dtype=f32le, upsample, pixel_nm) plus a raw payload
``<base>.raw`` of 32-bit little-endian IEEE floats, frame-major and row-major
within each frame. Molecule lists are CSV with the header line
``frame,xnano,ynano,intensity`` and positions in nm.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .model import GridGeometry, CoarseFrame, Molecule, MoleculeSet, nm_to_fine_index
from .simulate import FrameStack

__all__ = [
    "stack_paths",
    "write_stack",
    "read_stack",
    "write_molecules",
    "read_molecules",
    "render_histogram",
]

_MOLECULE_HEADER = "frame,xnano,ynano,intensity"


def stack_paths(path) -> tuple[Path, Path]:
    """Resolve a stack base path (with or without ``.hdr``) to (header, payload)."""
    p = Path(path)
    if p.suffix == ".hdr":
        p = p.with_suffix("")
    return p.with_suffix(p.suffix + ".hdr"), p.with_suffix(p.suffix + ".raw")


def write_stack(stack: FrameStack, path) -> None:
    hdr_path, raw_path = stack_paths(path)
    g = stack.geometry
    m = g.coarse_size
    lines = [
        f"width={m}",
        f"height={m}",
        f"frames={len(stack)}",
        "dtype=f32le",
        f"upsample={g.upsample_factor}",
        f"pixel_nm={g.coarse_pixel_nm!r}",
    ]
    hdr_path.write_text("\n".join(lines) + "\n")
    with open(raw_path, "wb") as fh:
        for frame in stack.frames:
            fh.write(frame.values.astype("<f4").tobytes())


def _parse_header(hdr_path: Path) -> dict:
    try:
        text = hdr_path.read_text()
    except FileNotFoundError:
        raise DataFormatError(f"missing stack header {hdr_path}") from None
    fields = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if "=" not in line:
            raise DataFormatError(f"{hdr_path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    return fields


def read_stack(path, upsample_factor: int | None = None,
               coarse_pixel_nm: float | None = None) -> FrameStack:
    """Read a stack; geometry comes from the header unless overridden."""
    hdr_path, raw_path = stack_paths(path)
    fields = _parse_header(hdr_path)
    try:
        width = int(fields["width"])
        height = int(fields["height"])
        frames = int(fields["frames"])
        dtype = fields["dtype"]
    except KeyError as exc:
        raise DataFormatError(f"{hdr_path}: missing required header key {exc}") from None
    except ValueError as exc:
        raise DataFormatError(f"{hdr_path}: {exc}") from None
    if dtype != "f32le":
        raise DataFormatError(f"{hdr_path}: unsupported dtype {dtype!r} (expected f32le)")
    if width != height:
        raise DataFormatError(f"{hdr_path}: only square frames supported, got {width}x{height}")
    if frames < 0 or width < 1:
        raise DataFormatError(f"{hdr_path}: invalid dimensions")

    if upsample_factor is None:
        if "upsample" not in fields:
            raise DataFormatError(
                f"{hdr_path}: no upsample key; pass upsample_factor explicitly"
            )
        upsample_factor = int(fields["upsample"])
    if coarse_pixel_nm is None:
        coarse_pixel_nm = float(fields.get("pixel_nm", 100.0))
    geometry = GridGeometry(width, upsample_factor, coarse_pixel_nm)

    expected = frames * width * height * 4
    try:
        actual = os.path.getsize(raw_path)
    except FileNotFoundError:
        raise DataFormatError(f"missing stack payload {raw_path}") from None
    if actual != expected:
        raise DataFormatError(
            f"{raw_path}: truncated or oversized payload, expected {expected} bytes "
            f"({frames} frames x {width}x{height} x 4), found {actual}"
        )
    data = np.fromfile(raw_path, dtype="<f4").astype(np.float64)
    data = data.reshape(frames, height, width) if frames else data.reshape(0, height, width)
    out = tuple(CoarseFrame(geometry, data[i], frame_index=i) for i in range(frames))
    return FrameStack(out, geometry)


def write_molecules(mols: MoleculeSet, path) -> None:
    lines = [_MOLECULE_HEADER]
    for m in mols:
        lines.append(f"{m.frame_index},{m.x_nm:.6f},{m.y_nm:.6f},{m.intensity:.6f}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_molecules(path, geometry: GridGeometry | None = None) -> MoleculeSet:
    p = Path(path)
    try:
        text = p.read_text()
    except FileNotFoundError:
        raise DataFormatError(f"missing molecule file {p}") from None
    lines = text.splitlines()
    if not lines or lines[0].strip() != _MOLECULE_HEADER:
        raise DataFormatError(f"{p}:1: expected header {_MOLECULE_HEADER!r}")
    mols = []
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise DataFormatError(f"{p}:{lineno}: expected 4 columns, got {len(parts)}")
        try:
            frame = int(parts[0])
            x_nm = float(parts[1])
            y_nm = float(parts[2])
            intensity = float(parts[3])
        except ValueError as exc:
            raise DataFormatError(f"{p}:{lineno}: {exc}") from None
        try:
            mols.append(Molecule(x_nm, y_nm, intensity, frame))
        except ValueError as exc:
            raise DataFormatError(f"{p}:{lineno}: {exc}") from None
    try:
        return MoleculeSet(tuple(mols), geometry)
    except ValueError as exc:
        raise DataFormatError(f"{p}: {exc}") from None


def render_histogram(mols: MoleculeSet, geometry: GridGeometry, path,
                     weight: str = "count") -> None:
    """Bin molecules into the fine grid and write an 8-bit PGM (P5) image.

    ``weight`` selects plain counts or intensity-weighted bins; the result is
    min-max scaled to [0, 255].
    """
    if weight not in ("count", "intensity"):
        raise ValueError(f"weight must be 'count' or 'intensity', got {weight!r}")
    n = geometry.fine_size
    grid = np.zeros((n, n))
    for m in mols:
        i, j = nm_to_fine_index(m.x_nm, m.y_nm, geometry)
        grid[i, j] += 1.0 if weight == "count" else m.intensity
    lo = float(grid.min())
    hi = float(grid.max())
    if hi > lo:
        scaled = np.round((grid - lo) / (hi - lo) * 255.0)
    else:
        scaled = np.zeros_like(grid)
    img = scaled.astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{n} {n}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
