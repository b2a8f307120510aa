"""Grid geometry, image containers, and molecule records shared by all modules.

Coordinate convention (single source of truth for the whole package):
``x_nm`` runs along columns (horizontal), ``y_nm`` along rows (vertical),
origin at the top-left corner of the field of view, and positions are
reported at fine-pixel centers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "GridGeometry",
    "FineImage",
    "CoarseFrame",
    "Molecule",
    "MoleculeSet",
    "fine_index_to_nm",
    "nm_to_fine_index",
]


@dataclass(frozen=True)
class GridGeometry:
    """Coarse acquisition grid plus the upsampling factor of the fine grid."""

    coarse_size: int
    upsample_factor: int
    coarse_pixel_nm: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "coarse_size", int(self.coarse_size))
        object.__setattr__(self, "upsample_factor", int(self.upsample_factor))
        object.__setattr__(self, "coarse_pixel_nm", float(self.coarse_pixel_nm))
        if self.coarse_size < 1:
            raise ValueError(f"coarse_size must be >= 1, got {self.coarse_size}")
        if self.upsample_factor < 1:
            raise ValueError(f"upsample_factor must be >= 1, got {self.upsample_factor}")
        if not math.isfinite(self.coarse_pixel_nm) or self.coarse_pixel_nm <= 0:
            raise ValueError(f"coarse_pixel_nm must be positive, got {self.coarse_pixel_nm}")

    @property
    def fine_size(self) -> int:
        return self.coarse_size * self.upsample_factor

    @property
    def fine_pixel_nm(self) -> float:
        return self.coarse_pixel_nm / self.upsample_factor

    @property
    def fov_nm(self) -> float:
        """Side length of the field of view in nanometers."""
        return self.coarse_size * self.coarse_pixel_nm


def fine_index_to_nm(i: int, j: int, geometry: GridGeometry) -> tuple[float, float]:
    """Map a fine-grid pixel (row ``i``, column ``j``) to its center ``(x_nm, y_nm)``."""
    n = geometry.fine_size
    if not (0 <= i < n and 0 <= j < n):
        raise ValueError(f"pixel ({i}, {j}) outside fine grid of size {n}")
    p = geometry.fine_pixel_nm
    return ((j + 0.5) * p, (i + 0.5) * p)


def nm_to_fine_index(x_nm: float, y_nm: float, geometry: GridGeometry) -> tuple[int, int]:
    """Map a position in nm to the fine-grid pixel (row, column) containing it.

    Positions on the far boundary are clamped into the grid, so the map is
    total on the closed field of view and round-trips with
    :func:`fine_index_to_nm` on every pixel center.
    """
    if math.isnan(x_nm) or math.isnan(y_nm):
        raise ValueError("NaN coordinates")
    p = geometry.fine_pixel_nm
    n = geometry.fine_size
    i = min(max(int(math.floor(y_nm / p)), 0), n - 1)
    j = min(max(int(math.floor(x_nm / p)), 0), n - 1)
    return (i, j)


@dataclass(frozen=True, eq=False)
class FineImage:
    """High-resolution intensity grid (``fine_size`` x ``fine_size``, row-major).

    Values are copied and frozen on construction; instances are safe to share
    across workers.
    """

    geometry: GridGeometry
    values: np.ndarray
    nonnegative: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, order="C")
        n = self.geometry.fine_size
        if v.shape != (n, n):
            raise ValueError(f"values shape {v.shape} does not match fine grid ({n}, {n})")
        if self.nonnegative and bool((v < 0).any()):
            raise ValueError("image flagged nonnegative contains negative entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True, eq=False)
class CoarseFrame:
    """One observed low-resolution acquisition (``coarse_size`` x ``coarse_size``)."""

    geometry: GridGeometry
    values: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, order="C")
        m = self.geometry.coarse_size
        if v.shape != (m, m):
            raise ValueError(f"values shape {v.shape} does not match coarse grid ({m}, {m})")
        object.__setattr__(self, "frame_index", int(self.frame_index))
        if self.frame_index < 0:
            raise ValueError("frame_index must be nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class Molecule:
    """A point source in physical nm coordinates (top-left origin)."""

    x_nm: float
    y_nm: float
    intensity: float = 1.0
    frame_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "x_nm", float(self.x_nm))
        object.__setattr__(self, "y_nm", float(self.y_nm))
        object.__setattr__(self, "intensity", float(self.intensity))
        object.__setattr__(self, "frame_index", int(self.frame_index))
        if not (math.isfinite(self.x_nm) and math.isfinite(self.y_nm)):
            raise ValueError("molecule position must be finite")
        if not (self.intensity >= 0):
            raise ValueError(f"intensity must be nonnegative, got {self.intensity}")
        if self.frame_index < 0:
            raise ValueError("frame_index must be nonnegative")


@dataclass(frozen=True, eq=False)
class MoleculeSet:
    """Ordered collection of molecules, optionally validated against a geometry.

    ``geometry`` may be None for sets read from bare coordinate files; bounds
    are only checked when it is present.
    """

    molecules: tuple[Molecule, ...]
    geometry: GridGeometry | None = None

    def __post_init__(self):
        object.__setattr__(self, "molecules", tuple(self.molecules))
        if self.geometry is not None:
            fov = self.geometry.fov_nm
            for mol in self.molecules:
                if not (0.0 <= mol.x_nm <= fov and 0.0 <= mol.y_nm <= fov):
                    raise ValueError(
                        f"molecule at ({mol.x_nm}, {mol.y_nm}) nm outside field of view "
                        f"[0, {fov}] nm"
                    )

    def __len__(self) -> int:
        return len(self.molecules)

    def __iter__(self):
        return iter(self.molecules)

    def frame_indices(self) -> tuple[int, ...]:
        return tuple(sorted({m.frame_index for m in self.molecules}))

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Return (x_nm, y_nm, intensity, frame_index) as parallel arrays."""
        n = len(self.molecules)
        x = np.empty(n)
        y = np.empty(n)
        inten = np.empty(n)
        frames = np.empty(n, dtype=np.int64)
        for idx, m in enumerate(self.molecules):
            x[idx] = m.x_nm
            y[idx] = m.y_nm
            inten[idx] = m.intensity
            frames[idx] = m.frame_index
        return x, y, inten, frames
