"""Forward acquisition operator: Gaussian blur, block-sum reduction, adjoints,
and spectral estimates of the composed operator.

The acquisition maps a fine-grid image through an isotropic Gaussian blur
(separable, zero-padded, truncated kernel) followed by an LxL block-sum onto
the coarse sensor grid. The adjoint replicates each coarse pixel into its
block and correlates with the (symmetric) kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import kernels
from .errors import ConvergenceError
from .model import CoarseFrame, FineImage, GridGeometry

__all__ = [
    "FWHM_TO_SIGMA",
    "Boundary",
    "PsfSpec",
    "OperatorSpec",
    "SpectralEstimates",
    "build_kernel",
    "convolve",
    "block_sum",
    "apply_A",
    "apply_A_adjoint",
    "estimate_spectral",
]

# sigma = FWHM * FWHM_TO_SIGMA for a Gaussian profile
FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


class Boundary(Enum):
    ZERO_PAD = "zero-pad"


@dataclass(frozen=True)
class PsfSpec:
    """Truncated isotropic Gaussian point-spread function on the fine grid.

    ``kernel_radius_px`` defaults to ceil(4 sigma). Construction itself allows
    any radius >= 1 (small-radius kernels are useful on their own, e.g. in the
    flat large-sigma limit); the support rule radius >= ceil(3 sigma), which
    bounds truncation error, is enforced when the PSF is assembled into an
    :class:`OperatorSpec`.
    """

    sigma_fine_px: float
    kernel_radius_px: int | None = None
    normalize_kernel: bool = True

    def __post_init__(self):
        object.__setattr__(self, "sigma_fine_px", float(self.sigma_fine_px))
        if not math.isfinite(self.sigma_fine_px) or self.sigma_fine_px <= 0:
            raise ValueError(f"sigma_fine_px must be positive, got {self.sigma_fine_px}")
        radius = self.kernel_radius_px
        if radius is None:
            radius = math.ceil(4.0 * self.sigma_fine_px)
        radius = int(radius)
        if radius < 1:
            raise ValueError(f"kernel_radius_px must be >= 1, got {radius}")
        object.__setattr__(self, "kernel_radius_px", radius)

    @classmethod
    def from_fwhm(
        cls,
        fwhm_nm: float,
        fine_pixel_nm: float,
        kernel_radius_px: int | None = None,
        normalize_kernel: bool = True,
    ) -> "PsfSpec":
        """Build from a full-width-at-half-maximum in nm."""
        sigma = fwhm_nm * FWHM_TO_SIGMA / fine_pixel_nm
        return cls(sigma, kernel_radius_px, normalize_kernel)


@dataclass(frozen=True)
class OperatorSpec:
    """Everything defining the acquisition operator."""

    geometry: GridGeometry
    psf: PsfSpec
    boundary: Boundary = Boundary.ZERO_PAD

    def __post_init__(self):
        r = self.psf.kernel_radius_px
        min_r = math.ceil(3.0 * self.psf.sigma_fine_px)
        if r < min_r:
            raise ValueError(
                f"kernel_radius_px={r} truncates the PSF too aggressively; "
                f"need >= ceil(3 sigma) = {min_r}"
            )
        if self.geometry.fine_size <= 2 * r:
            raise ValueError(
                f"fine grid ({self.geometry.fine_size}) too small for kernel radius {r}"
            )


@dataclass(frozen=True)
class SpectralEstimates:
    """Largest/smallest singular values of the operator (restricted to its row space)."""

    sigma1: float
    sigma2: float
    iterations_used: int
    tolerance: float

    def __post_init__(self):
        if not (self.sigma1 >= self.sigma2 >= 0.0):
            raise ValueError(f"need sigma1 >= sigma2 >= 0, got {self.sigma1}, {self.sigma2}")


def build_kernel(psf: PsfSpec) -> np.ndarray:
    """Return the separable 1D kernel taps, length ``2 * radius + 1``.

    Normalized mode scales the taps so the 2D outer-product kernel sums to 1.
    Otherwise the 2D kernel is ``exp(-(t1^2+t2^2)/(2 sigma^2)) / (sqrt(2 pi) sigma)``,
    with the constant split evenly across the two separable passes.
    """
    r = psf.kernel_radius_px
    t = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-(t * t) / (2.0 * psf.sigma_fine_px**2))
    if psf.normalize_kernel:
        return g / g.sum()
    return g * math.sqrt(1.0 / (math.sqrt(2.0 * math.pi) * psf.sigma_fine_px))


def _check_fine(x: FineImage, op: OperatorSpec) -> None:
    if x.geometry != op.geometry:
        raise ValueError("image geometry does not match operator geometry")


def _check_coarse(d: CoarseFrame, op: OperatorSpec) -> None:
    if d.geometry != op.geometry:
        raise ValueError("frame geometry does not match operator geometry")


def convolve(x: FineImage, psf: PsfSpec) -> FineImage:
    """Blur a fine image with the PSF (zero-padded separable convolution)."""
    out = kernels.convolve_sep2d(x.values, build_kernel(psf))
    return FineImage(x.geometry, out)


def block_sum(x: FineImage) -> CoarseFrame:
    """Reduce the fine grid to the coarse grid by summing each LxL block."""
    out = kernels.block_sum(x.values, x.geometry.upsample_factor)
    return CoarseFrame(x.geometry, out)


def _apply_A_raw(x: np.ndarray, taps: np.ndarray, factor: int) -> np.ndarray:
    return kernels.block_sum(kernels.convolve_sep2d(x, taps), factor)


def _apply_At_raw(d: np.ndarray, taps: np.ndarray, factor: int) -> np.ndarray:
    # symmetric taps: correlation equals convolution, so the adjoint of the
    # blur reuses the forward pass
    return kernels.convolve_sep2d(kernels.block_expand(d, factor), taps)


def apply_A(x: FineImage, op: OperatorSpec) -> CoarseFrame:
    """Apply the composed acquisition operator (blur, then block-sum)."""
    _check_fine(x, op)
    out = _apply_A_raw(x.values, build_kernel(op.psf), op.geometry.upsample_factor)
    return CoarseFrame(op.geometry, out)


def apply_A_adjoint(d: CoarseFrame, op: OperatorSpec) -> FineImage:
    """Apply the adjoint: replicate each coarse pixel into its block, then blur."""
    _check_coarse(d, op)
    out = _apply_At_raw(d.values, build_kernel(op.psf), op.geometry.upsample_factor)
    return FineImage(op.geometry, out)


def _power_iteration(apply_sym, shape, tol, max_iter, rng, label):
    """Largest eigenvalue of a symmetric PSD operator by power iteration.

    Returns (eigenvalue, iterations). Raises :class:`ConvergenceError` with
    the last estimate attached if the relative change never drops below tol.
    """
    v = rng.standard_normal(shape)
    nv = np.linalg.norm(v)
    if nv == 0.0:
        raise ValueError("degenerate start vector")
    v /= nv
    lam = np.inf
    for it in range(1, max_iter + 1):
        w = apply_sym(v)
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return 0.0, it
        v = w / nw
        if abs(nw - lam) <= tol * max(nw, 1e-300):
            return nw, it
        lam = nw
    raise ConvergenceError(
        f"power iteration for {label} did not converge in {max_iter} iterations",
        estimate=lam,
    )


def estimate_spectral(
    op: OperatorSpec,
    tol: float = 1e-9,
    max_iter: int = 20000,
    seed: int = 0,
    compute_sigma2: bool = True,
) -> SpectralEstimates:
    """Estimate the extreme singular values of the acquisition operator.

    Both estimates run on the coarse (range) side, i.e. on the Gram operator
    G = A A^T: sigma1^2 is its largest eigenvalue via power iteration, and
    sigma2^2 its smallest via power iteration on ``s I - G`` with a shift
    ``s`` slightly above sigma1^2. sigma2 is therefore the smallest singular
    value of the operator restricted to its row space.

    Parameters
    ----------
    tol : relative tolerance on the eigenvalue estimate.
    max_iter : per-eigenvalue iteration cap; exceeding it raises
        :class:`ConvergenceError` with the partial estimate attached.
    seed : seed for the start vectors (fixed default keeps runs deterministic).
    compute_sigma2 : skip the (slower) smallest-eigenvalue pass when False;
        sigma2 is then reported as 0.
    """
    if not (tol > 0):
        raise ValueError("tol must be positive")
    taps = build_kernel(op.psf)
    factor = op.geometry.upsample_factor
    m = op.geometry.coarse_size

    def gram(v):
        return _apply_A_raw(_apply_At_raw(v, taps, factor), taps, factor)

    rng = np.random.default_rng(seed)
    lam_max, it1 = _power_iteration(gram, (m, m), tol, max_iter, rng, "sigma1")
    sigma1 = math.sqrt(max(lam_max, 0.0))

    if not compute_sigma2 or lam_max == 0.0:
        return SpectralEstimates(sigma1, 0.0, it1, tol)

    shift = lam_max * (1.0 + 1e-3)

    def shifted(v):
        return shift * v - gram(v)

    try:
        mu_max, it2 = _power_iteration(shifted, (m, m), tol, max_iter, rng, "sigma2")
    except ConvergenceError as exc:
        mu = exc.estimate if exc.estimate is not None else shift
        partial = SpectralEstimates(
            sigma1, math.sqrt(max(shift - mu, 0.0)), it1 + max_iter, tol
        )
        raise ConvergenceError(str(exc), estimate=partial) from None
    lam_min = max(shift - mu_max, 0.0)
    sigma2 = min(math.sqrt(lam_min), sigma1)
    return SpectralEstimates(sigma1, sigma2, it1 + it2, tol)
