"""Euclidean projection onto the intersection of a box and an l1 budget.

The core problem is

    min_u 1/2 ||u - z||^2   s.t.  0 <= u_i <= 1,  sum_i u_i <= k

for nonnegative ``z``. Its KKT solution is ``u_i = clamp(z_i - lam, 0, 1)``
where ``lam = 0`` if the plain box projection already satisfies the budget,
and otherwise the unique ``lam > 0`` at which

    phi(lam) = sum_i clamp(z_i - lam, 0, 1)

equals ``k``. ``phi`` is piecewise linear and nonincreasing with breakpoints
at ``{z_i} U {z_i - 1}``, so ``lam`` is found by sorting the breakpoints and
interpolating in the bracketing interval (O(n log n)).

The signed variant projects onto ``{-1 <= u <= 1, ||u||_1 <= k}`` by
symmetry: project ``|z|`` and restore signs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["BoxSimplexCap", "project_box_capped", "project_signed", "find_lambda"]


@dataclass(frozen=True)
class BoxSimplexCap:
    """Sparsity budget ``k`` over ``dimension`` box-constrained coordinates."""

    k: float
    dimension: int

    def __post_init__(self):
        object.__setattr__(self, "k", float(self.k))
        object.__setattr__(self, "dimension", int(self.dimension))
        if not (self.k > 0):
            raise ValueError(f"budget k must be positive, got {self.k}")
        if self.dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dimension}")


def _clip_sum(z: np.ndarray, lam: float) -> float:
    return float(np.clip(z - lam, 0.0, 1.0).sum())


def find_lambda(z_abs: np.ndarray, k: float) -> float:
    """Solve ``phi(lam) = k`` for an active budget (requires ``phi(0) > k``).

    Breakpoint search: phi is affine between consecutive values of
    ``{z_i} U {z_i - 1}``, so locate the bracketing interval on the sorted
    breakpoints and solve the linear equation inside it.
    """
    z = np.asarray(z_abs, dtype=np.float64)
    zsort = np.sort(z)
    prefix = np.concatenate(([0.0], np.cumsum(zsort)))
    n = z.size

    def phi(lams):
        lams = np.asarray(lams, dtype=np.float64)
        hi = np.searchsorted(zsort, lams + 1.0, side="right")
        lo = np.searchsorted(zsort, lams, side="right")
        return (n - hi) + (prefix[hi] - prefix[lo]) - (hi - lo) * lams

    phi0 = _clip_sum(z, 0.0)
    if phi0 <= k:
        raise ValueError(f"budget inactive: phi(0) = {phi0} <= k = {k}")

    bp = np.concatenate([z, z - 1.0])
    bp = np.unique(bp[bp > 0.0])
    values = phi(bp)
    # first breakpoint where phi drops to k or below (phi is nonincreasing)
    j = int(np.argmax(values <= k))
    lam_hi = float(bp[j])
    phi_hi = float(values[j])
    if phi_hi == k:
        return lam_hi
    if j == 0:
        lam_lo, phi_lo = 0.0, phi0
    else:
        lam_lo, phi_lo = float(bp[j - 1]), float(values[j - 1])
    return lam_lo + (phi_lo - k) * (lam_hi - lam_lo) / (phi_lo - phi_hi)


def project_box_capped(z_abs: np.ndarray, cap: BoxSimplexCap) -> np.ndarray:
    """Project a nonnegative vector onto ``{0 <= u <= 1, sum(u) <= k}``."""
    z = np.asarray(z_abs, dtype=np.float64)
    if z.size != cap.dimension:
        raise ValueError(f"expected {cap.dimension} entries, got {z.size}")
    if not np.isfinite(z).all():
        raise ValueError("input contains non-finite entries")
    if (z < 0).any():
        raise ValueError("input contains negative entries")
    u = np.clip(z, 0.0, 1.0)
    if u.sum() <= cap.k:
        return u
    lam = find_lambda(z, cap.k)
    return np.clip(z - lam, 0.0, 1.0)


def project_signed(z: np.ndarray, cap: BoxSimplexCap) -> np.ndarray:
    """Project onto ``{-1 <= u <= 1, ||u||_1 <= k}`` via the symmetric reduction."""
    z = np.asarray(z, dtype=np.float64)
    if not np.isfinite(z).all():
        raise ValueError("input contains non-finite entries")
    return np.sign(z) * project_box_capped(np.abs(z), cap)
