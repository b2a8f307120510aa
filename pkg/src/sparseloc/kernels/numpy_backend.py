"""NumPy implementation of the hot kernels.

Reference backend: always available, used as the fallback when the compiled
extension is not built. Semantics (zero padding, tap order) match the
compiled backend exactly.
"""

import numpy as np


def convolve_sep2d(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Separable 2D convolution with zero-padded boundaries.

    ``taps`` is the 1D kernel of odd length 2r+1 centered at index r; it is
    applied along columns, then along rows.
    """
    r = (taps.size - 1) // 2
    n0, n1 = x.shape
    tmp = np.zeros_like(x)
    padded = np.zeros((n0, n1 + 2 * r))
    padded[:, r : r + n1] = x
    for s in range(taps.size):
        tmp += taps[s] * padded[:, 2 * r - s : 2 * r - s + n1]
    out = np.zeros_like(x)
    padded_v = np.zeros((n0 + 2 * r, n1))
    padded_v[r : r + n0, :] = tmp
    for s in range(taps.size):
        out += taps[s] * padded_v[2 * r - s : 2 * r - s + n0, :]
    return out


def block_sum(x: np.ndarray, factor: int) -> np.ndarray:
    """Sum each ``factor`` x ``factor`` block of ``x`` into one output pixel."""
    m0 = x.shape[0] // factor
    m1 = x.shape[1] // factor
    return x.reshape(m0, factor, m1, factor).sum(axis=(1, 3))


def block_expand(d: np.ndarray, factor: int) -> np.ndarray:
    """Adjoint of :func:`block_sum`: replicate each pixel into its block."""
    return np.repeat(np.repeat(d, factor, axis=0), factor, axis=1)
