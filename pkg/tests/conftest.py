import numpy as np
import pytest

from sparseloc import CoarseFrame, FineImage, apply_A, apply_A_adjoint


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def materialize_dense(op):
    """Build the dense matrix of the acquisition operator column by column."""
    n = op.geometry.fine_size
    m = op.geometry.coarse_size
    A = np.zeros((m * m, n * n))
    for idx in range(n * n):
        e = np.zeros(n * n)
        e[idx] = 1.0
        A[:, idx] = apply_A(FineImage(op.geometry, e.reshape(n, n)), op).values.ravel()
    return A


def random_fine(op, rng):
    return FineImage(op.geometry, rng.standard_normal((op.geometry.fine_size,) * 2))


def random_coarse(op, rng):
    return CoarseFrame(op.geometry, rng.standard_normal((op.geometry.coarse_size,) * 2))
