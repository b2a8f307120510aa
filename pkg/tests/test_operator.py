import math

import numpy as np
import pytest

from sparseloc import (
    Boundary,
    CoarseFrame,
    FWHM_TO_SIGMA,
    FineImage,
    GridGeometry,
    OperatorSpec,
    PsfSpec,
    apply_A,
    apply_A_adjoint,
    block_sum,
    build_kernel,
    convolve,
    estimate_spectral,
)
from sparseloc.operator import _power_iteration

from conftest import materialize_dense, random_coarse, random_fine


@pytest.fixture
def small_op():
    # dense-oracle scale: 8x8 fine grid, 4x4 coarse
    return OperatorSpec(GridGeometry(4, 2, 100.0), PsfSpec(1.0, 3))


class TestPsfSpec:
    def test_default_radius_is_4_sigma(self):
        assert PsfSpec(4.3861).kernel_radius_px == math.ceil(4 * 4.3861)

    def test_from_fwhm(self):
        psf = PsfSpec.from_fwhm(258.21, 25.0)
        assert psf.sigma_fine_px == pytest.approx(4.3861, abs=5e-5)
        assert psf.sigma_fine_px == pytest.approx(258.21 * FWHM_TO_SIGMA / 25.0, rel=1e-15)

    def test_invalid_sigma(self):
        with pytest.raises(ValueError):
            PsfSpec(0.0)
        with pytest.raises(ValueError):
            PsfSpec(1.0, 0)

    def test_operator_enforces_support_rule(self):
        geom = GridGeometry(16, 4, 100.0)
        with pytest.raises(ValueError):
            OperatorSpec(geom, PsfSpec(4.0, 5))  # needs >= ceil(3 sigma) = 12

    def test_operator_enforces_grid_size(self):
        with pytest.raises(ValueError):
            OperatorSpec(GridGeometry(4, 1, 100.0), PsfSpec(0.5, 2))


class TestBuildKernel:
    def test_flat_limit(self):
        # huge sigma, small radius: every 2D cell approaches 1/(2r+1)^2
        taps = build_kernel(PsfSpec(1e6, 4))
        flat = 1.0 / (2 * 4 + 1) ** 2
        cells = np.outer(taps, taps)
        assert np.abs(cells - flat).max() < 1e-6

    def test_center_value_direct_sum(self):
        taps = build_kernel(PsfSpec(1.0, 4))
        g = np.exp(-np.arange(-4, 5) ** 2 / 2.0)
        assert taps[4] ** 2 == pytest.approx((g[4] / g.sum()) ** 2, rel=1e-14)

    def test_symmetry(self):
        taps = build_kernel(PsfSpec(1.7, 5))
        assert taps[5 + 2] == taps[5 - 2]
        assert np.array_equal(taps, taps[::-1])

    def test_normalized_sums_to_one(self):
        taps = build_kernel(PsfSpec(2.3, 9))
        assert np.outer(taps, taps).sum() == pytest.approx(1.0, abs=1e-12)

    def test_unnormalized_constant(self):
        psf = PsfSpec(1.0, 4, normalize_kernel=False)
        taps = build_kernel(psf)
        const = 1.0 / (math.sqrt(2 * math.pi) * 1.0)
        assert taps[4] * taps[4] == pytest.approx(const, rel=1e-12)


class TestConvolve:
    def test_zero_image(self, small_op):
        geom = small_op.geometry
        out = convolve(FineImage(geom, np.zeros((8, 8))), small_op.psf)
        assert not out.values.any()

    def test_impulse_response(self, small_op):
        geom = small_op.geometry
        x = np.zeros((8, 8))
        x[4, 4] = 1.0
        out = convolve(FineImage(geom, x), small_op.psf).values
        taps = build_kernel(small_op.psf)
        assert np.abs(out[1:, 1:] - np.outer(taps, taps)).max() < 1e-14
        assert out.sum() == pytest.approx(1.0, abs=1e-12)

    def test_linearity(self, rng):
        geom = GridGeometry(16, 2, 100.0)
        psf = PsfSpec(1.5, 5)
        a = rng.standard_normal((32, 32))
        b = rng.standard_normal((32, 32))
        fa = convolve(FineImage(geom, a), psf).values
        fb = convolve(FineImage(geom, b), psf).values
        fab = convolve(FineImage(geom, a + b), psf).values
        assert np.abs(fab - (fa + fb)).max() < 1e-10

    def test_interior_shift_invariance(self):
        geom = GridGeometry(16, 2, 100.0)
        psf = PsfSpec(1.0, 3)
        x = np.zeros((32, 32))
        x[12, 12] = 1.0
        y = np.roll(np.roll(x, 3, axis=0), 2, axis=1)
        fx = convolve(FineImage(geom, x), psf).values
        fy = convolve(FineImage(geom, y), psf).values
        assert np.abs(np.roll(np.roll(fx, 3, axis=0), 2, axis=1) - fy).max() < 1e-14


class TestBlockSum:
    def test_sums_all_entries(self):
        geom = GridGeometry(1, 2, 100.0)
        out = block_sum(FineImage(geom, np.array([[1.0, 2.0], [3.0, 4.0]])))
        assert out.values.tolist() == [[10.0]]

    def test_identity_when_l1(self):
        geom = GridGeometry(4, 1, 100.0)
        values = np.arange(16.0).reshape(4, 4)
        out = block_sum(FineImage(geom, values))
        assert np.array_equal(out.values, values)

    def test_ones(self):
        geom = GridGeometry(2, 2, 100.0)
        out = block_sum(FineImage(geom, np.ones((4, 4))))
        assert np.array_equal(out.values, np.full((2, 2), 4.0))

    @pytest.mark.parametrize("m,l", [(2, 2), (3, 2), (4, 2), (8, 3)])
    def test_matches_dense_reduction_matrix(self, m, l, rng):
        geom = GridGeometry(m, l, 100.0)
        n = geom.fine_size
        R = np.zeros((m, n))
        for p in range(m):
            R[p, p * l : (p + 1) * l] = 1.0
        X = rng.standard_normal((n, n))
        expected = R @ X @ R.T
        got = block_sum(FineImage(geom, X)).values
        assert np.abs(got - expected).max() < 1e-12


class TestApplyA:
    def test_zero(self, small_op):
        out = apply_A(FineImage(small_op.geometry, np.zeros((8, 8))), small_op)
        assert not out.values.any()

    def test_mass_conservation(self):
        op = OperatorSpec(GridGeometry(8, 2, 100.0), PsfSpec(1.0, 3))
        x = np.zeros((16, 16))
        x[8, 7] = 1.0
        out = apply_A(FineImage(op.geometry, x), op)
        assert out.values.sum() == pytest.approx(1.0, abs=1e-10)

    def test_dense_oracle(self, small_op, rng):
        A = materialize_dense(small_op)
        for _ in range(5):
            x = random_fine(small_op, rng)
            got = apply_A(x, small_op).values.ravel()
            want = A @ x.values.ravel()
            assert np.abs(got - want).max() < 1e-10
            d = random_coarse(small_op, rng)
            got_t = apply_A_adjoint(d, small_op).values.ravel()
            want_t = A.T @ d.values.ravel()
            assert np.abs(got_t - want_t).max() < 1e-10

    def test_geometry_mismatch(self, small_op):
        other = GridGeometry(8, 2, 100.0)
        with pytest.raises(ValueError):
            apply_A(FineImage(other, np.zeros((16, 16))), small_op)


class TestAdjoint:
    def test_identity_on_random_pairs(self, rng):
        op = OperatorSpec(GridGeometry(8, 4, 100.0), PsfSpec(2.0, 7))
        for _ in range(50):
            x = random_fine(op, rng)
            y = random_coarse(op, rng)
            ax = apply_A(x, op).values
            aty = apply_A_adjoint(y, op).values
            lhs = float(np.vdot(ax, y.values))
            rhs = float(np.vdot(x.values, aty))
            denom = np.linalg.norm(ax) * np.linalg.norm(y.values) + 1e-30
            assert abs(lhs - rhs) / denom < 1e-10

    def test_zero(self, small_op):
        out = apply_A_adjoint(CoarseFrame(small_op.geometry, np.zeros((4, 4))), small_op)
        assert not out.values.any()

    def test_l1_impulse_gives_kernel(self):
        op = OperatorSpec(GridGeometry(8, 1, 100.0), PsfSpec(0.8, 3))
        d = np.zeros((8, 8))
        d[4, 4] = 1.0
        out = apply_A_adjoint(CoarseFrame(op.geometry, d), op).values
        taps = build_kernel(op.psf)
        assert np.abs(out[1:, 1:] - np.outer(taps, taps)).max() < 1e-14


class TestSpectral:
    def test_identity_like_operator(self):
        op = OperatorSpec(GridGeometry(6, 1, 100.0), PsfSpec(1e-6, 1))
        est = estimate_spectral(op, tol=1e-12)
        assert est.sigma1 == pytest.approx(1.0, abs=1e-9)
        assert est.sigma2 == pytest.approx(1.0, abs=1e-9)

    def test_dense_oracle(self, small_op):
        est = estimate_spectral(small_op, tol=1e-13, max_iter=200000)
        s = np.linalg.svd(materialize_dense(small_op), compute_uv=False)
        assert abs(est.sigma1 - s[0]) / s[0] < 1e-6
        assert abs(est.sigma2 - s[-1]) / s[-1] < 1e-6
        assert est.sigma1 >= est.sigma2 >= 0

    def test_homogeneity(self, small_op, rng):
        from sparseloc.operator import _apply_A_raw, _apply_At_raw

        taps = build_kernel(small_op.psf)
        factor = small_op.geometry.upsample_factor

        def gram_scaled(v, c):
            return c * c * _apply_A_raw(_apply_At_raw(v, taps, factor), taps, factor)

        m = small_op.geometry.coarse_size
        lam1, _ = _power_iteration(
            lambda v: gram_scaled(v, 1.0), (m, m), 1e-12, 50000,
            np.random.default_rng(0), "s1",
        )
        lam2, _ = _power_iteration(
            lambda v: gram_scaled(v, 2.0), (m, m), 1e-12, 50000,
            np.random.default_rng(0), "s1",
        )
        assert math.sqrt(lam2) == pytest.approx(2.0 * math.sqrt(lam1), rel=1e-9)

    def test_norm_bound_on_random_inputs(self, small_op, rng):
        est = estimate_spectral(small_op, tol=1e-10)
        for _ in range(20):
            x = random_fine(small_op, rng)
            ax = apply_A(x, small_op).values
            assert np.linalg.norm(ax) <= est.sigma1 * np.linalg.norm(x.values) * (1 + 1e-8)

    def test_bad_tol(self, small_op):
        with pytest.raises(ValueError):
            estimate_spectral(small_op, tol=0.0)


def test_boundary_enum():
    assert OperatorSpec(GridGeometry(4, 2, 100.0), PsfSpec(1.0, 3)).boundary is Boundary.ZERO_PAD
