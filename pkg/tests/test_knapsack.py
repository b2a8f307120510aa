import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparseloc import BoxSimplexCap, find_lambda, project_box_capped, project_signed


def clip_sum(z, lam):
    return float(np.clip(z - lam, 0.0, 1.0).sum())


def oracle_project(z, k, iters=300):
    """Independent bisection oracle for the box-capped projection."""
    z = np.asarray(z, dtype=float)
    u = np.clip(z, 0.0, 1.0)
    if u.sum() <= k:
        return u
    lo, hi = 0.0, float(z.max())
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if clip_sum(z, mid) > k:
            lo = mid
        else:
            hi = mid
    return np.clip(z - hi, 0.0, 1.0)


nonneg_vectors = st.lists(
    st.floats(min_value=0.0, max_value=10.0, allow_nan=False), min_size=1, max_size=16
).map(lambda v: np.array(v))

signed_vectors = st.lists(
    st.floats(min_value=-10.0, max_value=10.0, allow_nan=False), min_size=1, max_size=16
).map(lambda v: np.array(v))

budgets = st.floats(min_value=0.25, max_value=8.0)


class TestProjectBoxCapped:
    def test_feasible_point_unchanged(self):
        z = np.array([0.5, 0.3])
        out = project_box_capped(z, BoxSimplexCap(2.0, 2))
        assert np.array_equal(out, z)

    def test_symmetric_active_cap(self):
        out = project_box_capped(np.array([2.0, 2.0, 2.0]), BoxSimplexCap(2.0, 3))
        assert np.abs(out - 2.0 / 3.0).max() < 1e-12

    def test_zero_vector(self):
        out = project_box_capped(np.zeros(5), BoxSimplexCap(3.0, 5))
        assert not out.any()

    def test_mixed_active_cap(self):
        # oracle-confirmed: box clip (1.0, 0.2) exceeds the budget, projection
        # lands on (1, 0)
        out = project_box_capped(np.array([1.5, 0.2]), BoxSimplexCap(1.0, 2))
        assert np.abs(out - np.array([1.0, 0.0])).max() < 1e-12

    def test_oracle_agreement_additional(self, rng):
        for _ in range(200):
            n = int(rng.integers(1, 9))
            z = rng.random(n) * rng.choice([0.5, 1.0, 3.0])
            k = float(rng.uniform(0.2, n))
            got = project_box_capped(z, BoxSimplexCap(k, n))
            want = oracle_project(z, k)
            assert np.abs(got - want).max() < 1e-8

    def test_negative_input_rejected(self):
        with pytest.raises(ValueError):
            project_box_capped(np.array([-0.1, 0.5]), BoxSimplexCap(1.0, 2))

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            project_box_capped(np.array([np.nan, 0.5]), BoxSimplexCap(1.0, 2))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            project_box_capped(np.zeros(3), BoxSimplexCap(1.0, 2))

    @settings(max_examples=150, deadline=None)
    @given(z=nonneg_vectors, k=budgets)
    def test_feasibility(self, z, k):
        cap = BoxSimplexCap(k, z.size)
        u = project_box_capped(z, cap)
        assert (u >= 0).all() and (u <= 1 + 1e-12).all()
        assert u.sum() <= k + 1e-9

    @settings(max_examples=150, deadline=None)
    @given(z=nonneg_vectors, k=budgets)
    def test_idempotent(self, z, k):
        cap = BoxSimplexCap(k, z.size)
        once = project_box_capped(z, cap)
        twice = project_box_capped(once, cap)
        assert np.abs(once - twice).max() < 1e-9

    @settings(max_examples=150, deadline=None)
    @given(
        z=st.tuples(nonneg_vectors, st.integers(0, 2**32 - 1)),
        k=budgets,
    )
    def test_nonexpansive(self, z, k):
        base, seed = z
        other = base + np.random.default_rng(seed).normal(0, 0.5, base.size)
        other = np.abs(other)
        cap = BoxSimplexCap(k, base.size)
        pa = project_box_capped(base, cap)
        pb = project_box_capped(other, cap)
        assert np.linalg.norm(pa - pb) <= np.linalg.norm(base - other) + 1e-9


class TestProjectSigned:
    def test_sign_wrap_of_symmetric_example(self):
        out = project_signed(np.array([-2.0, 2.0, -2.0]), BoxSimplexCap(2.0, 3))
        assert np.abs(out - np.array([-2.0 / 3.0, 2.0 / 3.0, -2.0 / 3.0])).max() < 1e-12

    def test_feasible_unchanged(self):
        z = np.array([-0.4, 0.3, 0.1])
        out = project_signed(z, BoxSimplexCap(2.0, 3))
        assert np.array_equal(out, z)

    def test_zero_maps_to_zero(self):
        out = project_signed(np.array([0.0, 5.0]), BoxSimplexCap(1.0, 2))
        assert out[0] == 0.0

    @settings(max_examples=150, deadline=None)
    @given(z=signed_vectors, k=budgets)
    def test_sign_equivariance(self, z, k):
        cap = BoxSimplexCap(k, z.size)
        assert np.abs(project_signed(-z, cap) + project_signed(z, cap)).max() < 1e-12

    @settings(max_examples=100, deadline=None)
    @given(z=signed_vectors, k=budgets)
    def test_exact_euclidean_projection(self, z, k):
        # the signed output must beat any feasible competitor in distance
        cap = BoxSimplexCap(k, z.size)
        u = project_signed(z, cap)
        rng = np.random.default_rng(0)
        du = float(np.linalg.norm(u - z))
        for _ in range(20):
            v = rng.uniform(-1, 1, z.size)
            s = np.abs(v).sum()
            if s > k:
                v *= k / s
            assert du <= np.linalg.norm(v - z) + 1e-9


class TestFindLambda:
    def test_symmetric_value(self):
        assert find_lambda(np.array([2.0, 2.0, 2.0]), 2.0) == pytest.approx(4.0 / 3.0, abs=1e-12)

    def test_linear_segment(self):
        assert find_lambda(np.array([1.0, 0.0]), 0.5) == pytest.approx(0.5, abs=1e-12)

    def test_residual_at_solution(self, rng):
        for _ in range(200):
            n = int(rng.integers(2, 12))
            z = rng.random(n) * 4.0
            k = float(rng.uniform(0.1, max(0.2, clip_sum(z, 0.0) - 0.05)))
            if clip_sum(z, 0.0) <= k:
                continue
            lam = find_lambda(z, k)
            assert abs(clip_sum(z, lam) - k) < 1e-9

    def test_monotone_in_budget(self, rng):
        for _ in range(50):
            z = rng.random(6) * 5.0
            if clip_sum(z, 0.0) <= 2.0:
                continue
            assert find_lambda(z, 1.0) >= find_lambda(z, 2.0)

    def test_inactive_cap_rejected(self):
        with pytest.raises(ValueError):
            find_lambda(np.array([0.1, 0.1]), 5.0)
