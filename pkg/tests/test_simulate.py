import numpy as np
import pytest

from sparseloc import (
    FineImage,
    GridGeometry,
    PsfSpec,
    SimulationSpec,
    TubePhantom,
    UniformPhantom,
    apply_A,
    OperatorSpec,
    nm_to_fine_index,
    rebin_molecule_frames,
    simulate,
    sum_frames,
)
from sparseloc.simulate import FrameStack
from sparseloc.model import CoarseFrame, Molecule, MoleculeSet


@pytest.fixture
def geom():
    return GridGeometry(16, 4, 100.0)


@pytest.fixture
def psf(geom):
    return PsfSpec.from_fwhm(258.21, geom.fine_pixel_nm)


class TestSimulate:
    def test_mass_conservation_noiseless(self, geom, psf):
        spec = SimulationSpec(
            geom, psf, UniformPhantom(1, margin_fine_px=psf.kernel_radius_px),
            intensity_range=(100.0, 100.0), noise_sigma=0.0, frames=1, rng_seed=3,
        )
        stack, truth = simulate(spec)
        assert len(truth) == 1
        assert stack.frames[0].values.sum() == pytest.approx(100.0, rel=1e-6)

    def test_noise_only_statistics(self):
        geom = GridGeometry(64, 4, 100.0)
        psf = PsfSpec.from_fwhm(258.21, geom.fine_pixel_nm)
        spec = SimulationSpec(geom, psf, UniformPhantom(0), noise_sigma=2.0,
                              frames=1, rng_seed=9)
        stack, truth = simulate(spec)
        values = stack.frames[0].values
        assert len(truth) == 0
        assert abs(values.mean()) < 5 * 2.0 / 64
        assert values.std() == pytest.approx(2.0, rel=0.05)

    def test_deterministic(self, geom, psf):
        spec = SimulationSpec(geom, psf, UniformPhantom(5), frames=3, rng_seed=11)
        a_stack, a_truth = simulate(spec)
        b_stack, b_truth = simulate(spec)
        assert np.array_equal(a_stack.as_array(), b_stack.as_array())
        assert a_truth.molecules == b_truth.molecules

    def test_truth_on_pixel_centers(self, geom, psf):
        spec = SimulationSpec(geom, psf, UniformPhantom(10), frames=2, rng_seed=1)
        _, truth = simulate(spec)
        p = geom.fine_pixel_nm
        for m in truth:
            assert (m.x_nm / p - 0.5) == pytest.approx(round(m.x_nm / p - 0.5), abs=1e-9)
            assert (m.y_nm / p - 0.5) == pytest.approx(round(m.y_nm / p - 0.5), abs=1e-9)

    def test_off_grid_flag(self, geom, psf):
        spec = SimulationSpec(
            geom, psf, UniformPhantom(20, on_grid=False), frames=1, rng_seed=2
        )
        _, truth = simulate(spec)
        p = geom.fine_pixel_nm
        frac = [abs(m.x_nm / p - 0.5 - round(m.x_nm / p - 0.5)) for m in truth]
        assert max(frac) > 1e-3

    def test_forward_consistency(self, geom, psf):
        # noiseless frame equals the operator applied to the rasterized truth
        spec = SimulationSpec(geom, psf, UniformPhantom(6), noise_sigma=0.0,
                              frames=1, rng_seed=4)
        stack, truth = simulate(spec)
        n = geom.fine_size
        x = np.zeros((n, n))
        for m in truth:
            i, j = nm_to_fine_index(m.x_nm, m.y_nm, geom)
            x[i, j] += m.intensity
        op = OperatorSpec(geom, psf)
        expected = apply_A(FineImage(geom, x), op).values
        got = stack.frames[0].values
        assert np.abs(got - expected).max() <= 1e-6 * max(expected.max(), 1.0)

    def test_tube_phantom_in_bounds_and_deterministic(self, geom, psf):
        spec = SimulationSpec(geom, psf, TubePhantom(30, tube_count=4, width_nm=30.0),
                              frames=2, rng_seed=8)
        _, truth_a = simulate(spec)
        _, truth_b = simulate(spec)
        assert truth_a.molecules == truth_b.molecules
        fov = geom.fov_nm
        for m in truth_a:
            assert 0.0 <= m.x_nm <= fov and 0.0 <= m.y_nm <= fov

    def test_auto_noise_level(self, geom, psf):
        spec = SimulationSpec(geom, psf, UniformPhantom(3), noise_sigma=None,
                              frames=2, rng_seed=5)
        stack, _ = simulate(spec)
        clean = SimulationSpec(geom, psf, UniformPhantom(3), noise_sigma=0.0,
                               frames=2, rng_seed=5)
        clean_stack, _ = simulate(clean)
        diff = stack.as_array() - clean_stack.as_array()
        peak = clean_stack.as_array().max()
        assert diff.std() == pytest.approx(0.01 * peak, rel=0.1)


class TestSumFrames:
    def _stack_of(self, geom, arrays):
        frames = tuple(CoarseFrame(geom, a, frame_index=i) for i, a in enumerate(arrays))
        return FrameStack(frames, geom)

    def test_360_over_5_gives_72(self, geom):
        m = geom.coarse_size
        stack = self._stack_of(geom, [np.zeros((m, m))] * 360)
        assert len(sum_frames(stack, 5)) == 72

    def test_group_one_identity(self, geom, rng):
        m = geom.coarse_size
        stack = self._stack_of(geom, [rng.random((m, m)) for _ in range(3)])
        out = sum_frames(stack, 1)
        assert np.array_equal(out.as_array(), stack.as_array())

    def test_all_ones_sum_to_fives(self, geom):
        m = geom.coarse_size
        stack = self._stack_of(geom, [np.ones((m, m))] * 5)
        out = sum_frames(stack, 5)
        assert len(out) == 1
        assert np.array_equal(out.frames[0].values, np.full((m, m), 5.0))

    def test_remainder_rejected(self, geom):
        m = geom.coarse_size
        stack = self._stack_of(geom, [np.zeros((m, m))] * 7)
        with pytest.raises(ValueError):
            sum_frames(stack, 5)

    def test_remainder_kept_on_flag(self, geom):
        m = geom.coarse_size
        stack = self._stack_of(geom, [np.ones((m, m))] * 7)
        out = sum_frames(stack, 5, allow_partial=True)
        assert len(out) == 2
        assert out.frames[1].values[0, 0] == 2.0

    def test_rebin_molecule_frames(self, geom):
        mols = MoleculeSet(
            tuple(Molecule(50.0, 50.0, 1.0, f) for f in range(10)), geom
        )
        out = rebin_molecule_frames(mols, 5)
        assert [m.frame_index for m in out] == [0, 0, 0, 0, 0, 1, 1, 1, 1, 1]
