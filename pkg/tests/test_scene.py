import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

import mvsense as mv
from mvsense.errors import ConfigurationError
from mvsense.scene import sample_box_positions


class TestBuildGrid:
    def test_paper_scale_voxel_count(self):
        grid = mv.build_grid([0, 0, 0], [5, 5, 5], [0.5, 0.5, 0.5])
        assert grid.n_voxels == 1000
        assert grid.shape == (10, 10, 10)

    def test_single_voxel(self):
        grid = mv.build_grid([1, 2, 3], [1, 1, 1], [1, 1, 1])
        assert grid.n_voxels == 1
        np.testing.assert_allclose(grid.centers[0], [1.5, 2.5, 3.5])

    def test_index_order_x_fastest(self):
        grid = mv.build_grid([0, 0, 0], [2, 1, 1], [0.5, 1, 1])
        ix, iy, iz = grid.grid_coords(np.arange(4))
        np.testing.assert_array_equal(ix, [0, 1, 2, 3])
        np.testing.assert_array_equal(iy, [0, 0, 0, 0])
        np.testing.assert_array_equal(iz, [0, 0, 0, 0])

    def test_non_divisible_extent_names_axis(self):
        with pytest.raises(ConfigurationError, match="y"):
            mv.build_grid([0, 0, 0], [2, 1.7, 1], [0.5, 0.5, 0.5])

    def test_centers_inside_region(self, paper_grid):
        lo = paper_grid.origin
        hi = paper_grid.origin + paper_grid.extents
        c = paper_grid.centers
        assert np.all(c > lo) and np.all(c < hi)


class TestVoxelCenter:
    def test_first_center(self, paper_grid):
        np.testing.assert_allclose(mv.voxel_center(paper_grid, 0), [0.25, 0.25, 0.25])

    def test_second_center_steps_in_x(self, paper_grid):
        np.testing.assert_allclose(mv.voxel_center(paper_grid, 1), [0.75, 0.25, 0.25])

    def test_last_center(self, paper_grid):
        np.testing.assert_allclose(mv.voxel_center(paper_grid, 999), [4.75, 4.75, 4.75])

    def test_out_of_range(self, paper_grid):
        with pytest.raises(IndexError):
            mv.voxel_center(paper_grid, 1000)

    @given(st.integers(min_value=0, max_value=23))
    @settings(max_examples=60, deadline=None)
    def test_round_trip(self, i):
        grid = mv.build_grid([0, 0, 0], [1.5, 2.0, 1.0], [0.5, 0.5, 0.5])
        ix, iy, iz = grid.grid_coords(i)
        assert grid.flat_index(ix, iy, iz) == i


class TestPriorParams:
    def test_default_threshold_is_quarter_mean(self):
        p = mv.PriorParams(sparsity=0.1, slab_mean=0.6)
        assert p.occluder_threshold == pytest.approx(0.15)

    def test_moments(self):
        p = mv.PriorParams(sparsity=0.2, slab_mean=0.5, slab_var=0.04)
        m, v = p.moments
        assert m == pytest.approx(0.1)
        assert v == pytest.approx(0.2 * (0.04 + 0.25) - 0.01)

    def test_invalid_sparsity(self):
        with pytest.raises(ValueError):
            mv.PriorParams(sparsity=1.5)

    def test_invalid_slab_var(self):
        with pytest.raises(ValueError):
            mv.PriorParams(sparsity=0.5, slab_var=0.0)


class TestSampleScene:
    def test_zero_count_gives_empty_field(self, paper_grid, default_prior, rng):
        field = mv.sample_scene(paper_grid, default_prior, 0, rng)
        assert field.support_size == 0

    def test_exact_count_and_range(self, paper_grid, default_prior):
        rng = np.random.default_rng(7)
        field = mv.sample_scene(paper_grid, default_prior, 50, rng)
        assert field.support_size == 50
        nz = field.x[field.x > 0]
        assert np.all(nz >= 0) and np.all(nz <= 1)

    def test_degenerate_slab_concentrates_at_mean(self, paper_grid):
        prior = mv.PriorParams(sparsity=1.0, slab_mean=0.5, slab_var=1e-12)
        field = mv.sample_scene(paper_grid, prior, 1.0, np.random.default_rng(0))
        np.testing.assert_allclose(field.x, 0.5, atol=1e-4)

    def test_count_exceeding_voxels_rejected(self, small_grid, default_prior, rng):
        with pytest.raises(ValueError):
            mv.sample_scene(small_grid, default_prior, small_grid.n_voxels + 1, rng)

    def test_seed_determinism(self, paper_grid, default_prior):
        f1 = mv.sample_scene(paper_grid, default_prior, 50, np.random.default_rng(123))
        f2 = mv.sample_scene(paper_grid, default_prior, 50, np.random.default_rng(123))
        np.testing.assert_array_equal(f1.x, f2.x)

    def test_rate_mode_counts_plausible(self, paper_grid, default_prior):
        rng = np.random.default_rng(5)
        field = mv.sample_scene(paper_grid, default_prior, 0.05, rng)
        # Binomial(1000, 0.05) within 5 sigma
        assert 20 <= field.support_size <= 85

    def test_truncated_slab_mean(self, paper_grid):
        # asymmetric slab so truncation shifts the mean
        prior = mv.PriorParams(sparsity=1.0, slab_mean=0.15, slab_var=0.04)
        rng = np.random.default_rng(11)
        draws = []
        for _ in range(10):
            draws.append(mv.sample_scene(paper_grid, prior, 1.0, rng).x)
        draws = np.concatenate(draws)
        sd = 0.2
        a, b = (0 - 0.15) / sd, (1 - 0.15) / sd
        expected = stats.truncnorm.mean(a, b, loc=0.15, scale=sd)
        stderr = draws.std(ddof=1) / np.sqrt(draws.size)
        assert abs(draws.mean() - expected) < 3 * stderr


class TestScatterField:
    def test_rejects_out_of_range_coefficients(self, small_grid):
        x = np.zeros(small_grid.n_voxels)
        x[0] = 1.2
        with pytest.raises(ValueError):
            mv.ScatterField(grid=small_grid, x=x)

    def test_rejects_wrong_length(self, small_grid):
        with pytest.raises(ValueError):
            mv.ScatterField(grid=small_grid, x=np.zeros(3))


class TestNodeLayout:
    def test_antenna_bs_id_mismatch(self):
        with pytest.raises(ValueError):
            mv.NodeLayout(users=[[0, 0, 0]], bs_antennas=[[1, 1, 1], [2, 2, 2]], bs_ids=[0])

    def test_counts(self):
        lay = mv.NodeLayout(
            users=[[0, 0, 0], [1, 0, 0]],
            bs_antennas=[[5, 0, 0], [5, 0.01, 0], [9, 0, 0]],
            bs_ids=[0, 0, 1],
        )
        assert (lay.n_users, lay.n_antennas, lay.n_bs) == (2, 3, 2)


class TestBsArray:
    def test_shape_and_centering(self):
        arr = mv.bs_array([1, 2, 3], (5, 5), 0.005)
        assert arr.shape == (25, 3)
        np.testing.assert_allclose(arr.mean(axis=0), [1, 2, 3])
        assert np.ptp(arr[:, 0]) == 0  # panel is a y-z plane

    def test_pole_spacing(self):
        arr = mv.bs_array([0, 0, 10], (5, 1), 0.005)
        dz = np.diff(np.sort(arr[:, 2]))
        np.testing.assert_allclose(dz, 0.005)


class TestPlacementSamplers:
    def test_shell_positions_outside_footprint(self, paper_grid, rng):
        pts = mv.sample_shell_positions(paper_grid, 200, rng)
        inside_xy = (
            (pts[:, 0] >= 0) & (pts[:, 0] <= 5) & (pts[:, 1] >= 0) & (pts[:, 1] <= 5)
        )
        assert not inside_xy.any()
        assert np.all((pts[:, 2] >= 0) & (pts[:, 2] <= 5))
        assert np.all(pts[:, 0] >= -5) and np.all(pts[:, 0] <= 10)

    def test_box_positions_bounds(self, rng):
        pts = sample_box_positions([0, 0, 0], [1, 2, 3], 50, rng)
        assert np.all(pts >= 0) and np.all(pts <= [1, 2, 3])
