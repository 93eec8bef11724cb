import numpy as np
import pytest

import mvsense as mv
from mvsense import analysis


class TestMse:
    def test_perfect_estimate(self):
        x = np.linspace(0, 1, 10)
        assert mv.mse(x, x) == 0.0

    def test_single_entry_error(self):
        x = np.zeros(1000)
        x[0] = 1.0
        assert mv.mse(x, np.zeros(1000)) == pytest.approx(1e-3)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            mv.mse(np.zeros(3), np.zeros(4))

    def test_in_range_subset(self):
        x = np.array([1.0, 0.0, 0.5, 0.0])
        xh = np.array([0.0, 0.0, 0.5, 0.0])
        mask = np.array([False, True, True, True])
        assert mv.mse_in_range(x, xh, mask) == 0.0
        assert mv.mse(x, xh) == pytest.approx(0.25)

    def test_empty_mask(self):
        with pytest.raises(ValueError):
            mv.mse_in_range(np.zeros(3), np.zeros(3), np.zeros(3, dtype=bool))

    def test_full_range_at_least_in_range_with_prior_fallback(self):
        # out-of-range voxels estimated at the prior mean while truth is nonzero
        x = np.zeros(100)
        x[:10] = 0.5  # out-of-range scatterers
        xh = np.zeros(100)
        xh[:10] = 0.025
        mask = np.ones(100, dtype=bool)
        mask[:10] = False
        assert mv.mse(x, xh) >= mv.mse_in_range(x, xh, mask)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(0, 1, 50)
        xh = rng.uniform(0, 1, 50)
        perm = rng.permutation(50)
        assert mv.mse(x, xh) == pytest.approx(mv.mse(x[perm], xh[perm]))


class TestFirstOrderBlockage:
    def test_zero_sparsity(self, paper_grid, rng):
        sampler = lambda n, r: mv.sample_shell_positions(paper_grid, n, r)
        assert mv.p_block_user_closed(paper_grid, 0.0, 0.4, sampler, 100, rng) == 0.0

    def test_zero_corridor_width(self, paper_grid, rng):
        sampler = lambda n, r: mv.sample_shell_positions(paper_grid, n, r)
        assert mv.p_block_bs_closed(paper_grid, 0.05, 0.0, sampler, 100, rng) == 0.0

    def test_published_form_value(self, paper_grid, rng):
        # lambda * l^2 * mean_dist / volume^2 with volume = 125 m^3
        sampler = lambda n, r: mv.sample_shell_positions(paper_grid, n, r)
        p = mv.p_block_user_closed(paper_grid, 0.05, 0.433, sampler, 2000, rng)
        nodes = mv.sample_shell_positions(paper_grid, 2000, np.random.default_rng(20240))
        d = np.linalg.norm(nodes[:, None, :] - paper_grid.centers[None, :, :], axis=2).mean()
        assert p == pytest.approx(0.05 * 0.433**2 * d / 125.0**2, rel=0.05)

    def test_deterministic_given_rng(self, paper_grid):
        sampler = lambda n, r: mv.sample_shell_positions(paper_grid, n, r)
        p1 = mv.p_block_user_closed(paper_grid, 0.05, 0.4, sampler, 500, np.random.default_rng(3))
        p2 = mv.p_block_user_closed(paper_grid, 0.05, 0.4, sampler, 500, np.random.default_rng(3))
        assert p1 == p2


class TestExactBlockage:
    def test_zero_rate(self, paper_grid, rng):
        sampler = lambda n, r: mv.sample_shell_positions(paper_grid, n, r)
        p = mv.p_block_user_exact(paper_grid, ("rate", 0.0), 1.0, 0.4, sampler, 10, rng)
        assert p == 0.0

    def test_matches_empirical_within_3_sigma(self, paper_grid):
        # the occupancy-model evaluation should track scene-sampled Monte-Carlo
        prior = mv.PriorParams(sparsity=0.05)
        occp = mv.OcclusionParams(
            block_distance=mv.default_block_distance(paper_grid),
            coeff_threshold=prior.occluder_threshold,
        )
        q = analysis.occluder_exceed_prob(prior)
        sampler = lambda n, r: mv.sample_shell_positions(paper_grid, n, r)
        p_exact = mv.p_block_user_exact(
            paper_grid, ("rate", 0.05), q, occp.block_distance, sampler, 60, np.random.default_rng(1)
        )
        scene_sampler = lambda r: mv.sample_scene(paper_grid, prior, 0.05, r)
        p_emp, se = mv.p_block_empirical(
            scene_sampler, sampler, occp, 600, np.random.default_rng(2), side="user"
        )
        assert abs(p_exact - p_emp) < 3 * se + 0.01

    def test_count_occupancy_close_to_rate(self, paper_grid, rng):
        sampler = lambda n, r: mv.sample_shell_positions(paper_grid, n, r)
        p_rate = mv.p_block_user_exact(paper_grid, ("rate", 0.05), 0.9, 0.43, sampler, 30, np.random.default_rng(5))
        p_count = mv.p_block_user_exact(paper_grid, ("count", 50), 0.9, 0.43, sampler, 30, np.random.default_rng(5))
        assert p_count == pytest.approx(p_rate, rel=0.05)


class TestOccluderExceedProb:
    def test_default_threshold_mostly_exceeded(self):
        prior = mv.PriorParams(sparsity=0.1, slab_mean=0.5, slab_var=0.04)
        q = analysis.occluder_exceed_prob(prior)
        assert 0.9 < q < 1.0

    def test_threshold_above_slab_support(self):
        prior = mv.PriorParams(sparsity=0.1, slab_mean=0.5, slab_var=0.01, occluder_threshold=2.0)
        assert analysis.occluder_exceed_prob(prior) == 0.0


class TestEmpiricalBlockage:
    def test_empty_scene_zero(self, paper_grid):
        prior = mv.PriorParams(sparsity=0.1)
        occp = mv.OcclusionParams(block_distance=0.4, coeff_threshold=prior.occluder_threshold)
        scene_sampler = lambda r: mv.ScatterField(grid=paper_grid, x=np.zeros(paper_grid.n_voxels))
        node_sampler = lambda n, r: mv.sample_shell_positions(paper_grid, n, r)
        p, se = mv.p_block_empirical(scene_sampler, node_sampler, occp, 100, np.random.default_rng(0))
        assert p == 0.0 and se == 0.0

    def test_wall_scene_fully_blocked(self):
        grid = mv.build_grid([0, 0, 0], [2, 2, 2], [0.5, 0.5, 0.5])
        ix, _, _ = grid.grid_coords(np.arange(grid.n_voxels))
        x = np.zeros(grid.n_voxels)
        x[ix == 2] = 1.0
        occp = mv.OcclusionParams(block_distance=0.45, coeff_threshold=0.125)
        scene_sampler = lambda r: mv.ScatterField(grid=grid, x=x)
        # users on the far +x side; every path to the x<1 half crosses the wall
        node_sampler = lambda n, r: np.array([[4.0, 1.01, 1.02]] * n)
        p, _ = mv.p_block_empirical(scene_sampler, node_sampler, occp, 100, np.random.default_rng(0))
        left_half_fraction = (ix < 2).mean()
        assert p >= left_half_fraction * 0.95

    def test_minimum_trials_enforced(self, paper_grid, rng):
        prior = mv.PriorParams(sparsity=0.1)
        occp = mv.OcclusionParams(block_distance=0.4, coeff_threshold=0.125)
        with pytest.raises(ValueError):
            mv.p_block_empirical(lambda r: None, lambda n, r: None, occp, 50, rng)

    def test_deterministic(self, paper_grid):
        prior = mv.PriorParams(sparsity=0.05)
        occp = mv.OcclusionParams(block_distance=0.43, coeff_threshold=prior.occluder_threshold)
        scene_sampler = lambda r: mv.sample_scene(paper_grid, prior, 20, r)
        node_sampler = lambda n, r: mv.sample_shell_positions(paper_grid, n, r)
        p1, _ = mv.p_block_empirical(scene_sampler, node_sampler, occp, 120, np.random.default_rng(7))
        p2, _ = mv.p_block_empirical(scene_sampler, node_sampler, occp, 120, np.random.default_rng(7))
        assert p1 == p2


class TestUnsensedCounts:
    def test_no_blockage(self):
        assert mv.unsensed_counts(0.0, 0.0, 10, 3, 1000, "con") == 0.0

    def test_fully_user_blind(self):
        assert mv.unsensed_counts(1.0, 0.3, 10, 1, 1000, "con") == pytest.approx(1000.0)

    def test_multi_bs_below_single(self):
        n_con = mv.unsensed_counts(0.3, 0.3, 20, 5, 1000, "con")
        n_dis = mv.unsensed_counts(0.3, 0.3, 20, 5, 1000, "dis")
        assert n_dis < n_con

    def test_single_formula_value(self):
        # N * (pu^Nu + pb - pu^Nu * pb)
        pu, pb = 0.5, 0.4
        expected = 1000 * (pu**3 + pb - pu**3 * pb)
        assert mv.unsensed_counts(pu, pb, 3, 1, 1000, "con") == pytest.approx(expected)

    def test_outage_monotone_in_views(self):
        vals_u = [mv.unsensed_counts(0.4, 0.0, n, 1, 1000, "con") for n in (1, 5, 10, 20)]
        assert all(b < a for a, b in zip(vals_u, vals_u[1:]))
        vals_b = [mv.unsensed_counts(0.0, 0.4, 5, n, 1000, "dis") for n in (1, 2, 4, 8)]
        assert all(b < a for a, b in zip(vals_b, vals_b[1:]))

    def test_bad_scheme(self):
        with pytest.raises(ValueError):
            mv.unsensed_counts(0.1, 0.1, 2, 2, 100, "both")


class TestCombinedBlockageProb:
    def test_zero_inputs(self):
        assert mv.combined_blockage_prob(0.0, 0.0, 1000) == 0.0

    def test_bs_free_reduces_to_user(self):
        assert mv.combined_blockage_prob(0.37, 0.0, 1000) == pytest.approx(0.37)

    def test_large_voxel_count_limit(self):
        p = mv.combined_blockage_prob(0.3, 0.4, 10**9)
        assert p == pytest.approx(0.7, rel=1e-6)

    def test_formula(self):
        assert mv.combined_blockage_prob(0.5, 0.5, 10) == pytest.approx(0.5 + 0.5 - 0.025)


class TestMseBound:
    def test_zero_radius(self):
        assert mv.mse_bound(1.0, 0.0, 1000, 20, 25) == 0.0

    def test_antenna_scaling(self):
        b1 = mv.mse_bound(1.0, 3.0, 1000, 20, 25)
        b2 = mv.mse_bound(1.0, 3.0, 1000, 20, 50)
        assert b2 == pytest.approx(b1 / 2)

    def test_radius_ordering_implies_bound_ordering(self):
        n_con = mv.unsensed_counts(0.4, 0.4, 20, 5, 1000, "con")
        n_dis = mv.unsensed_counts(0.4, 0.4, 20, 5, 1000, "dis")
        r_con = analysis.signal_l1_radius(0.05, 0.5, 1000, n_con)
        r_dis = analysis.signal_l1_radius(0.05, 0.5, 1000, n_dis)
        assert r_dis >= r_con
        assert mv.mse_bound(1.0, r_dis, 1000, 20, 25) >= mv.mse_bound(1.0, r_con, 1000, 20, 25)

    def test_invalid_constant(self):
        with pytest.raises(ValueError):
            mv.mse_bound(0.0, 1.0, 10, 2, 2)


class TestReports:
    def test_csv_row_field_count(self):
        rep = analysis.RangeReport(
            *[0.1] * 19, n_users=20, n_bs_dis=5, n_voxels=1000
        )
        assert len(rep.csv_row().split(",")) == len(rep.CSV_FIELDS.split(","))
        assert "sensing-range report" in rep.summary()

    def test_bound_report_summary(self):
        rep = analysis.BoundReport(r_con=1.0, r_dis=2.0, bound_con=0.1, bound_dis=0.4, norm_const=1.0)
        assert "error-bound report" in rep.summary()
        assert len(rep.csv_row().split(",")) == 5
