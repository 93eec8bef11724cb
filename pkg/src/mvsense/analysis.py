"""Sensing-range and accuracy analysis with Monte-Carlo validators.

Blockage probabilities come in three flavors:

* ``p_block_*_closed``   -- the first-order integrand lambda * l^2 * dist /
                            (Lx*Ly*Lz)^2 averaged over node and voxel
                            positions, kept exactly in its published shape
                            (its units are suspect; see the validators).
* ``p_block_*_exact``    -- position-averaged exact single-path blockage under
                            the scene occupancy model (counts candidate
                            blocker voxels along each path).
* ``p_block_empirical``  -- direct Monte-Carlo over sampled scenes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .occlusion import OcclusionParams, _hits_from_point, _hits_to_point, occlusion_matrices, sensing_range_mask
from .scene import NodeLayout, PriorParams, VoxelGrid


def mse(x_true, x_hat) -> float:
    """Mean squared error over all voxels."""
    a = np.asarray(x_true, dtype=float)
    b = np.asarray(x_hat, dtype=float)
    if a.shape != b.shape:
        raise ValueError("length mismatch between truth and estimate")
    return float(np.mean((a - b) ** 2))


def mse_in_range(x_true, x_hat, mask) -> float:
    """Mean squared error restricted to mask-true voxels."""
    m = np.asarray(mask, dtype=bool)
    if not m.any():
        raise ValueError("empty sensing-range mask")
    a = np.asarray(x_true, dtype=float)[m]
    b = np.asarray(x_hat, dtype=float)[m]
    return float(np.mean((a - b) ** 2))


def occluder_exceed_prob(prior: PriorParams) -> float:
    """P(coefficient > occluder threshold) for a truncated-slab draw."""
    std = np.sqrt(prior.slab_var)
    a = (0.0 - prior.slab_mean) / std
    b = (1.0 - prior.slab_mean) / std
    t = (prior.occluder_threshold - prior.slab_mean) / std
    if t >= b:
        return 0.0
    lo = max(a, t)
    denom = stats.norm.cdf(b) - stats.norm.cdf(a)
    return float((stats.norm.cdf(b) - stats.norm.cdf(lo)) / denom)


def _mean_distance_to_centers(grid: VoxelGrid, nodes: np.ndarray) -> float:
    centers = grid.centers
    total = 0.0
    chunk = max(1, 2_000_000 // max(centers.shape[0], 1))
    for i in range(0, nodes.shape[0], chunk):
        d = np.linalg.norm(nodes[i : i + chunk, None, :] - centers[None, :, :], axis=2)
        total += float(d.sum())
    return total / (nodes.shape[0] * centers.shape[0])


def _first_order_blockage(grid, sparsity, block_distance, sampler, n_draws, rng) -> float:
    if sparsity == 0.0 or block_distance == 0.0:
        return 0.0
    nodes = sampler(n_draws, rng)
    mean_dist = _mean_distance_to_centers(grid, np.asarray(nodes, dtype=float))
    volume = float(np.prod(grid.extents))
    p = sparsity * block_distance**2 * mean_dist / volume**2
    if p > 1.0:
        warnings.warn("first-order blockage probability exceeded 1; clamped", stacklevel=3)
        p = 1.0
    return p


def p_block_user_closed(grid: VoxelGrid, sparsity: float, block_distance: float, user_sampler, n_draws: int = 10_000, rng=None) -> float:
    """First-order user->voxel blockage probability, averaged over positions."""
    rng = rng or np.random.default_rng(0)
    return _first_order_blockage(grid, sparsity, block_distance, user_sampler, n_draws, rng)


def p_block_bs_closed(grid: VoxelGrid, sparsity: float, block_distance: float, bs_sampler, n_draws: int = 10_000, rng=None) -> float:
    """First-order voxel->antenna blockage probability, averaged over positions."""
    rng = rng or np.random.default_rng(0)
    return _first_order_blockage(grid, sparsity, block_distance, bs_sampler, n_draws, rng)


def _survival_curve(k_values: np.ndarray, occupancy, exceed_prob: float, n_voxels: int) -> np.ndarray:
    """P(no blocker among k candidate voxels) for each k."""
    kind, value = occupancy
    uniq, inv = np.unique(k_values, return_inverse=True)
    if kind == "rate":
        surv = (1.0 - value * exceed_prob) ** uniq
    elif kind == "count":
        n_occ = int(value)
        surv = np.empty(uniq.size)
        for i, k in enumerate(uniq):
            j = np.arange(0, min(int(k), n_occ) + 1)
            pmf = stats.hypergeom.pmf(j, n_voxels, n_occ, int(k))
            surv[i] = float(np.sum(pmf * (1.0 - exceed_prob) ** j))
    else:
        raise ValueError(f"unknown occupancy kind {kind!r}")
    return surv[inv]


def _exact_blockage(grid, occupancy, exceed_prob, block_distance, sampler, n_draws, rng, side) -> float:
    centers = grid.centers
    n_s = grid.n_voxels
    nodes = np.asarray(sampler(n_draws, rng), dtype=float)
    self_mask_km = np.eye(n_s, dtype=bool)
    total = 0.0
    for node in nodes:
        if side == "user":
            hits = _hits_from_point(node, centers, centers, block_distance, exclude=self_mask_km)
            counts = hits.sum(axis=0)
        else:
            hits = _hits_to_point(centers, node, centers, block_distance, exclude=self_mask_km)
            counts = hits.sum(axis=1)
        surv = _survival_curve(counts, occupancy, exceed_prob, n_s)
        total += float(np.mean(1.0 - surv))
    return total / nodes.shape[0]


def p_block_user_exact(grid, occupancy, exceed_prob, block_distance, user_sampler, n_draws: int = 200, rng=None) -> float:
    """Exact per-path user->voxel blockage probability under the occupancy model.

    ``occupancy`` is ("rate", lambda) or ("count", n); ``exceed_prob`` the
    probability an occupied voxel exceeds the blocker threshold.
    """
    rng = rng or np.random.default_rng(0)
    return _exact_blockage(grid, occupancy, exceed_prob, block_distance, user_sampler, n_draws, rng, "user")


def p_block_bs_exact(grid, occupancy, exceed_prob, block_distance, bs_sampler, n_draws: int = 200, rng=None) -> float:
    """Exact per-path voxel->antenna blockage probability under the occupancy model."""
    rng = rng or np.random.default_rng(0)
    return _exact_blockage(grid, occupancy, exceed_prob, block_distance, bs_sampler, n_draws, rng, "bs")


def p_block_empirical(scene_sampler, node_sampler, occ_params: OcclusionParams, trials: int, rng, side: str = "user"):
    """Monte-Carlo zero-entry fraction of one occlusion matrix side.

    Per trial one scene and one node are drawn and the full row (user side) or
    column (BS side) of path outcomes against all voxels is evaluated. Returns
    (estimate, stderr) with the standard error taken across trials.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials")
    if side not in ("user", "bs"):
        raise ValueError("side must be 'user' or 'bs'")
    fracs = np.empty(trials)
    for i in range(trials):
        field = scene_sampler(rng)
        node = np.asarray(node_sampler(1, rng), dtype=float).reshape(3)
        centers = field.grid.centers
        idx = np.flatnonzero(field.x > occ_params.coeff_threshold)
        if idx.size == 0:
            fracs[i] = 0.0
            continue
        excl_km = idx[:, None] == np.arange(field.grid.n_voxels)[None, :]
        if side == "user":
            hit = _hits_from_point(node, centers, centers[idx], occ_params.block_distance, exclude=excl_km)
            blocked = hit.any(axis=0)
        else:
            hit = _hits_to_point(centers, node, centers[idx], occ_params.block_distance, exclude=excl_km.T)
            blocked = hit.any(axis=1)
        fracs[i] = float(blocked.mean())
    est = float(fracs.mean())
    se = float(fracs.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    return est, se


def unsensed_counts(p_user: float, p_bs: float, n_users: int, n_bs: int, n_voxels: int, scheme: str) -> float:
    """Expected number of unsensable voxels by inclusion-exclusion.

    Single-BS ("con"): co-located antennas share one view, so the BS-side
    probability enters unexponentiated. Multi-BS ("dis"): independent BS
    views, p_bs raised to the number of BSs. The user term is always
    p_user^n_users.
    """
    if not (0.0 <= p_user <= 1.0 and 0.0 <= p_bs <= 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    pu = p_user**n_users
    if scheme == "con":
        pb = p_bs
    elif scheme == "dis":
        pb = p_bs**n_bs
    else:
        raise ValueError("scheme must be 'con' (single-BS) or 'dis' (multi-BS)")
    return n_voxels * (pu + pb - pu * pb)


def combined_blockage_prob(p_user: float, p_bs: float, n_voxels: int) -> float:
    """Zero probability of a combined occlusion entry: pu + pb - pu*pb/n_voxels."""
    if not (0.0 <= p_user <= 1.0 and 0.0 <= p_bs <= 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    p = p_user + p_bs - p_user * p_bs / n_voxels
    if p > 1.0:
        warnings.warn("combined blockage probability exceeded 1; clamped", stacklevel=2)
        p = 1.0
    return p


def signal_l1_radius(sparsity: float, slab_mean: float, n_voxels: int, n_unsensable: float) -> float:
    """Expected l1 mass of the in-range signal: lambda * mean * (N - N_unsensable)."""
    return sparsity * slab_mean * (n_voxels - n_unsensable)


def mse_bound(norm_const: float, radius: float, n_voxels: int, n_users: int, n_antennas: int) -> float:
    """Reconstruction error bound m * R^2 * log(N) / (N * N_u * N_R)."""
    if norm_const <= 0:
        raise ValueError("normalization constant must be positive")
    return norm_const * radius**2 * np.log(n_voxels) / (n_voxels * n_users * n_antennas)


def unsensable_empirical(scene_sampler, layout_sampler, occ_params: OcclusionParams, trials: int, rng):
    """Monte-Carlo unsensable-voxel counts over full sampled scenarios.

    Returns (mean, stderr, counts).
    """
    counts = np.empty(trials)
    for i in range(trials):
        field = scene_sampler(rng)
        layout = layout_sampler(rng)
        mats = occlusion_matrices(field, layout, occ_params)
        counts[i] = field.grid.n_voxels - int(sensing_range_mask(mats).sum())
    se = float(counts.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    return float(counts.mean()), se, counts


@dataclass
class RangeReport:
    """Blockage probabilities and unsensable-voxel counts for one geometry.

    ``*_closed`` fields hold the first-order published form; ``*_exact`` the
    occupancy-model evaluation; empirical fields carry Monte-Carlo estimates
    with standard errors. Count fields combine the per-path probabilities by
    inclusion-exclusion for the single-BS ("con") and multi-BS ("dis")
    schemes.
    """

    p_block_user_closed: float
    p_block_bs_closed: float
    p_block_user_exact: float
    p_block_bs_exact: float
    p_block_user_emp: float
    p_block_user_emp_se: float
    p_block_bs_emp: float
    p_block_bs_emp_se: float
    p_out_user: float
    p_out_bs_con: float
    p_out_bs_dis: float
    n_bar_con: float
    n_bar_dis: float
    n_bar_con_closed: float
    n_bar_dis_closed: float
    emp_unsensable_con: float
    emp_unsensable_con_se: float
    emp_unsensable_dis: float
    emp_unsensable_dis_se: float
    n_users: int
    n_bs_dis: int
    n_voxels: int

    CSV_FIELDS = (
        "p_block_user_closed,p_block_bs_closed,p_block_user_exact,p_block_bs_exact,"
        "p_block_user_emp,p_block_user_emp_se,p_block_bs_emp,p_block_bs_emp_se,"
        "p_out_user,p_out_bs_con,p_out_bs_dis,n_bar_con,n_bar_dis,"
        "n_bar_con_closed,n_bar_dis_closed,emp_unsensable_con,emp_unsensable_con_se,"
        "emp_unsensable_dis,emp_unsensable_dis_se,n_users,n_bs_dis,n_voxels"
    )

    def csv_row(self) -> str:
        return ",".join(repr(getattr(self, f)) for f in self.CSV_FIELDS.split(","))

    def summary(self) -> str:
        lines = [
            "sensing-range report",
            f"  per-path blockage, user side : closed {self.p_block_user_closed:.3e}  "
            f"exact {self.p_block_user_exact:.4f}  empirical {self.p_block_user_emp:.4f} "
            f"+/- {self.p_block_user_emp_se:.4f}",
            f"  per-path blockage, BS side   : closed {self.p_block_bs_closed:.3e}  "
            f"exact {self.p_block_bs_exact:.4f}  empirical {self.p_block_bs_emp:.4f} "
            f"+/- {self.p_block_bs_emp_se:.4f}",
            f"  all-user outage p^{self.n_users} = {self.p_out_user:.3e}",
            f"  unsensable voxels, single-BS : formula {self.n_bar_con:.2f}  "
            f"empirical {self.emp_unsensable_con:.2f} +/- {self.emp_unsensable_con_se:.2f}",
            f"  unsensable voxels, multi-BS  : formula {self.n_bar_dis:.2f}  "
            f"empirical {self.emp_unsensable_dis:.2f} +/- {self.emp_unsensable_dis_se:.2f}",
        ]
        return "\n".join(lines)


@dataclass
class BoundReport:
    """Error-bound radii and bound values for both schemes (up to the constant m)."""

    r_con: float
    r_dis: float
    bound_con: float
    bound_dis: float
    norm_const: float

    CSV_FIELDS = "r_con,r_dis,bound_con,bound_dis,norm_const"

    def csv_row(self) -> str:
        return ",".join(repr(getattr(self, f)) for f in self.CSV_FIELDS.split(","))

    def summary(self) -> str:
        return (
            "error-bound report\n"
            f"  l1 radius: single-BS {self.r_con:.3f}, multi-BS {self.r_dis:.3f}\n"
            f"  bound (m={self.norm_const:g}): single-BS {self.bound_con:.3e}, "
            f"multi-BS {self.bound_dis:.3e}"
        )
