"""Line-of-sight blockage detection and occlusion matrix assembly.

A candidate blocker C occludes the segment from A to B when, with b = B - A
and c = C - A, all three strict inequalities hold:

    |c x b| / |b| < l        (C lies within distance l of the line)
    b . c > 0                (C is on B's side of A)
    |c . b| < |b|^2          (C projects before B)

Boundary cases (equalities) are non-blocking.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .scene import NodeLayout, ScatterField, VoxelGrid, _as_vec3


@dataclass(frozen=True)
class OcclusionParams:
    """Blockage detector settings: corridor half-width and blocker threshold."""

    block_distance: float
    coeff_threshold: float

    def __post_init__(self):
        if self.block_distance <= 0:
            raise ValueError("block_distance must be positive")
        if self.coeff_threshold <= 0:
            raise ValueError("coeff_threshold must be positive")

    def check_against_grid(self, grid: VoxelGrid) -> None:
        """Warn when block_distance falls outside [min voxel side, voxel diagonal]."""
        lo = float(np.min(grid.voxel_sizes))
        hi = float(np.linalg.norm(grid.voxel_sizes))
        if not lo <= self.block_distance <= hi:
            warnings.warn(
                f"block_distance {self.block_distance:.4g} outside the voxel-tied "
                f"bracket [{lo:.4g}, {hi:.4g}]",
                stacklevel=2,
            )


def default_block_distance(grid: VoxelGrid) -> float:
    """Half the voxel diagonal."""
    return 0.5 * float(np.linalg.norm(grid.voxel_sizes))


def default_params(grid: VoxelGrid, prior) -> OcclusionParams:
    return OcclusionParams(
        block_distance=default_block_distance(grid),
        coeff_threshold=prior.occluder_threshold,
    )


def blocks(a, b_point, c_point, block_distance: float) -> bool:
    """True iff the point at ``c_point`` blocks the segment from ``a`` to ``b_point``."""
    a = _as_vec3(a)
    b = _as_vec3(b_point) - a
    c = _as_vec3(c_point) - a
    bb = float(b @ b)
    if bb == 0.0:
        raise ValueError("zero-length segment: a and b_point coincide")
    cross = np.cross(c, b)
    d = np.sqrt(float(cross @ cross)) / np.sqrt(bb)
    dot = float(b @ c)
    return (d < block_distance) and (dot > 0.0) and (abs(dot) < bb)


def _hits_from_point(start, ends, blockers, block_distance, exclude=None):
    """Vectorized blockage of segments start->ends[m] by blockers[k].

    Returns a boolean (k, m) hit matrix. ``exclude`` is an optional (k, m)
    boolean mask of (blocker, segment) pairs to ignore. Uses the Lagrange
    identity |c x b|^2 = |c|^2 |b|^2 - (c.b)^2; agrees with blocks() away from
    measure-zero boundaries.
    """
    start = np.asarray(start, dtype=float)
    b = np.asarray(ends, dtype=float) - start            # (m, 3)
    c = np.asarray(blockers, dtype=float) - start        # (k, 3)
    bb = np.einsum("md,md->m", b, b)                     # (m,)
    if np.any(bb == 0.0):
        raise ValueError("zero-length segment in blockage test")
    dot = c @ b.T                                        # (k, m)
    cc = np.einsum("kd,kd->k", c, c)                     # (k,)
    d2 = cc[:, None] - dot**2 / bb[None, :]
    hit = (d2 < block_distance**2) & (dot > 0.0) & (dot < bb[None, :])
    if exclude is not None:
        hit &= ~exclude
    return hit


def _hits_to_point(starts, end, blockers, block_distance, exclude=None):
    """Vectorized blockage of segments starts[m]->end by blockers[k].

    Returns a boolean (m, k) hit matrix; ``exclude`` has shape (m, k).
    """
    starts = np.asarray(starts, dtype=float)
    end = np.asarray(end, dtype=float)
    b = end - starts                                     # (m, 3)
    c = np.asarray(blockers, dtype=float)[None, :, :] - starts[:, None, :]  # (m, k, 3)
    bb = np.einsum("md,md->m", b, b)
    if np.any(bb == 0.0):
        raise ValueError("zero-length segment in blockage test")
    dot = np.einsum("mkd,md->mk", c, b)
    cc = np.einsum("mkd,mkd->mk", c, c)
    d2 = cc - dot**2 / bb[:, None]
    hit = (d2 < block_distance**2) & (dot > 0.0) & (dot < bb[:, None])
    if exclude is not None:
        hit &= ~exclude
    return hit


def path_clear(field: ScatterField, a, b, params: OcclusionParams, exclude=frozenset()) -> bool:
    """True iff no above-threshold voxel outside ``exclude`` blocks segment a->b."""
    idx = np.flatnonzero(field.x > params.coeff_threshold)
    if exclude:
        idx = idx[~np.isin(idx, np.fromiter(exclude, dtype=int))]
    if idx.size == 0:
        return True
    hits = _hits_from_point(a, np.asarray(b, dtype=float)[None, :], field.grid.centers[idx], params.block_distance)
    return not bool(hits.any())


@dataclass(frozen=True)
class OcclusionMatrices:
    """Binary visibility matrices: user->voxel rows and voxel->antenna columns.

    Entry 1 means the path is clear, 0 blocked. The combined per-antenna matrix
    is the elementwise product ``v_user * v_bs[:, r]``.
    """

    v_user: np.ndarray  # (n_users, n_voxels) uint8
    v_bs: np.ndarray    # (n_voxels, n_antennas) uint8

    def __post_init__(self):
        vu = np.ascontiguousarray(self.v_user, dtype=np.uint8)
        vb = np.ascontiguousarray(self.v_bs, dtype=np.uint8)
        if vu.max(initial=0) > 1 or vb.max(initial=0) > 1:
            raise ValueError("occlusion matrix entries must be 0 or 1")
        vu.setflags(write=False)
        vb.setflags(write=False)
        object.__setattr__(self, "v_user", vu)
        object.__setattr__(self, "v_bs", vb)

    def combined(self, antenna: int) -> np.ndarray:
        """Per-antenna combined matrix V(r) with shape (n_users, n_voxels)."""
        return self.v_user * self.v_bs[:, antenna][None, :]

    def stacked(self) -> np.ndarray:
        """All combined matrices stacked antenna-major: row r*n_users + u."""
        n_u, n_s = self.v_user.shape
        n_r = self.v_bs.shape[1]
        out = np.empty((n_u * n_r, n_s), dtype=np.uint8)
        for r in range(n_r):
            out[r * n_u : (r + 1) * n_u] = self.combined(r)
        return out

    def packed(self) -> dict[str, np.ndarray]:
        """Bit-packed copies for compact export."""
        return {"v_user": np.packbits(self.v_user, axis=1), "v_bs": np.packbits(self.v_bs, axis=1)}

    def write_zero_entries(self, path) -> None:
        """CSV of blocked-path coordinates for debugging."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["matrix", "row", "col"])
            for r, c in zip(*np.nonzero(self.v_user == 0)):
                w.writerow(["user_voxel", int(r), int(c)])
            for r, c in zip(*np.nonzero(self.v_bs == 0)):
                w.writerow(["voxel_antenna", int(r), int(c)])


def occlusion_matrices_from_values(grid: VoxelGrid, values, layout: NodeLayout, params: OcclusionParams) -> OcclusionMatrices:
    """Build occlusion matrices from raw coefficient values (no [0,1] check).

    Used both for ground-truth fields and for solver estimates, which may fall
    slightly outside [0, 1]. A voxel is a blocker when its value exceeds the
    threshold; a voxel never blocks its own paths.
    """
    centers = grid.centers
    n_s = grid.n_voxels
    values = np.asarray(values, dtype=float)
    blocker_idx = np.flatnonzero(values > params.coeff_threshold)
    blockers = centers[blocker_idx]
    v_user = np.ones((layout.n_users, n_s), dtype=np.uint8)
    v_bs = np.ones((n_s, layout.n_antennas), dtype=np.uint8)
    if blocker_idx.size:
        self_mask_km = blocker_idx[:, None] == np.arange(n_s)[None, :]  # (k, n_s)
        for u in range(layout.n_users):
            hit = _hits_from_point(layout.users[u], centers, blockers, params.block_distance, exclude=self_mask_km)
            v_user[u] = (~hit.any(axis=0)).astype(np.uint8)
        self_mask_mk = self_mask_km.T  # (n_s, k)
        for r in range(layout.n_antennas):
            hit = _hits_to_point(centers, layout.bs_antennas[r], blockers, params.block_distance, exclude=self_mask_mk)
            v_bs[:, r] = (~hit.any(axis=1)).astype(np.uint8)
    return OcclusionMatrices(v_user=v_user, v_bs=v_bs)


def occlusion_matrices(field: ScatterField, layout: NodeLayout, params: OcclusionParams) -> OcclusionMatrices:
    """Occlusion matrices of a ground-truth field for a given layout."""
    return occlusion_matrices_from_values(field.grid, field.x, layout, params)


def sensing_range_mask(mats: OcclusionMatrices) -> np.ndarray:
    """Per-voxel flag: reachable by at least one user AND at least one antenna."""
    user_ok = mats.v_user.any(axis=0)
    bs_ok = mats.v_bs.any(axis=1)
    return user_ok & bs_ok
