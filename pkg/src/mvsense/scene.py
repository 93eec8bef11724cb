"""Voxel grid geometry, sparse scatterer fields, priors, and node placement."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigurationError

_AXES = ("x", "y", "z")


def _as_vec3(v) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class VoxelGrid:
    """Axis-aligned voxelization of a box-shaped sensing region.

    Flat voxel indices run x-fastest: ``i = ix + n_x * (iy + n_y * iz)``.
    Voxel centers sit at ``origin + ((ix+1/2)*lx, (iy+1/2)*ly, (iz+1/2)*lz)``.
    """

    origin: np.ndarray
    extents: np.ndarray
    voxel_sizes: np.ndarray
    shape: tuple[int, int, int]

    def __post_init__(self):
        object.__setattr__(self, "origin", _as_vec3(self.origin))
        object.__setattr__(self, "extents", _as_vec3(self.extents))
        object.__setattr__(self, "voxel_sizes", _as_vec3(self.voxel_sizes))
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        for arr in (self.origin, self.extents, self.voxel_sizes):
            arr.setflags(write=False)

    @property
    def n_voxels(self) -> int:
        nx, ny, nz = self.shape
        return nx * ny * nz

    @cached_property
    def centers(self) -> np.ndarray:
        """All voxel centers as an (n_voxels, 3) array, flat-index order."""
        idx = np.arange(self.n_voxels)
        coords = np.stack(self.grid_coords(idx), axis=-1)
        c = self.origin + (coords + 0.5) * self.voxel_sizes
        c.setflags(write=False)
        return c

    def grid_coords(self, flat_index):
        """Map flat index -> (ix, iy, iz); accepts arrays."""
        nx, ny, _ = self.shape
        i = np.asarray(flat_index)
        return i % nx, (i // nx) % ny, i // (nx * ny)

    def flat_index(self, ix, iy, iz):
        """Map integer coordinates -> flat index; accepts arrays."""
        nx, ny, _ = self.shape
        return np.asarray(ix) + nx * (np.asarray(iy) + ny * np.asarray(iz))


def build_grid(origin, extents, voxel_sizes) -> VoxelGrid:
    """Build a VoxelGrid, requiring each extent to divide evenly by its voxel size.

    Divisibility is checked to 1e-9 relative tolerance; violations raise
    ConfigurationError naming the axis.
    """
    origin = _as_vec3(origin)
    extents = _as_vec3(extents)
    sizes = _as_vec3(voxel_sizes)
    shape = []
    for axis in range(3):
        ext, size = extents[axis], sizes[axis]
        if ext <= 0 or size <= 0:
            raise ConfigurationError(
                f"scene.extents/{_AXES[axis]}: extent and voxel size must be positive"
            )
        n = round(ext / size)
        if n < 1 or abs(n * size - ext) > 1e-9 * abs(ext):
            raise ConfigurationError(
                f"scene.extents/{_AXES[axis]}: extent {ext} not divisible by voxel size {size}"
            )
        shape.append(n)
    return VoxelGrid(origin=origin, extents=extents, voxel_sizes=sizes, shape=tuple(shape))


def voxel_center(grid: VoxelGrid, flat_index: int) -> np.ndarray:
    """Center of one voxel by flat index."""
    i = int(flat_index)
    if not 0 <= i < grid.n_voxels:
        raise IndexError(f"voxel index {i} out of range [0, {grid.n_voxels})")
    return grid.centers[i].copy()


@dataclass(frozen=True)
class PriorParams:
    """Spike-and-slab prior on voxel scattering coefficients.

    A voxel is occupied with probability ``sparsity``; occupied voxels draw a
    coefficient from N(slab_mean, slab_var) (truncated to [0, 1] when sampling
    ground truth). ``occluder_threshold`` is the coefficient level above which
    a voxel is treated as a blocker; it defaults to slab_mean / 4.
    """

    sparsity: float
    slab_mean: float = 0.5
    slab_var: float = 0.04
    occluder_threshold: float | None = None
    noise_var: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.sparsity <= 1.0:
            raise ValueError(f"sparsity {self.sparsity} not in [0, 1]")
        if self.slab_var <= 0:
            raise ValueError("slab_var must be positive")
        if self.occluder_threshold is None:
            object.__setattr__(self, "occluder_threshold", self.slab_mean / 4.0)
        if self.occluder_threshold <= 0:
            raise ValueError("occluder_threshold must be positive")
        if self.noise_var is not None and self.noise_var < 0:
            raise ValueError("noise_var must be nonnegative")

    @property
    def moments(self) -> tuple[float, float]:
        """Mean and variance of the (untruncated) spike-and-slab coefficient."""
        m = self.sparsity * self.slab_mean
        v = self.sparsity * (self.slab_var + self.slab_mean**2) - m**2
        return m, v


@dataclass(frozen=True)
class ScatterField:
    """Ground-truth scattering coefficients over a grid; zeros mean empty voxels."""

    grid: VoxelGrid
    x: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.shape != (self.grid.n_voxels,):
            raise ValueError(
                f"field length {x.shape} does not match grid with {self.grid.n_voxels} voxels"
            )
        if np.any(x < 0) or np.any(x > 1):
            raise ValueError("scattering coefficients must lie in [0, 1]")
        x = x.copy()
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    @property
    def support_size(self) -> int:
        return int(np.count_nonzero(self.x))


def _sample_slab(prior: PriorParams, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw slab coefficients truncated to [0, 1] by rejection."""
    out = np.empty(size)
    filled = 0
    std = np.sqrt(prior.slab_var)
    for _ in range(1000):
        if filled >= size:
            break
        draw = rng.normal(prior.slab_mean, std, size=size - filled)
        keep = draw[(draw >= 0.0) & (draw <= 1.0)]
        out[filled : filled + keep.size] = keep
        filled += keep.size
    else:
        raise RuntimeError("slab rejection sampling failed; slab mass in [0,1] too small")
    return out


def sample_scene(grid: VoxelGrid, prior: PriorParams, scatterers, rng: np.random.Generator) -> ScatterField:
    """Sample a sparse ground-truth field.

    ``scatterers`` is either an integer count (uniform placement without
    replacement) or a float rate in [0, 1] (independent per-voxel occupancy).
    Deterministic given the generator state.
    """
    n = grid.n_voxels
    x = np.zeros(n)
    if isinstance(scatterers, (bool, np.bool_)):
        raise ValueError("scatterers must be an int count or float rate")
    if isinstance(scatterers, (int, np.integer)):
        count = int(scatterers)
        if count < 0 or count > n:
            raise ValueError(f"scatterer count {count} not in [0, {n}]")
        idx = rng.choice(n, size=count, replace=False) if count else np.empty(0, dtype=int)
    else:
        rate = float(scatterers)
        if not 0.0 <= rate <= 1.0:
            raise ValueError(f"scatterer rate {rate} not in [0, 1]")
        idx = np.flatnonzero(rng.random(n) < rate)
    if idx.size:
        x[idx] = _sample_slab(prior, idx.size, rng)
    return ScatterField(grid=grid, x=x)


@dataclass(frozen=True)
class NodeLayout:
    """User positions plus BS antenna positions tagged by owning BS."""

    users: np.ndarray       # (n_users, 3)
    bs_antennas: np.ndarray  # (n_antennas, 3)
    bs_ids: np.ndarray      # (n_antennas,) int, 0-based BS index

    def __post_init__(self):
        users = np.asarray(self.users, dtype=float).reshape(-1, 3)
        ants = np.asarray(self.bs_antennas, dtype=float).reshape(-1, 3)
        ids = np.asarray(self.bs_ids, dtype=int).reshape(-1)
        if users.shape[0] < 1:
            raise ValueError("layout needs at least one user")
        if ants.shape[0] < 1:
            raise ValueError("layout needs at least one BS antenna")
        if ids.shape[0] != ants.shape[0]:
            raise ValueError("every antenna needs exactly one BS id")
        for arr in (users, ants, ids):
            arr.setflags(write=False)
        object.__setattr__(self, "users", users)
        object.__setattr__(self, "bs_antennas", ants)
        object.__setattr__(self, "bs_ids", ids)

    @property
    def n_users(self) -> int:
        return self.users.shape[0]

    @property
    def n_antennas(self) -> int:
        return self.bs_antennas.shape[0]

    @property
    def n_bs(self) -> int:
        return int(np.unique(self.bs_ids).size)


def bs_array(center, array_shape: tuple[int, int], spacing: float) -> np.ndarray:
    """Uniform rectangular antenna array centered at ``center``.

    Rows step along z, columns along y (a vertical panel); a (k, 1) shape is a
    vertical pole. Returns (rows*cols, 3) positions.
    """
    center = _as_vec3(center)
    rows, cols = int(array_shape[0]), int(array_shape[1])
    if rows < 1 or cols < 1:
        raise ValueError("array shape entries must be >= 1")
    dz = (np.arange(rows) - (rows - 1) / 2.0) * spacing
    dy = (np.arange(cols) - (cols - 1) / 2.0) * spacing
    offsets = np.array([(0.0, y, z) for z in dz for y in dy])
    return center + offsets


def sample_shell_positions(grid: VoxelGrid, n: int, rng: np.random.Generator, margin: float = 1.0) -> np.ndarray:
    """Sample node positions around the region.

    Positions are uniform over the horizontal box extended by ``margin`` region
    widths on each side of x/y, rejected back out of the region footprint, with
    z uniform over the region height. Nodes therefore never coincide with voxel
    centers.
    """
    lo = grid.origin
    hi = grid.origin + grid.extents
    span = grid.extents
    out = np.empty((n, 3))
    for i in range(n):
        while True:
            px = rng.uniform(lo[0] - margin * span[0], hi[0] + margin * span[0])
            py = rng.uniform(lo[1] - margin * span[1], hi[1] + margin * span[1])
            if not (lo[0] <= px <= hi[0] and lo[1] <= py <= hi[1]):
                break
        out[i] = (px, py, rng.uniform(lo[2], hi[2]))
    return out


def sample_box_positions(low, high, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform positions in an axis-aligned box."""
    low = _as_vec3(low)
    high = _as_vec3(high)
    if np.any(high <= low):
        raise ValueError("box upper corner must exceed lower corner on every axis")
    return rng.uniform(low, high, size=(n, 3))
