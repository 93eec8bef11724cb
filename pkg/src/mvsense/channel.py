"""Free-space channel synthesis, occluded multipath stacking, and observation.

The single-bounce channel seen at antenna r is H_S(r) = [H(r) * V(r)] x where
H(r) = H_uv diag(H_va[:, r]) is the per-antenna free-space product, V(r) the
combined occlusion matrix, and x the real scattering coefficients. Complex
measurements are re-embedded as interleaved real rows for the solvers.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .occlusion import OcclusionMatrices
from .scene import NodeLayout, ScatterField, VoxelGrid

SPEED_OF_LIGHT = 299_792_458.0


def free_space_coeff(distance, carrier_hz):
    """Free-space coefficient alpha * exp(j*phi).

    alpha = wavelength / (4 pi d), phi = -2 pi d / wavelength. Accepts arrays.
    """
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0):
        raise ValueError("free-space distance must be positive (coincident nodes?)")
    wavelength = SPEED_OF_LIGHT / float(carrier_hz)
    amp = wavelength / (4.0 * np.pi * d)
    phase = -2.0 * np.pi * d / wavelength
    out = amp * np.exp(1j * phase)
    return complex(out) if np.ndim(distance) == 0 else out


@dataclass(frozen=True)
class ChannelEnsemble:
    """All channel pieces for one scene/layout draw.

    ``h_free_stacked`` is the antenna-major stacked free-space matrix without
    occlusion (the matrix the solvers know); ``h_multipath`` the true occluded
    measurement vector, rows r*n_users + u.
    """

    h_user_voxel: np.ndarray   # (n_users, n_voxels) complex
    h_voxel_ant: np.ndarray    # (n_voxels, n_antennas) complex
    occlusion: OcclusionMatrices
    h_free_stacked: np.ndarray  # (n_meas, n_voxels) complex
    h_multipath: np.ndarray     # (n_meas,) complex
    carrier_hz: float
    n_users: int
    n_antennas: int
    h_observed: np.ndarray | None = None
    noise_var: float | None = None

    @property
    def n_measurements(self) -> int:
        return self.n_users * self.n_antennas

    def free_space(self, antenna: int) -> np.ndarray:
        """Per-antenna free-space product H(r), shape (n_users, n_voxels)."""
        return self.h_user_voxel * self.h_voxel_ant[:, antenna][None, :]


def build_channels(
    grid: VoxelGrid,
    field: ScatterField,
    layout: NodeLayout,
    occ: OcclusionMatrices,
    carrier_hz: float,
) -> ChannelEnsemble:
    """Synthesize hop matrices and the occluded multipath vector."""
    centers = grid.centers
    d_uv = np.linalg.norm(layout.users[:, None, :] - centers[None, :, :], axis=2)
    d_va = np.linalg.norm(centers[:, None, :] - layout.bs_antennas[None, :, :], axis=2)
    if np.any(d_uv <= 0) or np.any(d_va <= 0):
        raise ValueError("a node coincides with a voxel center")
    h_uv = free_space_coeff(d_uv, carrier_hz)
    h_va = free_space_coeff(d_va, carrier_hz)

    n_u, n_r = layout.n_users, layout.n_antennas
    n_s = grid.n_voxels
    h_free = np.empty((n_u * n_r, n_s), dtype=complex)
    h_multi = np.empty(n_u * n_r, dtype=complex)
    for r in range(n_r):
        block = h_uv * h_va[:, r][None, :]
        h_free[r * n_u : (r + 1) * n_u] = block
        h_multi[r * n_u : (r + 1) * n_u] = (block * occ.combined(r)) @ field.x
    return ChannelEnsemble(
        h_user_voxel=h_uv,
        h_voxel_ant=h_va,
        occlusion=occ,
        h_free_stacked=h_free,
        h_multipath=h_multi,
        carrier_hz=carrier_hz,
        n_users=n_u,
        n_antennas=n_r,
    )


def _noise_var_for_snr(h_multipath: np.ndarray, snr_db: float) -> float:
    sig_power = float(np.mean(np.abs(h_multipath) ** 2))
    if np.isinf(snr_db):
        return 0.0
    if sig_power == 0.0:
        raise ValueError("SNR undefined: multipath vector is identically zero")
    return sig_power * 10.0 ** (-snr_db / 10.0)


def observe(ens: ChannelEnsemble, snr_db: float, rng: np.random.Generator) -> ChannelEnsemble:
    """Add circularly-symmetric complex Gaussian noise at the given SNR.

    Per-entry complex noise variance is mean(|h|^2) * 10^(-snr/10), split
    evenly between real and imaginary parts. snr_db = inf keeps the exact
    channel.
    """
    noise_var = _noise_var_for_snr(ens.h_multipath, snr_db)
    if noise_var == 0.0:
        observed = ens.h_multipath.copy()
    else:
        scale = np.sqrt(noise_var / 2.0)
        n = ens.n_measurements
        noise = rng.normal(0.0, scale, n) + 1j * rng.normal(0.0, scale, n)
        observed = ens.h_multipath + noise
    return replace(ens, h_observed=observed, noise_var=noise_var)


def pilot_estimate(
    ens: ChannelEnsemble,
    pilot_length: int,
    snr_db: float,
    rng: np.random.Generator,
) -> ChannelEnsemble:
    """Least-squares channel estimate from orthogonal pilots.

    Each antenna receives Y = S h + W over ``pilot_length`` symbols, with S the
    first n_users columns of a DFT matrix (unit-modulus, orthogonal; the LOS
    component is assumed already subtracted). The per-entry estimation-error
    variance equals the observe() mapping for the same snr_db and is reported
    back as ``noise_var``.
    """
    n_t = int(pilot_length)
    if n_t <= ens.n_users:
        raise ValueError(f"pilot length {n_t} must exceed the number of users {ens.n_users}")
    target_var = _noise_var_for_snr(ens.h_multipath, snr_db)
    k = np.arange(n_t)
    pilots = np.exp(-2j * np.pi * np.outer(k, k[: ens.n_users]) / n_t)  # (n_t, n_users)
    h = ens.h_multipath.reshape(ens.n_antennas, ens.n_users)
    rx = h @ pilots.T  # (n_antennas, n_t): antenna r sees S @ h_r
    if target_var > 0.0:
        scale = np.sqrt(n_t * target_var / 2.0)
        rx = rx + rng.normal(0.0, scale, rx.shape) + 1j * rng.normal(0.0, scale, rx.shape)
    est = (rx @ pilots.conj()) / n_t  # LS inverse of orthogonal pilots
    return replace(ens, h_observed=est.reshape(-1), noise_var=target_var)


@dataclass(frozen=True)
class RealStackedSystem:
    """Real embedding of the complex system for the solvers.

    Rows 2k and 2k+1 are the real and imaginary parts of complex measurement k
    and share one occlusion bit. ``noise_var`` is the per-real-row variance,
    i.e. half the complex per-entry variance.
    """

    y: np.ndarray        # (2*n_complex,)
    a_free: np.ndarray   # (2*n_complex, n_voxels)
    noise_var: float
    n_complex: int

    @property
    def pair_map(self) -> np.ndarray:
        """Row index of each row's conjugate partner."""
        idx = np.arange(2 * self.n_complex)
        return idx ^ 1

    def complex_y(self) -> np.ndarray:
        return self.y[0::2] + 1j * self.y[1::2]


def _interleave_complex(z: np.ndarray) -> np.ndarray:
    out = np.empty(2 * z.shape[0], dtype=float) if z.ndim == 1 else np.empty((2 * z.shape[0],) + z.shape[1:], dtype=float)
    out[0::2] = z.real
    out[1::2] = z.imag
    return out


def stack_real(ens: ChannelEnsemble, occluded: bool = False) -> RealStackedSystem:
    """Interleaved Re/Im embedding of the observed system.

    With ``occluded=True`` the matrix is masked by the true occlusion pattern
    (an oracle system for genie baselines); by default it is the free-space
    matrix the reconstruction algorithms actually know.
    """
    if ens.h_observed is None:
        raise ValueError("call observe() or pilot_estimate() before stacking")
    mat = ens.h_free_stacked
    if occluded:
        mat = mat * ens.occlusion.stacked()
    return RealStackedSystem(
        y=_interleave_complex(ens.h_observed),
        a_free=_interleave_complex(mat),
        noise_var=(ens.noise_var or 0.0) / 2.0,
        n_complex=ens.n_measurements,
    )
