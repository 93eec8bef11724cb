"""Multi-view wireless environment sensing.

Synthesizes occluded multi-user/multi-BS sensing scenarios over a voxelized
region and reconstructs the sparse scattering field with message-passing
solvers, alongside closed-form range/error analysis and a config-driven
experiment harness.
"""

from .analysis import (
    BoundReport,
    RangeReport,
    combined_blockage_prob,
    mse,
    mse_bound,
    mse_in_range,
    p_block_bs_closed,
    p_block_bs_exact,
    p_block_empirical,
    p_block_user_closed,
    p_block_user_exact,
    unsensed_counts,
)
from .channel import (
    ChannelEnsemble,
    RealStackedSystem,
    build_channels,
    free_space_coeff,
    observe,
    pilot_estimate,
    stack_real,
)
from .config import load_config, preset, validate_config
from .errors import ConfigurationError
from .occlusion import (
    OcclusionMatrices,
    OcclusionParams,
    blocks,
    default_block_distance,
    occlusion_matrices,
    path_clear,
    sensing_range_mask,
)
from .scene import (
    NodeLayout,
    PriorParams,
    ScatterField,
    VoxelGrid,
    bs_array,
    build_grid,
    sample_scene,
    sample_shell_positions,
    voxel_center,
)
from .solvers import (
    ReconstructionResult,
    SolverOptions,
    SolverState,
    check_F_identity,
    gh_denoise_hard,
    gh_denoise_soft,
    gx_denoise,
    output_posterior,
    p_step,
    q_step,
    r_step,
    residual_step,
    run_bilinear,
    run_gamp,
    run_multiview,
)

__version__ = "0.1.0"
