"""Height-aware 2D-to-3D view transformation for occupancy grids.

The package covers the numeric core of the pipeline: LiDAR-derived
height/depth ground-truth maps, depth-weighted feature lifting with BEV,
voxel and mask-guided height pooling, entropy analysis of height
decoupling schemes, a two-stage affinity fusion block with validated
gradients, and the supervision losses plus the mIoU metric.
"""

from .analysis import (
    LabeledVoxelGrid,
    class_height_histogram,
    height_cdf,
    weighted_entropy,
)
from .errors import (
    DimensionError,
    EmptyDataError,
    NumericError,
    OccError,
    ParseError,
)
from .geometry import (
    CameraRig,
    ProjectedPoints,
    ScalarMap,
    lidar_to_ego,
    project_points,
    zbuffer_map,
)
from .grid import GridSpec, argmax_height, bin_heights, height_to_bin, one_hot_height
from .losses import (
    ClassWeights,
    LossBreakdown,
    bce_loss,
    inverse_frequency_weights,
    total_loss,
    weighted_ce,
)
from .metrics import miou
from .pooling import (
    DecouplingScheme,
    DepthDistribution,
    Frustum,
    bev_pool,
    decouple_masks,
    gen_frustum,
    mask_features,
    mghs_project,
    voxel_pool,
)
from .sfa import (
    AffinityOutputs,
    SfaParams,
    channel_stage,
    grad_check,
    sfa_forward,
    spatial_stage,
)
from .synth import SceneRecipe, parse_recipe

__version__ = "0.1.0"

__all__ = [
    "AffinityOutputs",
    "CameraRig",
    "ClassWeights",
    "DecouplingScheme",
    "DepthDistribution",
    "DimensionError",
    "EmptyDataError",
    "Frustum",
    "GridSpec",
    "LabeledVoxelGrid",
    "LossBreakdown",
    "NumericError",
    "OccError",
    "ParseError",
    "ProjectedPoints",
    "ScalarMap",
    "SceneRecipe",
    "SfaParams",
    "argmax_height",
    "bce_loss",
    "bev_pool",
    "bin_heights",
    "channel_stage",
    "class_height_histogram",
    "decouple_masks",
    "gen_frustum",
    "grad_check",
    "height_cdf",
    "height_to_bin",
    "inverse_frequency_weights",
    "lidar_to_ego",
    "mask_features",
    "mghs_project",
    "miou",
    "one_hot_height",
    "parse_recipe",
    "project_points",
    "sfa_forward",
    "spatial_stage",
    "total_loss",
    "voxel_pool",
    "weighted_ce",
    "weighted_entropy",
    "zbuffer_map",
]
