"""LiDAR odometry from filtered spherical range images.

Point clouds are projected into spherical range images, segmented into
edge / ground / surface features with image-plane filters, reconstructed
back into 3D, and aligned frame-to-local-map by Gauss-Newton over
point-to-line and point-to-plane residuals.
"""

from .filter import FeatureImages, SobelConfig
from .geom import Pose, Twist
from .io import PipelineConfig
from .kernels import BACKEND as KERNEL_BACKEND
from .odom import FeatureGroupMode, LocalFeatureMap, OdomConfig, Odometry
from .recon import FeatureClouds, VoxelConfig
from .sri import SphericalRangeImage, SriParams

__all__ = [
    "FeatureClouds",
    "FeatureGroupMode",
    "FeatureImages",
    "KERNEL_BACKEND",
    "LocalFeatureMap",
    "OdomConfig",
    "Odometry",
    "PipelineConfig",
    "Pose",
    "SobelConfig",
    "SphericalRangeImage",
    "SriParams",
    "Twist",
    "VoxelConfig",
]

__version__ = "0.1.0"
