"""Back-projection of feature images into 3D point clouds.

Each valid pixel carries its range r and the height z of the point that won
the cell; the horizontal radius sqrt(r^2 - z^2) and the column's azimuth
recover x and y. The radicand is clamped at zero against interpolation noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .filter import FeatureImages
from .sri import SphericalRangeImage


@dataclass
class VoxelConfig:
    """Voxel-grid downsampling parameters for one feature class."""

    leaf_edge: float
    enabled: bool = True

    def validate(self) -> None:
        if self.leaf_edge <= 0.0:
            raise ValueError("leaf_edge must be positive")


@dataclass
class FeatureClouds:
    """Reconstructed 3D feature points, one (n,3) array per class."""

    edge: np.ndarray
    surface: np.ndarray
    ground: np.ndarray

    def total(self) -> int:
        return len(self.edge) + len(self.surface) + len(self.ground)


def azimuth_of_column(j, width: int):
    """Azimuth at column j: pi at column 0, decreasing through -pi at N."""
    return math.pi - (2.0 * math.pi * np.asarray(j, dtype=np.float64)) / width


def reconstruct(feature_img: SphericalRangeImage, width: int | None = None
                ) -> tuple[np.ndarray, int]:
    """Back-project one feature image; returns (points (n,3), clamped count).

    Points come out in row-major pixel order. Pixels whose |z| exceeds r get
    a zero horizontal radius instead of a NaN and are counted.
    """
    if width is None:
        width = feature_img.shape[1]
    ii, jj = np.nonzero(feature_img.valid)
    if len(ii) == 0:
        return np.zeros((0, 3)), 0
    r = feature_img.ranges[ii, jj]
    z = feature_img.z_map[ii, jj]
    omega = azimuth_of_column(jj, width)
    radicand = r * r - z * z
    clamped = int((radicand < 0.0).sum())
    rho = np.sqrt(np.maximum(radicand, 0.0))
    pts = np.column_stack([rho * np.cos(omega), rho * np.sin(omega), z])
    return pts, clamped


def reconstruct_features(images: FeatureImages) -> FeatureClouds:
    """Back-project the edge/surface/ground images into disjoint clouds."""
    edge, _ = reconstruct(images.edge)
    surface, _ = reconstruct(images.surface)
    ground, _ = reconstruct(images.ground)
    return FeatureClouds(edge=edge, surface=surface, ground=ground)


# Packing offsets for voxel-cell keys: the packed key is monotone in the
# lexicographic cell order and supports |coordinate| up to 2^19 * leaf.
_KEY_OFFSET = 1 << 19
_KEY_BASE = 1 << 20


def cell_keys(points: np.ndarray, leaf_edge: float) -> np.ndarray:
    """Packed int64 voxel index per point."""
    cells = np.floor(points / leaf_edge).astype(np.int64) + _KEY_OFFSET
    return (cells[:, 0] * _KEY_BASE + cells[:, 1]) * _KEY_BASE + cells[:, 2]


def voxel_downsample(points: np.ndarray, leaf_edge: float) -> np.ndarray:
    """One centroid per occupied voxel, output sorted by voxel index."""
    if leaf_edge <= 0.0:
        raise ValueError("leaf_edge must be positive")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        return pts.copy()
    keys = cell_keys(pts, leaf_edge)
    uniq, inverse = np.unique(keys, return_inverse=True)
    sums = np.zeros((len(uniq), 3))
    np.add.at(sums, inverse, pts)
    counts = np.bincount(inverse, minlength=len(uniq)).astype(np.float64)
    return sums / counts[:, None]


def downsample_features(clouds: FeatureClouds, edge: VoxelConfig,
                        surface: VoxelConfig, ground: VoxelConfig) -> FeatureClouds:
    def one(pts: np.ndarray, cfg: VoxelConfig) -> np.ndarray:
        if not cfg.enabled or len(pts) == 0:
            return pts
        cfg.validate()
        return voxel_downsample(pts, cfg.leaf_edge)

    return FeatureClouds(
        edge=one(clouds.edge, edge),
        surface=one(clouds.surface, surface),
        ground=one(clouds.ground, ground),
    )
