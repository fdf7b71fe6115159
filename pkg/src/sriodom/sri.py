"""Spherical range image construction.

An unordered point cloud becomes an M x N grid of ranges: columns quantize
azimuth over the full circle, rows quantize elevation over the sensor's
vertical field of view. Alongside the range grid we keep the z of the point
that won each cell, which makes the later 3D reconstruction exact for
non-interpolated pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DegeneratePoint, EmptyImage

TWO_PI = 2.0 * math.pi


@dataclass
class SriParams:
    """Projection geometry.

    width: columns over the full 2*pi azimuth circle.
    n_beams: native sensor rows; row interpolation multiplies this.
    fov_min/fov_max: vertical field of view in radians, min < max.
    """

    width: int = 720
    n_beams: int = 64
    fov_min: float = math.radians(-24.8)
    fov_max: float = math.radians(2.0)
    interpolation_factor: int = 1
    min_range: float = 0.5
    interp_max_gap: float = 1.0

    @property
    def x_res(self) -> float:
        """Columns per radian of azimuth."""
        return self.width / TWO_PI

    @property
    def y_res(self) -> float:
        """Rows per radian of elevation (native, pre-interpolation)."""
        return self.n_beams / (self.fov_max - self.fov_min)

    @property
    def height(self) -> int:
        """Final image height after row interpolation."""
        return self.n_beams * self.interpolation_factor

    def validate(self) -> None:
        if self.width < 2 or self.n_beams < 1:
            raise ValueError("image dimensions must be positive")
        if not self.fov_min < self.fov_max:
            raise ValueError("fov_min must be below fov_max")
        if self.interpolation_factor < 1:
            raise ValueError("interpolation_factor must be >= 1")


@dataclass
class SphericalRangeImage:
    """Range grid plus the source-point heights and a validity mask."""

    ranges: np.ndarray  # (M, N) meters, 0 where invalid
    z_map: np.ndarray  # (M, N) meters, defined where valid
    valid: np.ndarray  # (M, N) bool
    dropped: int = 0  # points outside FOV / below min range

    @property
    def shape(self) -> tuple[int, int]:
        return self.ranges.shape


def spherical_coords(p) -> tuple[float, float, float]:
    """(range, azimuth, elevation) of a single point.

    Azimuth is the full-quadrant angle of (x, y) in (-pi, pi]; elevation is
    arcsin(z / range) in (-pi/2, pi/2).
    """
    x, y, z = float(p[0]), float(p[1]), float(p[2])
    r = math.sqrt(x * x + y * y + z * z)
    if r <= 0.0:
        raise DegeneratePoint("zero-range point has no direction")
    return r, math.atan2(y, x), math.asin(z / r)


def project(cloud: np.ndarray, params: SriParams) -> SphericalRangeImage:
    """Project an (n,3) cloud into a spherical range image.

    Azimuth maps to the nearest column of omega = pi - 2*pi*j/N (the inverse
    used by reconstruction), wrapping circularly, so the quantization error
    is symmetric around the reconstructed azimuth; a one-sided (floor)
    assignment would bias every reconstructed point half a pixel CCW and
    drag the estimate laterally in proportion to speed. Elevation shifts to
    start at fov_min and floors. When several points share a cell the
    nearest range wins. Out-of-FOV and sub-min-range points are dropped and
    counted.
    """
    params.validate()
    pts = np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    height, width = params.n_beams, params.width
    if len(pts) == 0:
        return SphericalRangeImage(
            ranges=np.zeros((height, width)),
            z_map=np.zeros((height, width)),
            valid=np.zeros((height, width), dtype=bool),
        )
    r = np.linalg.norm(pts, axis=1)
    finite = np.isfinite(pts).all(axis=1) & np.isfinite(r)
    keep = finite & (r >= params.min_range)
    x, y, z = pts[keep, 0], pts[keep, 1], pts[keep, 2]
    rk = r[keep]
    theta = np.arctan2(y, x)
    phi = np.arcsin(np.clip(z / rk, -1.0, 1.0))
    in_fov = (phi >= params.fov_min) & (phi <= params.fov_max)
    dropped = int(len(pts) - int(in_fov.sum()))
    theta, phi, rk, z = theta[in_fov], phi[in_fov], rk[in_fov], z[in_fov]

    scaled = (math.pi - theta) * params.x_res + 0.5
    cols = np.floor(scaled).astype(np.int64) % width
    # Sub-pixel distance from the column center: the collision winner among
    # same-surface candidates is the azimuthally least-quantized one.
    center_dist = np.abs(scaled - np.floor(scaled) - 0.5)
    rows = np.floor((phi - params.fov_min) * params.y_res).astype(np.int64)
    np.clip(rows, 0, height - 1, out=rows)

    rng, zmap, valid = kernels.scatter_min_range(
        rows, cols, rk, z, height, width, center_dist
    )
    return SphericalRangeImage(ranges=rng, z_map=zmap, valid=valid, dropped=dropped)


def interpolate_rows(img: SphericalRangeImage, factor: int,
                     max_gap: float = 1.0) -> SphericalRangeImage:
    """Densify rows by bilinear blending between vertically adjacent pixels.

    Output height is M*factor. Source row i lands at output row i*factor;
    the rows in between blend rows i and i+1 (range and z alike). A blended
    pixel is valid only when both vertical neighbors are valid and their
    range gap is below max_gap. Trailing rows past the last source row stay
    invalid.
    """
    if factor < 1:
        raise ValueError("interpolation factor must be >= 1")
    if factor == 1:
        return img
    m, n = img.shape
    out_m = m * factor
    ranges = np.zeros((out_m, n))
    z_map = np.zeros((out_m, n))
    valid = np.zeros((out_m, n), dtype=bool)
    ranges[::factor] = img.ranges
    z_map[::factor] = img.z_map
    valid[::factor] = img.valid
    for k in range(1, factor):
        alpha = k / factor
        lo = slice(0, m - 1)
        hi = slice(1, m)
        ok = (
            img.valid[lo]
            & img.valid[hi]
            & (np.abs(img.ranges[hi] - img.ranges[lo]) < max_gap)
        )
        rows = np.arange(m - 1) * factor + k
        ranges[rows] = np.where(
            ok, (1.0 - alpha) * img.ranges[lo] + alpha * img.ranges[hi], 0.0
        )
        z_map[rows] = np.where(
            ok, (1.0 - alpha) * img.z_map[lo] + alpha * img.z_map[hi], 0.0
        )
        valid[rows] = ok
    return SphericalRangeImage(
        ranges=ranges, z_map=z_map, valid=valid, dropped=img.dropped
    )


def normalize_to_gray(img: SphericalRangeImage) -> tuple[np.ndarray, float, float]:
    """Map valid ranges linearly onto [0, 1]; invalid pixels map to 0.

    Returns (gray, lo, hi) so the mapping can be inverted exactly. A
    zero-span image maps every valid pixel to 0.
    """
    if not img.valid.any():
        raise EmptyImage("cannot normalize an image with no valid pixel")
    vals = img.ranges[img.valid]
    lo = float(vals.min())
    hi = float(vals.max())
    gray = np.zeros_like(img.ranges)
    span = hi - lo
    if span > 0.0:
        gray[img.valid] = (img.ranges[img.valid] - lo) / span
    return gray, lo, hi


def denormalize(gray: np.ndarray, lo: float, hi: float,
                valid: np.ndarray | None = None) -> np.ndarray:
    """Inverse of normalize_to_gray over the valid set."""
    out = lo + gray * (hi - lo)
    if valid is not None:
        out = np.where(valid, out, 0.0)
    return out


def to_gray_u8(img: SphericalRangeImage) -> np.ndarray:
    """8-bit grayscale rendering (row 0 of the array = lowest elevation,
    flipped so the image top is the highest beam)."""
    gray, _, _ = normalize_to_gray(img)
    return np.flipud((gray * 255.0).round().astype(np.uint8))
