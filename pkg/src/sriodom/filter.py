"""Feature segmentation on the range image plane.

Two routes classify every valid pixel as edge, ground or surface:

* Sobel route: gradient responses of the normalized image. Strong horizontal
  derivatives mark vertical structure (edges); strong vertical derivatives at
  low height mark the ground; the rest are surfaces.
* Frequency route: ground returns form near-constant rows, i.e. energy in the
  zero horizontal frequency. Zeroing that column of the centered 2D spectrum
  and inverting leaves a ground-free image; pixels whose signal vanished are
  ground, and the Sobel route splits the remainder into edges and surfaces.

Feature images carry the original range at claimed pixels so reconstruction
stays exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ImageTooSmall, OddWidth
from .sri import SphericalRangeImage, normalize_to_gray

# Horizontal-derivative mask: responds to vertical structure (edges).
EDGE_KERNEL = np.array(
    [
        [-1.0, 0.0, 1.0],
        [-2.0, 0.0, 2.0],
        [-1.0, 0.0, 1.0],
    ]
)
# Vertical-derivative mask: responds to horizontal structure (ground rows).
GROUND_KERNEL = np.array(
    [
        [-1.0, -2.0, -1.0],
        [0.0, 0.0, 0.0],
        [1.0, 2.0, 1.0],
    ]
)


@dataclass
class SobelConfig:
    """Segmentation thresholds on the [0,1]-normalized image.

    ground_z_max gates Sobel-route ground pixels to points below the sensor;
    fft_ground_eps is the span fraction below which a frequency-filtered
    pixel counts as ground.
    """

    edge_threshold: float = 0.30
    ground_threshold: float = 0.08
    ground_z_max: float = -0.5
    fft_ground_eps: float = 0.02

    def validate(self) -> None:
        if not 0.0 < self.edge_threshold < 1.0:
            raise ValueError("edge_threshold must be in (0, 1)")
        if not 0.0 < self.ground_threshold < 1.0:
            raise ValueError("ground_threshold must be in (0, 1)")


@dataclass
class FeatureImages:
    """Partition of the valid pixels into edge / ground / surface images."""

    edge: SphericalRangeImage
    ground: SphericalRangeImage
    surface: SphericalRangeImage


def convolve3x3(img: np.ndarray, valid: np.ndarray,
                kernel: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Valid-aware 3x3 convolution; defined only where all nine taps are valid."""
    m, n = img.shape
    if m < 3 or n < 3:
        raise ImageTooSmall(f"need at least 3x3 pixels, got {m}x{n}")
    return kernels.convolve3x3_valid(img, valid, kernel)


def _feature_image(src: SphericalRangeImage, mask: np.ndarray) -> SphericalRangeImage:
    return SphericalRangeImage(
        ranges=np.where(mask, src.ranges, 0.0),
        z_map=src.z_map,
        valid=mask,
    )


def _partition(src: SphericalRangeImage, edge_mask: np.ndarray,
               ground_mask: np.ndarray) -> FeatureImages:
    """Assemble the three feature images with edge > ground > surface precedence."""
    edge = edge_mask & src.valid
    ground = ground_mask & src.valid & ~edge
    surface = src.valid & ~edge & ~ground
    return FeatureImages(
        edge=_feature_image(src, edge),
        ground=_feature_image(src, ground),
        surface=_feature_image(src, surface),
    )


def segment_sobel(img: SphericalRangeImage, cfg: SobelConfig) -> FeatureImages:
    """Classify pixels by Sobel gradient magnitude.

    Edge wherever the horizontal-derivative response reaches edge_threshold,
    dominates the vertical-derivative response (vertical structure, not a
    range ring seen at grazing incidence), and stands above ground height
    (a point on the ground under an occlusion boundary is a shadow edge that
    sweeps with the sensor, not structure); else ground where the vertical
    response reaches ground_threshold and the point sits below ground_z_max;
    else surface. Pixels whose response is undefined (border, invalid
    neighbor) fall through to surface.
    """
    cfg.validate()
    gray, _, _ = normalize_to_gray(img)
    edge_resp, edge_ok = convolve3x3(gray, img.valid, EDGE_KERNEL)
    ground_resp, ground_ok = convolve3x3(gray, img.valid, GROUND_KERNEL)
    edge_mask = (
        edge_ok
        & (np.abs(edge_resp) >= cfg.edge_threshold)
        & (np.abs(edge_resp) >= np.abs(ground_resp))
        & (img.z_map > cfg.ground_z_max)
    )
    ground_mask = (
        ground_ok
        & (np.abs(ground_resp) >= cfg.ground_threshold)
        & (img.z_map <= cfg.ground_z_max)
    )
    return _partition(img, edge_mask, ground_mask)


def fft_ground_filter(
    img: SphericalRangeImage, eps: float = 0.02
) -> tuple[SphericalRangeImage, SphericalRangeImage]:
    """Remove the ground by zeroing the zero-horizontal-frequency column.

    The normalized image (invalid pixels filled with their row's valid mean)
    is transformed, shifted so low frequencies sit at the center, the column
    j = N/2 is zeroed, and the result inverted and scaled back by the range
    span. That equals subtracting each row's mean, so ground pixels - whose
    signal is almost entirely the row constant - end up near zero.

    Returns (filtered, ground): the filtered image holds the signed residual
    signal in meters; the ground image holds the original ranges at pixels
    where |filtered| < eps * span.
    """
    m, n = img.shape
    if n % 2 != 0:
        raise OddWidth(f"width must be even, got {n}")
    gray, lo, hi = normalize_to_gray(img)
    span = hi - lo

    filled = gray.copy()
    counts = img.valid.sum(axis=1)
    sums = np.where(img.valid, gray, 0.0).sum(axis=1)
    row_mean = np.divide(sums, counts, out=np.zeros(m), where=counts > 0)
    filled = np.where(img.valid, filled, row_mean[:, None])

    spectrum = np.fft.fftshift(np.fft.fft2(filled))
    spectrum[:, n // 2] = 0.0
    residual = np.real(np.fft.ifft2(np.fft.ifftshift(spectrum)))

    filtered_ranges = np.where(img.valid, residual * span, 0.0)
    filtered = SphericalRangeImage(
        ranges=filtered_ranges, z_map=img.z_map, valid=img.valid.copy()
    )
    # A zero-span (constant) image is pure row DC: everything is ground.
    ground_mask = img.valid & (np.abs(filtered_ranges) < eps * (span if span > 0 else 1.0))
    ground = _feature_image(img, ground_mask)
    return filtered, ground


def segment_frequency(img: SphericalRangeImage, cfg: SobelConfig) -> FeatureImages:
    """Frequency-route segmentation: FFT ground, Sobel edges on the rest."""
    cfg.validate()
    _, ground_img = fft_ground_filter(img, cfg.fft_ground_eps)

    # Edges come from the ground-free image so ground rows cannot mask them.
    remaining = SphericalRangeImage(
        ranges=np.where(ground_img.valid, 0.0, img.ranges),
        z_map=img.z_map,
        valid=img.valid & ~ground_img.valid,
    )
    if remaining.valid.any():
        gray, _, _ = normalize_to_gray(remaining)
        edge_resp, edge_ok = convolve3x3(gray, remaining.valid, EDGE_KERNEL)
        ground_resp, _ = convolve3x3(gray, remaining.valid, GROUND_KERNEL)
        edge_mask = (
            edge_ok
            & (np.abs(edge_resp) >= cfg.edge_threshold)
            & (np.abs(edge_resp) >= np.abs(ground_resp))
            & (img.z_map > cfg.ground_z_max)
        )
    else:
        edge_mask = np.zeros_like(img.valid)
    return _partition(img, edge_mask, ground_img.valid)
