"""Frame ingestion, pose files, configuration, and debug dumps.

Supported formats: Velodyne .bin frames (little-endian x,y,z,intensity
float32 records), 12-number pose text files (row-major 3x4 [R|t], one pose
per line, frame-0 coordinates), a flat key=value config file, and PGM/PLY
debug emitters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    FileAccessError,
    MalformedFrame,
    MalformedPoseLine,
)
from .filter import SobelConfig
from .geom import Pose, orthonormalize, ortho_drift
from .odom import FeatureGroupMode, OdomConfig
from .recon import VoxelConfig
from .sri import SphericalRangeImage, SriParams, to_gray_u8

RECORD_BYTES = 16


def read_velodyne_bin(path) -> np.ndarray:
    """Read one Velodyne frame; returns an (n,3) float array in meters.

    Non-finite records are dropped. Raises MalformedFrame when the file size
    is not a whole number of 16-byte records and FileAccessError when the
    file cannot be read.
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as err:
        raise FileAccessError(f"cannot read {path}: {err}") from err
    if len(raw) % RECORD_BYTES != 0:
        raise MalformedFrame(
            f"{path}: size {len(raw)} is not a multiple of {RECORD_BYTES}"
        )
    data = np.frombuffer(raw, dtype="<f4").reshape(-1, 4)
    pts = data[:, :3].astype(np.float64)
    finite = np.isfinite(data).all(axis=1)
    return pts[finite]


def write_velodyne_bin(path, points: np.ndarray,
                       intensity: np.ndarray | None = None) -> None:
    """Write an (n,3) cloud as Velodyne records (test harness + fixtures)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    rec = np.zeros((len(pts), 4), dtype="<f4")
    rec[:, :3] = pts
    if intensity is not None:
        rec[:, 3] = intensity
    try:
        Path(path).write_bytes(rec.tobytes())
    except OSError as err:
        raise FileAccessError(f"cannot write {path}: {err}") from err


def write_kitti_poses(trajectory, path) -> None:
    """Write poses as 12 space-separated decimals per line (row-major [R|t])."""
    lines = []
    for pose in trajectory:
        mat = np.hstack([pose.rotation, pose.translation[:, None]])
        lines.append(" ".join(f"{v:.9g}" for v in mat.reshape(-1)))
    try:
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))
    except OSError as err:
        raise FileAccessError(f"cannot write {path}: {err}") from err


def read_kitti_poses(path) -> list[Pose]:
    """Inverse of write_kitti_poses; re-orthonormalizes drifted rotations."""
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise FileAccessError(f"cannot read {path}: {err}") from err
    except UnicodeDecodeError as err:
        raise MalformedPoseLine(0, f"not a text file: {err}") from err
    poses = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        parts = stripped.split()
        if len(parts) != 12:
            raise MalformedPoseLine(lineno, f"expected 12 fields, got {len(parts)}")
        try:
            vals = np.array([float(v) for v in parts])
        except ValueError as err:
            raise MalformedPoseLine(lineno, str(err)) from err
        mat = vals.reshape(3, 4)
        rot = mat[:, :3]
        if ortho_drift(rot) > 1e-6:
            rot = orthonormalize(rot)
        poses.append(Pose(rotation=rot, translation=mat[:, 3].copy()))
    return poses


@dataclass
class PipelineConfig:
    """Everything the batch pipeline needs, with documented defaults."""

    sri: SriParams = field(default_factory=SriParams)
    sobel: SobelConfig = field(default_factory=SobelConfig)
    voxel_edge: VoxelConfig = field(default_factory=lambda: VoxelConfig(0.2))
    voxel_surface: VoxelConfig = field(default_factory=lambda: VoxelConfig(0.4))
    voxel_ground: VoxelConfig = field(default_factory=lambda: VoxelConfig(0.4))
    odom: OdomConfig = field(default_factory=OdomConfig)
    filter_path: str = "sobel"  # "sobel" | "fft"
    dt: float = 0.1


def _parse_bool(raw: str, key: str) -> bool:
    low = raw.lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {raw!r}")


def _parse_typed(raw: str, kind: type, key: str):
    try:
        if kind is bool:
            return _parse_bool(raw, key)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
    except ValueError as err:
        raise ConfigError(f"{key}: {err}") from err
    return raw


def _config_setters(cfg: PipelineConfig) -> dict:
    """Flat key -> (type, setter) table for every exposed knob."""

    def setter(obj, attr, kind, convert=None):
        def apply(raw, key):
            value = _parse_typed(raw, kind, key)
            setattr(obj, attr, convert(value) if convert else value)

        return kind, apply

    deg = math.radians
    table = {
        "sri.width": setter(cfg.sri, "width", int),
        "sri.n_beams": setter(cfg.sri, "n_beams", int),
        "sri.fov_min_deg": setter(cfg.sri, "fov_min", float, deg),
        "sri.fov_max_deg": setter(cfg.sri, "fov_max", float, deg),
        "sri.interpolation_factor": setter(cfg.sri, "interpolation_factor", int),
        "sri.min_range": setter(cfg.sri, "min_range", float),
        "sri.interp_max_gap": setter(cfg.sri, "interp_max_gap", float),
        "filter.edge_threshold": setter(cfg.sobel, "edge_threshold", float),
        "filter.ground_threshold": setter(cfg.sobel, "ground_threshold", float),
        "filter.ground_z_max": setter(cfg.sobel, "ground_z_max", float),
        "filter.fft_ground_eps": setter(cfg.sobel, "fft_ground_eps", float),
        "voxel.edge_leaf": setter(cfg.voxel_edge, "leaf_edge", float),
        "voxel.surface_leaf": setter(cfg.voxel_surface, "leaf_edge", float),
        "voxel.ground_leaf": setter(cfg.voxel_ground, "leaf_edge", float),
        "voxel.edge_enabled": setter(cfg.voxel_edge, "enabled", bool),
        "voxel.surface_enabled": setter(cfg.voxel_surface, "enabled", bool),
        "voxel.ground_enabled": setter(cfg.voxel_ground, "enabled", bool),
        "odom.neighbor_radius": setter(cfg.odom, "neighbor_radius", float),
        "odom.min_neighbors": setter(cfg.odom, "min_neighbors", int),
        "odom.max_neighbors": setter(cfg.odom, "max_neighbors", int),
        "odom.max_gn_iterations": setter(cfg.odom, "max_gn_iterations", int),
        "odom.convergence_eps": setter(cfg.odom, "convergence_eps", float),
        "odom.huber_delta": setter(cfg.odom, "huber_delta", float),
        "odom.map_trim_radius": setter(cfg.odom, "map_trim_radius", float),
        "odom.map_edge_leaf": setter(cfg.odom, "map_edge_leaf", float),
        "odom.map_surface_leaf": setter(cfg.odom, "map_surface_leaf", float),
        "odom.min_correspondences": setter(cfg.odom, "min_correspondences", int),
        "odom.undistort": setter(cfg.odom, "undistort_enabled", bool),
        "io.dt": setter(cfg, "dt", float),
    }

    def set_group(raw, key):
        try:
            cfg.odom.feature_group = FeatureGroupMode(raw.upper())
        except ValueError as err:
            raise ConfigError(f"{key}: expected EG, ES or EGS, got {raw!r}") from err

    def set_path(raw, key):
        if raw.lower() not in ("sobel", "fft"):
            raise ConfigError(f"{key}: expected sobel or fft, got {raw!r}")
        cfg.filter_path = raw.lower()

    table["odom.feature_group"] = (str, set_group)
    table["filter.path"] = (str, set_path)
    return table


def load_config(path, base: PipelineConfig | None = None) -> PipelineConfig:
    """Parse a flat key = value config file over the defaults.

    '#' starts a comment; unknown keys and type mismatches raise ConfigError
    naming the key.
    """
    cfg = base if base is not None else PipelineConfig()
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise FileAccessError(f"cannot read {path}: {err}") from err
    except UnicodeDecodeError as err:
        raise ConfigError(f"{path} is not a text file: {err}") from err
    setters = _config_setters(cfg)
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in setters:
            raise ConfigError(f"unknown key {key!r} on line {lineno}")
        _, apply = setters[key]
        apply(raw, key)
    return cfg


class FrameSource:
    """Ordered access to a directory of Velodyne .bin frames.

    Frames are sorted by filename; a sibling times.txt supplies per-frame
    timestamps when present, otherwise frames are spaced by `default_dt`.
    """

    def __init__(self, directory, default_dt: float = 0.1):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise FileAccessError(f"{directory} is not a directory")
        self.paths = sorted(self.directory.glob("*.bin"))
        self.default_dt = default_dt
        self.timestamps = self._load_timestamps()

    def _load_timestamps(self) -> np.ndarray:
        candidates = [
            self.directory / "times.txt",
            self.directory.parent / "times.txt",
        ]
        for cand in candidates:
            if cand.is_file():
                try:
                    times = np.loadtxt(cand, dtype=np.float64, ndmin=1)
                except (OSError, ValueError):
                    continue
                if len(times) >= len(self.paths):
                    return times[: len(self.paths)]
        return np.arange(len(self.paths)) * self.default_dt

    def __len__(self) -> int:
        return len(self.paths)

    def read(self, index: int):
        """(cloud, timestamp) of one frame."""
        return read_velodyne_bin(self.paths[index]), float(self.timestamps[index])

    def __iter__(self):
        for i in range(len(self.paths)):
            yield self.read(i)


def write_pgm(path, gray_u8: np.ndarray) -> None:
    """Binary (P5) 8-bit grayscale image."""
    img = np.asarray(gray_u8, dtype=np.uint8)
    h, w = img.shape
    try:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
            fh.write(img.tobytes())
    except OSError as err:
        raise FileAccessError(f"cannot write {path}: {err}") from err


def write_sri_pgm(path, img: SphericalRangeImage) -> None:
    write_pgm(path, to_gray_u8(img))


def write_ply(path, clouds: dict[str, np.ndarray]) -> None:
    """ASCII PLY of labeled clouds; edge red, surface blue, ground green."""
    colors = {"edge": (255, 0, 0), "surface": (0, 0, 255), "ground": (0, 255, 0)}
    rows = []
    for name, pts in clouds.items():
        r, g, b = colors.get(name, (200, 200, 200))
        for p in np.asarray(pts).reshape(-1, 3):
            rows.append(f"{p[0]:.4f} {p[1]:.4f} {p[2]:.4f} {r} {g} {b}")
    header = (
        "ply\nformat ascii 1.0\n"
        f"element vertex {len(rows)}\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        "end_header\n"
    )
    try:
        Path(path).write_text(header + "\n".join(rows) + ("\n" if rows else ""))
    except OSError as err:
        raise FileAccessError(f"cannot write {path}: {err}") from err
