"""Batch pipeline driver.

Subcommands:
  run            odometry over a directory of .bin frames -> pose file
  eval           score an estimated trajectory against ground truth
  dump-sri       write one frame's range image as a PGM
  dump-features  write one frame's segmented feature clouds as a PLY

Exit codes: 0 success, 1 fatal config/IO error, 2 evaluation parse failure.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import eval as evalmod
from . import io as iomod
from .errors import SriodomError
from .filter import segment_frequency, segment_sobel
from .geom import Pose
from .io import FrameSource, PipelineConfig, load_config
from .odom import FeatureGroupMode, Odometry
from .recon import FeatureClouds, downsample_features, reconstruct_features
from .sri import interpolate_rows, project

PROFILES = {
    "hdl64": dict(
        n_beams=64,
        fov_min_deg=-24.8,
        fov_max_deg=2.0,
        interpolation_factor=1,
        filter_path="sobel",
        feature_group="EGS",
        width=720,
    ),
    "vlp16": dict(
        n_beams=16,
        fov_min_deg=-15.0,
        fov_max_deg=15.0,
        interpolation_factor=2,
        filter_path="fft",
        feature_group="ES",
        width=720,
    ),
}


@dataclass
class RunManifest:
    input_dir: str
    output_dir: str
    config_path: str | None = None
    profile: str = "hdl64"
    resolution: int | None = None
    features: str | None = None
    filter_path: str | None = None
    dump_sri: bool = False
    dump_features: bool = False


def build_config(manifest: RunManifest) -> PipelineConfig:
    """Profile defaults, then config file, then explicit flags."""
    cfg = PipelineConfig()
    profile = PROFILES[manifest.profile]
    cfg.sri.n_beams = profile["n_beams"]
    cfg.sri.fov_min = math.radians(profile["fov_min_deg"])
    cfg.sri.fov_max = math.radians(profile["fov_max_deg"])
    cfg.sri.interpolation_factor = profile["interpolation_factor"]
    cfg.sri.width = profile["width"]
    cfg.filter_path = profile["filter_path"]
    cfg.odom.feature_group = FeatureGroupMode(profile["feature_group"])
    if manifest.config_path:
        cfg = load_config(manifest.config_path, base=cfg)
    if manifest.resolution is not None:
        cfg.sri.width = manifest.resolution
    if manifest.features is not None:
        cfg.odom.feature_group = FeatureGroupMode(manifest.features)
    if manifest.filter_path is not None:
        cfg.filter_path = manifest.filter_path
    return cfg


class Pipeline:
    """Stateful frame pipeline: project, filter, reconstruct, estimate."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.odometry = Odometry(cfg.odom, dt=cfg.dt)
        self.last_image = None
        self.last_features = None

    def step(self, cloud: np.ndarray, dt: float | None = None):
        """Process one frame; returns (pose, stage timings in seconds)."""
        cfg = self.cfg
        timings: dict[str, float] = {}

        t0 = time.perf_counter()
        img = project(cloud, cfg.sri)
        if cfg.sri.interpolation_factor > 1:
            img = interpolate_rows(
                img, cfg.sri.interpolation_factor, cfg.sri.interp_max_gap
            )
        timings["projection"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        if cfg.filter_path == "fft":
            images = segment_frequency(img, cfg.sobel)
        else:
            images = segment_sobel(img, cfg.sobel)
        timings["filtering"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        clouds = reconstruct_features(images)
        clouds = downsample_features(
            clouds, cfg.voxel_edge, cfg.voxel_surface, cfg.voxel_ground
        )
        timings["reconstruction"] = time.perf_counter() - t0

        pose = self.odometry.process(clouds, dt)
        timings.update(self.odometry.last_timings)
        self.last_image = img
        self.last_features = clouds
        return pose, timings


def run_odometry(manifest: RunManifest):
    """Drive the pipeline over a frame directory.

    Returns (trajectory, per-frame timing dicts). Frame-level failures are
    logged and skipped: the pose advances by prediction (empty feature set).
    """
    cfg = build_config(manifest)
    source = FrameSource(manifest.input_dir, default_dt=cfg.dt)
    out_dir = Path(manifest.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pipeline = Pipeline(cfg)
    trajectory: list[Pose] = []
    all_timings: list[dict[str, float]] = []
    prev_time: float | None = None
    empty = FeatureClouds(
        edge=np.zeros((0, 3)), surface=np.zeros((0, 3)), ground=np.zeros((0, 3))
    )
    if len(source) == 0:
        print(f"warning: no frames found in {manifest.input_dir}", file=sys.stderr)

    for index in range(len(source)):
        try:
            cloud, stamp = source.read(index)
            dt = cfg.dt if prev_time is None else max(stamp - prev_time, 1e-6)
            prev_time = stamp
            pose, timings = pipeline.step(cloud, dt)
        except SriodomError as err:
            print(f"warning: frame {index}: {err}", file=sys.stderr)
            pose = pipeline.odometry.process(empty, cfg.dt)
            timings = {}
        trajectory.append(pose)
        if timings:
            all_timings.append(timings)
        if manifest.dump_sri and pipeline.last_image is not None:
            iomod.write_sri_pgm(out_dir / f"sri_{index:06d}.pgm", pipeline.last_image)
        if manifest.dump_features and pipeline.last_features is not None:
            fc = pipeline.last_features
            iomod.write_ply(
                out_dir / f"features_{index:06d}.ply",
                {"edge": fc.edge, "surface": fc.surface, "ground": fc.ground},
            )

    iomod.write_kitti_poses(trajectory, out_dir / "trajectory.txt")
    if all_timings:
        profile = evalmod.runtime_profile(all_timings)
        print(evalmod.profile_summary(profile))
    return trajectory, all_timings


def run_eval(estimate_path, truth_path, short_ladder: bool = False,
             output_dir=None) -> int:
    """Score a trajectory; writes text + CSV reports, prints the summary."""
    try:
        estimate = iomod.read_kitti_poses(estimate_path)
        truth = iomod.read_kitti_poses(truth_path)
    except SriodomError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    lengths = evalmod.SHORT_LENGTHS if short_ladder else evalmod.KITTI_LENGTHS
    out_dir = Path(output_dir) if output_dir else Path(estimate_path).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    try:
        report = evalmod.segment_errors(estimate, truth, lengths=lengths)
        if short_ladder:
            lines.append("(reduced segment ladder; not benchmark-comparable)")
        lines.append(report.summary())
        (out_dir / "report.csv").write_text(evalmod.report_csv(report))
    except SriodomError as err:
        lines.append(f"segment errors unavailable: {err}")
    try:
        lines.append(evalmod.loop_closure_error(estimate).summary())
    except SriodomError as err:
        lines.append(f"loop closure unavailable: {err}")
    text = "\n".join(lines)
    print(text)
    (out_dir / "report.txt").write_text(text + "\n")
    return 0


def _dump_single_frame(args, what: str) -> int:
    manifest = RunManifest(
        input_dir=".",
        output_dir=".",
        profile=args.profile,
        resolution=args.resolution,
        features=args.features,
        filter_path=args.filter,
        config_path=args.config,
    )
    cfg = build_config(manifest)
    cloud = iomod.read_velodyne_bin(args.input)
    img = project(cloud, cfg.sri)
    if cfg.sri.interpolation_factor > 1:
        img = interpolate_rows(img, cfg.sri.interpolation_factor, cfg.sri.interp_max_gap)
    if what == "sri":
        iomod.write_sri_pgm(args.output, img)
    else:
        segment = segment_frequency if cfg.filter_path == "fft" else segment_sobel
        clouds = reconstruct_features(segment(img, cfg.sobel))
        iomod.write_ply(
            args.output,
            {"edge": clouds.edge, "surface": clouds.surface, "ground": clouds.ground},
        )
    return 0


def _add_pipeline_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="key = value config file")
    parser.add_argument("--profile", choices=sorted(PROFILES), default="hdl64")
    parser.add_argument("--resolution", type=int, choices=(360, 720, 1024), default=None)
    parser.add_argument("--features", choices=("EG", "ES", "EGS"), default=None)
    parser.add_argument("--filter", choices=("sobel", "fft"), default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sriodom",
        description="LiDAR odometry from filtered spherical range images",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run odometry over a frame directory")
    run_p.add_argument("--input", required=True, help="directory of .bin frames")
    run_p.add_argument("--output", required=True, help="output directory")
    _add_pipeline_args(run_p)
    run_p.add_argument("--dump-sri", action="store_true")
    run_p.add_argument("--dump-features", action="store_true")

    eval_p = sub.add_parser("eval", help="score a trajectory against ground truth")
    eval_p.add_argument("--estimate", required=True)
    eval_p.add_argument("--truth", required=True)
    eval_p.add_argument("--short-ladder", action="store_true")
    eval_p.add_argument("--output", default=None)

    for name in ("dump-sri", "dump-features"):
        d = sub.add_parser(name, help=f"write one frame's {name.split('-')[1]}")
        d.add_argument("--input", required=True, help="a single .bin frame")
        d.add_argument("--output", required=True)
        _add_pipeline_args(d)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            manifest = RunManifest(
                input_dir=args.input,
                output_dir=args.output,
                config_path=args.config,
                profile=args.profile,
                resolution=args.resolution,
                features=args.features,
                filter_path=args.filter,
                dump_sri=args.dump_sri,
                dump_features=args.dump_features,
            )
            run_odometry(manifest)
            return 0
        if args.command == "eval":
            return run_eval(
                args.estimate, args.truth, args.short_ladder, args.output
            )
        if args.command == "dump-sri":
            return _dump_single_frame(args, "sri")
        if args.command == "dump-features":
            return _dump_single_frame(args, "features")
    except SriodomError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
