"""Acceptance suite: one test per criterion, each printing a PASS line with
its measured numbers (run with -s to see them live). Criteria 8 and 9 need
the KITTI odometry sequence 04 and skip when it is absent (set
KITTI_ODOMETRY_ROOT or place the dataset under data/kitti)."""

import math
import os
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from sriodom import geom, kernels
from sriodom.cli import Pipeline, RunManifest, run_odometry
from sriodom.eval import loop_closure_error, runtime_profile, segment_errors
from sriodom.filter import EDGE_KERNEL, GROUND_KERNEL, fft_ground_filter
from sriodom.geom import Pose, Twist
from sriodom.io import PipelineConfig, read_kitti_poses
from sriodom.odom import (
    LocalFeatureMap,
    OdomConfig,
    OdomState,
    Odometry,
    edge_residual,
    estimate_pose,
    surface_residual,
    update_map,
)
from sriodom.recon import FeatureClouds
from sriodom.sri import SphericalRangeImage, SriParams, project

from _scene import (
    beam_directions,
    loop_trajectory,
    raycast,
    street_world,
    structured_scene,
)


def _kitti_sequence_dir():
    root = os.environ.get("KITTI_ODOMETRY_ROOT", "data/kitti")
    seq = Path(root) / "sequences" / "04" / "velodyne"
    poses = Path(root) / "poses" / "04.txt"
    if seq.is_dir() and poses.is_file():
        return seq, poses
    return None


def _report(criterion: int, text: str) -> None:
    print(f"[criterion {criterion:2d}] PASS  {text}")


def _pose_delta(a: Pose, b: Pose) -> tuple[float, float]:
    rel = a.inverse().compose(b)
    c = 0.5 * (np.trace(rel.rotation) - 1.0)
    return (
        float(np.linalg.norm(rel.translation)),
        math.acos(min(1.0, max(-1.0, c))),
    )


def test_criterion_1_filter_oracles(rng):
    start = time.monotonic()
    for _ in range(100):
        img = rng.uniform(0.0, 1.0, (32, 64))
        valid = rng.uniform(size=(32, 64)) > 0.15
        for kernel in (EDGE_KERNEL, GROUND_KERNEL):
            out, ok = kernels.convolve3x3_valid(img, valid, kernel)
            k = kernel
            # Independent nine-tap dot product, same accumulation order.
            for i in range(1, 31):
                for j in range(1, 63):
                    if not valid[i - 1 : i + 2, j - 1 : j + 2].all():
                        assert not ok[i, j]
                        continue
                    acc = k[0, 0] * img[i - 1, j - 1]
                    acc = acc + k[0, 1] * img[i - 1, j]
                    acc = acc + k[0, 2] * img[i - 1, j + 1]
                    acc = acc + k[1, 0] * img[i, j - 1]
                    acc = acc + k[1, 1] * img[i, j]
                    acc = acc + k[1, 2] * img[i, j + 1]
                    acc = acc + k[2, 0] * img[i + 1, j - 1]
                    acc = acc + k[2, 1] * img[i + 1, j]
                    acc = acc + k[2, 2] * img[i + 1, j + 1]
                    assert out[i, j] == acc

    for _ in range(100):
        ranges = rng.uniform(1.0, 60.0, (16, 32))
        valid = rng.uniform(size=(16, 32)) > 0.2
        img = SphericalRangeImage(
            ranges=np.where(valid, ranges, 0.0),
            z_map=np.zeros((16, 32)),
            valid=valid,
        )
        filtered, _ = fft_ground_filter(img)
        vals = img.ranges[valid]
        lo, hi = vals.min(), vals.max()
        span = hi - lo
        gray = np.where(valid, (img.ranges - lo) / span, 0.0)
        expected = np.zeros_like(gray)
        for i in range(16):
            if valid[i].any():
                mean = gray[i, valid[i]].mean()
                expected[i, valid[i]] = (gray[i, valid[i]] - mean) * span
        assert np.abs(filtered.ranges - expected)[valid].max() < 1e-6 * span

    elapsed = time.monotonic() - start
    assert elapsed < 5.0
    _report(1, f"Sobel bit-exact + FFT row-mean oracle on 100 images ({elapsed:.2f} s)")


def test_criterion_2_round_trip_geometry(rng):
    start = time.monotonic()
    params = SriParams(width=720, n_beams=64, fov_min=math.radians(-24.8),
                       fov_max=math.radians(2.0))
    pts = []
    while len(pts) < 1000:
        r = rng.uniform(2.0, 80.0)
        theta = rng.uniform(-math.pi, math.pi)
        phi = rng.uniform(params.fov_min, params.fov_max)
        pts.append(
            [r * math.cos(phi) * math.cos(theta),
             r * math.cos(phi) * math.sin(theta),
             r * math.sin(phi)]
        )
    pts = np.array(pts)
    img = project(pts, params)

    # Keep only singly occupied cells: pair inputs with their cell.
    r_in = np.linalg.norm(pts, axis=1)
    theta_in = np.arctan2(pts[:, 1], pts[:, 0])
    phi_in = np.arcsin(pts[:, 2] / r_in)
    scaled = (math.pi - theta_in) * params.x_res + 0.5
    jj = np.floor(scaled).astype(np.int64) % params.width
    ii = np.floor((phi_in - params.fov_min) * params.y_res).astype(np.int64)
    np.clip(ii, 0, params.n_beams - 1, out=ii)
    keys = ii * params.width + jj
    uniq, counts = np.unique(keys, return_counts=True)
    single = np.isin(keys, uniq[counts == 1])
    assert single.sum() > 800

    checked = 0
    for idx in np.nonzero(single)[0]:
        i, j = ii[idx], jj[idx]
        assert img.valid[i, j]
        rec_r = img.ranges[i, j]
        assert abs(rec_r - r_in[idx]) / r_in[idx] < 1e-6
        omega = math.pi - 2.0 * math.pi * j / params.width
        diff = abs((theta_in[idx] - omega + math.pi) % (2.0 * math.pi) - math.pi)
        assert diff <= 2.0 * math.pi / 720.0
        checked += 1
    elapsed = time.monotonic() - start
    assert elapsed < 1.0
    _report(2, f"{checked} distinct-cell points: range 1e-6 rel, azimuth <= 2pi/720 ({elapsed:.2f} s)")


def test_criterion_3_jacobian_suite(rng):
    start = time.monotonic()
    step = 1e-6
    checked = 0
    while checked < 1000:
        pose = geom.exp(
            Twist(angular=rng.uniform(-1, 1, 3), linear=rng.uniform(-2, 2, 3))
        )
        p = rng.uniform(-5, 5, 3)
        target = rng.uniform(-5, 5, 3)
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        use_edge = checked % 2 == 0
        fn = edge_residual if use_edge else surface_residual
        value, J = fn(pose, p, (target, direction))
        if use_edge and value < 1e-3:
            continue  # the unsigned distance is non-smooth at zero
        num = np.zeros(6)
        for k in range(6):
            delta = np.zeros(6)
            delta[k] = step
            plus, _ = fn(pose.compose(geom.exp(Twist.from_vector(delta))), p, (target, direction))
            minus, _ = fn(pose.compose(geom.exp(Twist.from_vector(-delta))), p, (target, direction))
            num[k] = (plus - minus) / (2.0 * step)
        scale = max(float(np.abs(num).max()), 1.0)
        assert np.abs(J - num).max() / scale < 1e-5
        checked += 1
    elapsed = time.monotonic() - start
    assert elapsed < 5.0
    _report(3, f"1000 jacobians within 1e-5 of central differences ({elapsed:.2f} s)")


def _recover(scene, frame, cfg):
    state = OdomState(map=LocalFeatureMap(cfg.map_trim_radius))
    update_map(state.map, scene, Pose.identity(), cfg)
    return estimate_pose(frame, state, cfg)


def test_criterion_4_rigid_motion_recovery(rng):
    start = time.monotonic()
    cfg = OdomConfig()
    scene = structured_scene()
    t0 = Pose(
        rotation=geom.rot_z(math.radians(2.0)),
        translation=np.array([0.3, -0.1, 0.05]),
    )
    frame = FeatureClouds(
        edge=t0.apply_batch(scene.edge),
        surface=t0.apply_batch(scene.surface),
        ground=t0.apply_batch(scene.ground),
    )
    recovered = _recover(scene, frame, cfg)
    t_err, r_err = _pose_delta(t0.inverse(), recovered)
    assert t_err < 1e-3
    assert r_err < 1e-4

    t_errs, r_errs = [], []
    for seed in range(20):
        gen = np.random.default_rng(1000 + seed)
        noisy = FeatureClouds(
            edge=frame.edge + gen.normal(0.0, 0.02, frame.edge.shape),
            surface=frame.surface + gen.normal(0.0, 0.02, frame.surface.shape),
            ground=frame.ground,
        )
        rec = _recover(scene, noisy, cfg)
        te, re = _pose_delta(t0.inverse(), rec)
        t_errs.append(te)
        r_errs.append(re)
    t95 = float(np.percentile(t_errs, 95))
    r95 = float(np.percentile(r_errs, 95))
    assert t95 < 0.02
    assert r95 < 0.005
    elapsed = time.monotonic() - start
    assert elapsed < 30.0
    _report(
        4,
        f"noiseless {t_err:.2e} m/{r_err:.2e} rad; noisy p95 {t95:.4f} m/{r95:.5f} rad ({elapsed:.1f} s)",
    )


def test_criterion_5_zero_motion_fixed_point():
    odo = Odometry(OdomConfig(), dt=0.1)
    scene = structured_scene()
    first = odo.process(scene)
    second = odo.process(scene)
    t_err, r_err = _pose_delta(first, second)
    assert t_err < 1e-6
    assert r_err < 1e-7
    _report(5, f"identical frames: relative pose {t_err:.2e} m / {r_err:.2e} rad")


def test_criterion_6_spatial_index_equivalence(rng):
    fmap = LocalFeatureMap()
    pts = rng.uniform(-50.0, 50.0, (10_000, 3))
    fmap.set_points("surface", pts)
    for _ in range(1000):
        center = rng.uniform(-50.0, 50.0, 3)
        got = fmap.radius_query("surface", center, 1.0)
        want = np.sort(
            np.nonzero(np.linalg.norm(pts - center, axis=1) <= 1.0)[0]
        )
        assert np.array_equal(got, want)
        got_k = fmap.knn_query("surface", center, 8)
        dists = np.linalg.norm(pts - center, axis=1)
        want_k = np.argsort(dists)[:8]
        assert np.array_equal(np.sort(got_k), np.sort(want_k))
    _report(6, "radius and 8-NN queries match brute force on 1000 queries")


def test_criterion_7_synthetic_loop():
    start = time.monotonic()
    world = street_world()
    dirs = beam_directions(32, 1800, math.radians(-25.0), math.radians(3.0))
    poses = loop_trajectory(length=100.0, width=50.0, n_frames=1160)
    cfg = PipelineConfig()
    cfg.sri.n_beams = 32
    cfg.sri.fov_min = math.radians(-25.0)
    cfg.sri.fov_max = math.radians(3.0)
    cfg.sri.width = 720
    cfg.odom.undistort_enabled = False  # raycast frames are instantaneous
    pipeline = Pipeline(cfg)
    trajectory = []
    for gt in poses:
        cloud = raycast(world, gt, dirs)
        pose, _ = pipeline.step(cloud, 0.1)
        trajectory.append(pose)
    report = loop_closure_error(trajectory)
    elapsed = time.monotonic() - start
    assert report.d < 1.0
    assert elapsed < 300.0
    _report(
        7,
        f"100x50 m loop, {len(trajectory)} frames at 10 Hz: d = {report.d:.3f} m ({elapsed:.0f} s)",
    )


kitti = _kitti_sequence_dir()


@pytest.mark.skipif(kitti is None, reason="KITTI odometry sequence 04 not present")
def test_criterion_8_kitti_sequence_04(tmp_path):
    start = time.monotonic()
    seq_dir, poses_path = kitti
    manifest = RunManifest(
        input_dir=str(seq_dir), output_dir=str(tmp_path), profile="hdl64"
    )
    trajectory, _ = run_odometry(manifest)
    truth = read_kitti_poses(poses_path)
    assert len(trajectory) == len(truth) == 271
    report = segment_errors(trajectory, truth)
    elapsed = time.monotonic() - start
    assert report.ate_percent <= 2.0
    assert report.are_deg_per_100m <= 1.0
    assert elapsed < 120.0
    _report(
        8,
        f"seq 04: ATE {report.ate_percent:.2f}% ARE {report.are_deg_per_100m:.2f} deg/100m ({elapsed:.0f} s)",
    )


@pytest.mark.skipif(kitti is None, reason="KITTI odometry sequence 04 not present")
def test_criterion_9_performance_envelope(tmp_path):
    seq_dir, _ = kitti
    manifest = RunManifest(
        input_dir=str(seq_dir), output_dir=str(tmp_path), profile="hdl64"
    )
    _, timings = run_odometry(manifest)
    profile = runtime_profile(timings)
    mean_ms = profile["total"].mean * 1e3
    if mean_ms >= 150.0:
        warnings.warn(
            f"mean frame time {mean_ms:.0f} ms exceeds the 150 ms envelope "
            "(informational; hardware dependent)"
        )
    _report(9, f"seq 04 mean frame time {mean_ms:.0f} ms (envelope 150 ms, informational)")


def test_criterion_10_evaluation_self_test():
    truth = [
        Pose(rotation=np.eye(3), translation=np.array([i * 1.0, 0.0, 0.0]))
        for i in range(901)
    ]
    est = [
        Pose(rotation=np.eye(3), translation=p.translation * 1.01) for p in truth
    ]
    report = segment_errors(est, truth)
    assert abs(report.ate_percent - 1.0) < 1e-6
    assert report.are_deg_per_m == 0.0

    start = Pose.identity()
    end = Pose(rotation=np.eye(3), translation=np.array([0.26, 0.85, 0.15]))
    loop = loop_closure_error([start, end])
    assert abs(loop.d - 0.90) <= 0.01
    _report(
        10,
        f"scaled fixture ATE {report.ate_percent:.6f}%, ARE 0; loop d {loop.d:.4f} m",
    )
