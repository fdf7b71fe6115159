"""Benchmark the compiled kernel backend against the pure-numpy fallback.

Times the four hot kernels on realistic synthetic workloads plus one full
pipeline frame per backend. Run from the repository root:

    python3 benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import math
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from sriodom.cli import Pipeline  # noqa: E402
from sriodom.io import PipelineConfig  # noqa: E402
from sriodom.kernels import available_backends  # noqa: E402

from _scene import beam_directions, raycast, street_world  # noqa: E402


def time_call(fn, repeats):
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def make_workloads(rng):
    n_pts = 120_000
    rows = rng.integers(0, 64, n_pts)
    cols = rng.integers(0, 720, n_pts)
    ranges = rng.uniform(2.0, 80.0, n_pts)
    zs = rng.uniform(-2.0, 3.0, n_pts)
    cdist = rng.uniform(0.0, 0.5, n_pts)

    img = rng.uniform(0.0, 1.0, (64, 720))
    valid = rng.uniform(size=(64, 720)) > 0.3
    kernel = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])

    map_pts = rng.uniform(-50.0, 50.0, (60_000, 3))
    nbr = rng.integers(0, 60_000, (6_000, 8))

    pts = rng.uniform(-30.0, 30.0, (6_000, 3))
    cen = pts + rng.normal(0.0, 0.3, pts.shape)
    vecs = rng.normal(size=pts.shape)
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    ok = rng.uniform(size=len(pts)) > 0.2
    rot = np.eye(3)
    trans = np.zeros(3)

    return {
        "scatter 120k pts": lambda b: b.scatter_min_range(
            rows, cols, ranges, zs, 64, 720, cdist
        ),
        "convolve 64x720": lambda b: b.convolve3x3_valid(img, valid, kernel),
        "fit_planes 6k x 8": lambda b: b.fit_planes(map_pts, nbr, 5, 0.33, 0.2),
        "fit_lines 6k x 8": lambda b: b.fit_lines(map_pts, nbr, 5, 3.0),
        "accum plane 6k": lambda b: b.accum_point_to_plane(
            pts, cen, vecs, ok, rot, trans, 0.1
        ),
        "accum line 6k": lambda b: b.accum_point_to_line(
            pts, cen, vecs, ok, rot, trans, 0.1
        ),
    }


def pipeline_frame_time(backend_name, cloud, repeats):
    import sriodom.kernels as kmod

    saved = {
        name: getattr(kmod, name)
        for name in (
            "scatter_min_range",
            "convolve3x3_valid",
            "fit_lines",
            "fit_planes",
            "accum_point_to_line",
            "accum_point_to_plane",
        )
    }
    target = None
    for mod in available_backends():
        if mod.BACKEND == backend_name:
            target = mod
    for name in saved:
        setattr(kmod, name, getattr(target, name))
    try:
        cfg = PipelineConfig()
        cfg.sri.n_beams = 32
        cfg.sri.fov_min = math.radians(-25.0)
        cfg.sri.fov_max = math.radians(3.0)
        cfg.sri.width = 720
        cfg.odom.undistort_enabled = False
        pipeline = Pipeline(cfg)
        for _ in range(3):  # warm the local map
            pipeline.step(cloud, 0.1)
        return time_call(lambda: pipeline.step(cloud, 0.1), repeats)
    finally:
        for name, fn in saved.items():
            setattr(kmod, name, fn)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(7)
    workloads = make_workloads(rng)
    backends = available_backends()
    names = [b.BACKEND for b in backends]
    print(f"backends: {', '.join(names)}   (best of {args.repeats})\n")

    header = f"{'kernel':<20}" + "".join(f"{n:>12}" for n in names)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for label, call in workloads.items():
        times = [time_call(lambda b=b: call(b), args.repeats) for b in backends]
        row = f"{label:<20}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times)
        if len(times) == 2 and times[1] > 0:
            row += f"{times[0] / times[1]:>9.1f}x"
        print(row)

    world = street_world()
    dirs = beam_directions(32, 1800, math.radians(-25.0), math.radians(3.0))
    from sriodom.geom import Pose

    cloud = raycast(
        world,
        Pose(rotation=np.eye(3), translation=np.array([-30.0, -25.0, 3.0])),
        dirs,
    )
    times = [pipeline_frame_time(n, cloud, args.repeats) for n in names]
    row = f"{'full frame 32x720':<20}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times)
    if len(times) == 2 and times[1] > 0:
        row += f"{times[0] / times[1]:>9.1f}x"
    print(row)


if __name__ == "__main__":
    main()
