"""Trajectory scoring: segment-wise translation/rotation errors, loop
closure, and per-stage runtime summaries.

Segment errors follow the standard odometry benchmark protocol: from every
10th frame, for each ladder length of ground-truth arc length, compare the
relative motion of estimate and truth; translation error is reported as a
percentage of segment length, rotation error in degrees per meter and per
100 m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import TrajectoryTooShort
from .geom import Pose

KITTI_LENGTHS = (100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0)
# Reduced ladder for desk-scale synthetic paths; not benchmark-comparable.
SHORT_LENGTHS = (10.0, 20.0, 50.0)
SEGMENT_STRIDE = 10


@dataclass
class SegmentErrorReport:
    ate_percent: float
    are_deg_per_m: float
    are_deg_per_100m: float
    per_length: dict[float, tuple[float, float]] = field(default_factory=dict)
    segment_count: int = 0

    def summary(self) -> str:
        lines = [
            f"ATE: {self.ate_percent:.4f} %",
            f"ARE: {self.are_deg_per_m:.6f} deg/m ({self.are_deg_per_100m:.4f} deg/100m)",
            f"segments: {self.segment_count}",
        ]
        for length in sorted(self.per_length):
            t, r = self.per_length[length]
            lines.append(f"  {length:6.0f} m: {t:.4f} %  {r * 100.0:.4f} deg/100m")
        return "\n".join(lines)


@dataclass
class LoopClosureReport:
    x: float
    y: float
    z: float
    d: float

    def summary(self) -> str:
        return (
            f"loop closure: x={self.x:.3f} y={self.y:.3f} z={self.z:.3f} "
            f"d={self.d:.3f} m"
        )


def _arc_lengths(trajectory: list[Pose]) -> np.ndarray:
    t = np.array([p.translation for p in trajectory])
    steps = np.linalg.norm(np.diff(t, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(steps)])


def _rotation_angle(rot: np.ndarray) -> float:
    c = 0.5 * (np.trace(rot) - 1.0)
    return math.acos(min(1.0, max(-1.0, c)))


def segment_errors(estimate: list[Pose], truth: list[Pose],
                   lengths=KITTI_LENGTHS,
                   stride: int = SEGMENT_STRIDE) -> SegmentErrorReport:
    """Average relative-pose errors over the segment-length ladder.

    Raises TrajectoryTooShort when the ground truth covers less arc length
    than the shortest ladder rung.
    """
    if len(estimate) != len(truth):
        raise ValueError("trajectories must have equal length")
    if len(truth) < 2:
        raise TrajectoryTooShort("need at least 2 poses")
    dist = _arc_lengths(truth)
    if dist[-1] < min(lengths):
        raise TrajectoryTooShort(
            f"arc length {dist[-1]:.1f} m below shortest segment {min(lengths)} m"
        )
    t_errs: list[float] = []
    r_errs: list[float] = []
    by_length: dict[float, list[tuple[float, float]]] = {L: [] for L in lengths}
    for first in range(0, len(truth), stride):
        for L in lengths:
            last = int(np.searchsorted(dist, dist[first] + L))
            if last >= len(truth):
                continue
            rel_truth = truth[first].inverse().compose(truth[last])
            rel_est = estimate[first].inverse().compose(estimate[last])
            err = rel_truth.inverse().compose(rel_est)
            t_err = float(np.linalg.norm(err.translation)) / L
            r_err = _rotation_angle(err.rotation) / L
            t_errs.append(t_err)
            r_errs.append(r_err)
            by_length[L].append((t_err, r_err))
    if not t_errs:
        raise TrajectoryTooShort("no complete segments")
    are_rad_per_m = float(np.mean(r_errs))
    per_length = {
        L: (
            100.0 * float(np.mean([t for t, _ in pairs])),
            math.degrees(float(np.mean([r for _, r in pairs]))),
        )
        for L, pairs in by_length.items()
        if pairs
    }
    return SegmentErrorReport(
        ate_percent=100.0 * float(np.mean(t_errs)),
        are_deg_per_m=math.degrees(are_rad_per_m),
        are_deg_per_100m=math.degrees(are_rad_per_m) * 100.0,
        per_length=per_length,
        segment_count=len(t_errs),
    )


def loop_closure_error(estimate: list[Pose]) -> LoopClosureReport:
    """Component-wise start-to-end position gap and its modulus."""
    if len(estimate) < 2:
        raise TrajectoryTooShort("need at least 2 poses")
    delta = estimate[-1].translation - estimate[0].translation
    return LoopClosureReport(
        x=float(delta[0]),
        y=float(delta[1]),
        z=float(delta[2]),
        d=float(np.linalg.norm(delta)),
    )


@dataclass
class StageStats:
    mean: float
    median: float
    p95: float


def runtime_profile(frame_timings: list[dict[str, float]]) -> dict[str, StageStats]:
    """Aggregate per-frame stage durations; includes a 'total' pseudo-stage."""
    if not frame_timings:
        raise ValueError("need at least one frame of timings")
    stages: dict[str, list[float]] = {}
    for frame in frame_timings:
        for name, value in frame.items():
            stages.setdefault(name, []).append(value)
        stages.setdefault("total", []).append(sum(frame.values()))
    out = {}
    for name, values in stages.items():
        arr = np.asarray(values)
        out[name] = StageStats(
            mean=float(arr.mean()),
            median=float(np.median(arr)),
            p95=float(np.percentile(arr, 95)),
        )
    return out


def profile_summary(profile: dict[str, StageStats]) -> str:
    lines = [f"{'stage':<14} {'mean':>9} {'median':>9} {'p95':>9}  (ms)"]
    for name in sorted(profile, key=lambda s: (s == "total", s)):
        st = profile[name]
        lines.append(
            f"{name:<14} {st.mean * 1e3:9.2f} {st.median * 1e3:9.2f} {st.p95 * 1e3:9.2f}"
        )
    return "\n".join(lines)


def report_csv(report: SegmentErrorReport) -> str:
    """Per-bucket CSV rows for plotting."""
    rows = ["length_m,translation_percent,rotation_deg_per_100m"]
    for length in sorted(report.per_length):
        t, r = report.per_length[length]
        rows.append(f"{length:.0f},{t:.6f},{r * 100.0:.6f}")
    return "\n".join(rows) + "\n"
