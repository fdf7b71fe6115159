"""Frame-to-local-map pose estimation.

Edge points are matched against line fits and surface-group points against
plane fits in KD-indexed local maps; the pose minimizing the Huber-weighted
point-to-line and point-to-plane distances is found by Gauss-Newton on the
SE(3) tangent, seeded with a constant-velocity prediction. After
optimization the scan is undistorted with the estimated inter-frame twist
and inserted into the maps, which are voxel-reduced and trimmed to an
axis-aligned box around the current position.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.spatial import cKDTree

from . import geom, kernels
from .errors import InsufficientConstraints
from .geom import Pose, Twist
from .recon import FeatureClouds, cell_keys, voxel_downsample


class FeatureGroupMode(Enum):
    """Which clouds feed the plane term: ground, surfaces, or both."""

    EG = "EG"
    ES = "ES"
    EGS = "EGS"


@dataclass
class OdomConfig:
    neighbor_radius: float = 1.0
    min_neighbors: int = 5
    max_neighbors: int = 8  # cap within the radius, bounds per-point cost
    max_gn_iterations: int = 10
    convergence_eps: float = 1e-4  # combined twist norm
    huber_delta: float = 0.1  # meters; <= 0 disables robust weighting
    map_trim_radius: float = 100.0
    map_edge_leaf: float = 0.2
    map_surface_leaf: float = 0.4
    line_ratio: float = 3.0  # largest/middle eigenvalue gate for lines
    plane_flatness: float = 0.33  # smallest/middle eigenvalue gate for planes
    plane_dist_max: float = 0.2  # mean point-to-plane residual gate
    min_correspondences: int = 10
    feature_group: FeatureGroupMode = FeatureGroupMode.EGS
    # Off for snapshot-style input (simulators, pre-corrected datasets):
    # warping an undistorted scan by the estimated twist only adds error.
    undistort_enabled: bool = True

    def validate(self) -> None:
        for name in (
            "neighbor_radius",
            "min_neighbors",
            "max_neighbors",
            "max_gn_iterations",
            "convergence_eps",
            "map_trim_radius",
            "map_edge_leaf",
            "map_surface_leaf",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


class LocalFeatureMap:
    """Accumulated edge and surface features with KD-tree indices."""

    def __init__(self, trim_radius: float = 100.0):
        self.edge_points = np.zeros((0, 3))
        self.surface_points = np.zeros((0, 3))
        self.trim_radius = trim_radius
        self._trees: dict[str, cKDTree | None] = {"edge": None, "surface": None}

    def points(self, kind: str) -> np.ndarray:
        return self.edge_points if kind == "edge" else self.surface_points

    def set_points(self, kind: str, pts: np.ndarray) -> None:
        if kind == "edge":
            self.edge_points = pts
        else:
            self.surface_points = pts
        self._trees[kind] = None

    def tree(self, kind: str) -> cKDTree | None:
        pts = self.points(kind)
        if len(pts) == 0:
            return None
        if self._trees[kind] is None:
            # Unbalanced build: ~3x faster construction, and the tree is
            # rebuilt every frame after map insertion.
            self._trees[kind] = cKDTree(pts, balanced_tree=False)
        return self._trees[kind]

    def is_empty(self) -> bool:
        return len(self.edge_points) == 0 and len(self.surface_points) == 0

    def radius_query(self, kind: str, center, radius: float) -> np.ndarray:
        """Indices of stored points within `radius` of `center`, sorted."""
        tree = self.tree(kind)
        if tree is None:
            return np.zeros(0, dtype=np.int64)
        idx = tree.query_ball_point(np.asarray(center, dtype=float), radius)
        return np.sort(np.asarray(idx, dtype=np.int64))

    def knn_query(self, kind: str, center, k: int) -> np.ndarray:
        """Indices of the k nearest stored points, nearest first."""
        tree = self.tree(kind)
        if tree is None:
            return np.zeros(0, dtype=np.int64)
        _, idx = tree.query(np.asarray(center, dtype=float), k=min(k, tree.n))
        return np.atleast_1d(np.asarray(idx, dtype=np.int64))

    def neighborhoods(self, kind: str, queries: np.ndarray, radius: float,
                      k: int) -> np.ndarray:
        """(n,k) nearest-neighbor index matrix within `radius`, padded with -1."""
        tree = self.tree(kind)
        n = len(queries)
        if tree is None or n == 0:
            return np.full((n, max(k, 1)), -1, dtype=np.int64)
        kq = min(k, tree.n)
        dist, idx = tree.query(queries, k=kq, distance_upper_bound=radius)
        if kq == 1:
            dist = dist[:, None]
            idx = idx[:, None]
        out = np.where(np.isfinite(dist), idx, -1).astype(np.int64)
        if kq < k:
            out = np.hstack([out, np.full((n, k - kq), -1, dtype=np.int64)])
        return out


@dataclass
class OdomState:
    pose: Pose = field(default_factory=Pose.identity)
    prev_pose: Pose = field(default_factory=Pose.identity)
    velocity: Twist = field(default_factory=Twist.zero)
    frame_index: int = 0
    map: LocalFeatureMap = field(default_factory=LocalFeatureMap)


def predict(state: OdomState, dt: float) -> Pose:
    """Constant-velocity prediction: T_k * exp(velocity * dt)."""
    return state.pose.compose(geom.exp(state.velocity.scaled(dt)))


def fit_line(neighbors: np.ndarray, min_neighbors: int = 5,
             ratio: float = 3.0):
    """Line through a neighborhood: centroid plus dominant eigenvector.

    Returns (point, direction) or None when the neighborhood is too small or
    not line-like (largest eigenvalue under `ratio` times the middle one).
    """
    pts = np.asarray(neighbors, dtype=float).reshape(-1, 3)
    if len(pts) < min_neighbors:
        return None
    centroid = pts.mean(axis=0)
    diffs = pts - centroid
    cov = diffs.T @ diffs / len(pts)
    evals, evecs = np.linalg.eigh(cov)
    if evals[2] <= 1e-12 or evals[2] < ratio * evals[1]:
        return None
    return centroid, evecs[:, 2]


def fit_plane(neighbors: np.ndarray, min_neighbors: int = 5,
              flatness: float = 0.33, dist_max: float = 0.2):
    """Plane through a neighborhood: centroid plus smallest eigenvector.

    Returns (point, normal) or None when the fit is degenerate: too few
    points, collinear points (vanishing middle eigenvalue), insufficient
    flatness, or a mean point-to-plane distance above dist_max.
    """
    pts = np.asarray(neighbors, dtype=float).reshape(-1, 3)
    if len(pts) < min_neighbors:
        return None
    centroid = pts.mean(axis=0)
    diffs = pts - centroid
    cov = diffs.T @ diffs / len(pts)
    evals, evecs = np.linalg.eigh(cov)
    if evals[2] <= 1e-12 or evals[1] <= 1e-6 * evals[2]:
        return None
    if evals[0] > flatness * evals[1]:
        return None
    normal = evecs[:, 0]
    if np.abs(diffs @ normal).mean() > dist_max:
        return None
    return centroid, normal


def edge_residual(pose: Pose, p: np.ndarray, line) -> tuple[float, np.ndarray]:
    """Point-to-line distance and its 1x6 jacobian in [linear, angular].

    The jacobian is taken w.r.t. a right-multiplied twist (T <- T exp(xi)).
    """
    point, direction = line
    q = pose.apply(p)
    cvec = np.cross(q - point, direction)
    value = float(np.linalg.norm(cvec))
    unit = cvec / max(value, 1e-9)
    grad = np.cross(direction, unit)
    jv = pose.rotation.T @ grad
    jw = np.cross(p, jv)
    return value, np.concatenate([jv, jw])


def surface_residual(pose: Pose, p: np.ndarray, plane) -> tuple[float, np.ndarray]:
    """Signed point-to-plane distance and its 1x6 jacobian."""
    point, normal = plane
    q = pose.apply(p)
    value = float(np.dot(q - point, normal))
    jv = pose.rotation.T @ normal
    jw = np.cross(p, jv)
    return value, np.concatenate([jv, jw])


def surface_group(features: FeatureClouds, mode: FeatureGroupMode) -> np.ndarray:
    """Points feeding the plane term under the selected feature group."""
    if mode is FeatureGroupMode.EG:
        return features.ground
    if mode is FeatureGroupMode.ES:
        return features.surface
    return np.vstack([features.surface, features.ground])


def _normal_equations(pose: Pose, edge_pts: np.ndarray, surf_pts: np.ndarray,
                      fmap: LocalFeatureMap, cfg: OdomConfig, timings=None):
    t0 = time.perf_counter()
    rot, trans = pose.rotation, pose.translation
    parts = []
    if len(edge_pts) > 0 and len(fmap.edge_points) > 0:
        q = edge_pts @ rot.T + trans
        nbr = fmap.neighborhoods("edge", q, cfg.neighbor_radius, cfg.max_neighbors)
        cen, dirs, ok = kernels.fit_lines(
            fmap.edge_points, nbr, cfg.min_neighbors, cfg.line_ratio
        )
        parts.append(("line", edge_pts, cen, dirs, ok))
    if len(surf_pts) > 0 and len(fmap.surface_points) > 0:
        q = surf_pts @ rot.T + trans
        nbr = fmap.neighborhoods("surface", q, cfg.neighbor_radius, cfg.max_neighbors)
        cen, nrm, ok = kernels.fit_planes(
            fmap.surface_points, nbr, cfg.min_neighbors,
            cfg.plane_flatness, cfg.plane_dist_max,
        )
        parts.append(("plane", surf_pts, cen, nrm, ok))
    t1 = time.perf_counter()

    H = np.zeros((6, 6))
    b = np.zeros(6)
    cost = 0.0
    count = 0
    for kind, pts, cen, vecs, ok in parts:
        accum = (
            kernels.accum_point_to_line
            if kind == "line"
            else kernels.accum_point_to_plane
        )
        Hi, bi, ci, ni = accum(pts, cen, vecs, ok, rot, trans, cfg.huber_delta)
        H += Hi
        b += bi
        cost += ci
        count += ni
    t2 = time.perf_counter()
    if timings is not None:
        timings["association"] = timings.get("association", 0.0) + (t1 - t0)
        timings["optimization"] = timings.get("optimization", 0.0) + (t2 - t1)
    return H, b, cost, count


def estimate_pose(features: FeatureClouds, state: OdomState, cfg: OdomConfig,
                  dt: float = 0.1, timings=None, cost_history=None) -> Pose:
    """Gauss-Newton frame-to-map alignment starting from the prediction.

    Raises InsufficientConstraints when fewer than cfg.min_correspondences
    valid correspondences exist or the normal equations are singular; the
    caller falls back to the constant-velocity prediction. When a list is
    passed as cost_history, the Huber cost at each linearization point is
    appended to it.
    """
    pose = predict(state, dt)
    if state.map.is_empty():
        return pose
    edge_pts = np.asarray(features.edge, dtype=np.float64).reshape(-1, 3)
    surf_pts = np.asarray(
        surface_group(features, cfg.feature_group), dtype=np.float64
    ).reshape(-1, 3)
    for _ in range(cfg.max_gn_iterations):
        H, b, cost, count = _normal_equations(
            pose, edge_pts, surf_pts, state.map, cfg, timings
        )
        if cost_history is not None:
            cost_history.append(cost)
        if count < cfg.min_correspondences:
            raise InsufficientConstraints(
                f"{count} correspondences < {cfg.min_correspondences}"
            )
        try:
            delta = np.linalg.solve(H, -b)
        except np.linalg.LinAlgError as err:
            raise InsufficientConstraints("singular normal equations") from err
        pose = pose.compose(geom.exp(Twist.from_vector(delta)))
        if float(np.linalg.norm(delta)) < cfg.convergence_eps:
            break
    return pose


def scan_fractions(points: np.ndarray) -> np.ndarray:
    """Acquisition fraction of each point from its azimuth column position."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        return np.zeros(0)
    theta = np.arctan2(pts[:, 1], pts[:, 0])
    return (np.pi - theta) / (2.0 * np.pi)


def undistort(points: np.ndarray, fractions: np.ndarray, motion: Twist) -> np.ndarray:
    """Align all points to the scan-end frame under a constant twist.

    A point at fraction f is transformed by exp(motion * (f - 1)); the last
    point of the scan (f = 1) is untouched. The per-point exponential is
    evaluated in closed form over the whole batch:

        p' = p + A w x p + B w x (w x p) + v + B w x v + C w x (w x v)

    with w, v the scaled angular/linear parts and A = sin(t)/t,
    B = (1-cos(t))/t^2, C = (t-sin(t))/t^3 for the per-point angle t.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        return pts.copy()
    s = (np.asarray(fractions, dtype=np.float64).reshape(-1) - 1.0)[:, None]
    w = motion.angular[None, :] * s
    v = motion.linear[None, :] * s
    t = np.linalg.norm(w, axis=1)
    t2 = t * t
    small = t < 1e-4
    with np.errstate(divide="ignore", invalid="ignore"):
        a_coef = np.where(small, 1.0 - t2 / 6.0, np.sin(t) / np.where(small, 1.0, t))
        b_coef = np.where(
            small,
            0.5 - t2 / 24.0,
            2.0 * np.square(np.sin(0.5 * t)) / np.where(small, 1.0, t2),
        )
        c_coef = np.where(
            small,
            1.0 / 6.0 - t2 / 120.0,
            (t - np.sin(t)) / np.where(small, 1.0, t2 * t),
        )
    wxp = np.cross(w, pts)
    wxwxp = np.cross(w, wxp)
    wxv = np.cross(w, v)
    wxwxv = np.cross(w, wxv)
    return (
        pts
        + a_coef[:, None] * wxp
        + b_coef[:, None] * wxwxp
        + v
        + b_coef[:, None] * wxv
        + c_coef[:, None] * wxwxv
    )


def update_map(fmap: LocalFeatureMap, features: FeatureClouds, pose: Pose,
               cfg: OdomConfig) -> None:
    """Insert transformed features into free voxels and trim around the pose.

    New points are voxel-reduced (centroid per cell of the incoming batch);
    cells already represented in the map keep their existing point, so
    insertion touches only new cells and stored points never smear across
    frames. Trimming keeps points within the axis-aligned box of half-width
    trim_radius centered at the pose translation.
    """
    center = pose.translation
    inserts = {
        "edge": (pose.apply_batch(features.edge), cfg.map_edge_leaf),
        "surface": (
            pose.apply_batch(surface_group(features, cfg.feature_group)),
            cfg.map_surface_leaf,
        ),
    }
    for kind, (new_pts, leaf) in inserts.items():
        existing = fmap.points(kind)
        if len(new_pts) > 0:
            candidates = voxel_downsample(new_pts, leaf)
            if len(existing) > 0:
                occupied = np.isin(
                    cell_keys(candidates, leaf), cell_keys(existing, leaf)
                )
                candidates = candidates[~occupied]
            merged = np.vstack([existing, candidates])
        else:
            merged = existing
        if len(merged) > 0:
            inside = (np.abs(merged - center) <= fmap.trim_radius).all(axis=1)
            merged = merged[inside]
        fmap.set_points(kind, merged)


class Odometry:
    """Stateful per-frame driver: predict, optimize, undistort, map."""

    def __init__(self, cfg: OdomConfig | None = None, dt: float = 0.1):
        self.cfg = cfg or OdomConfig()
        self.cfg.validate()
        self.default_dt = dt
        self.state = OdomState(map=LocalFeatureMap(self.cfg.map_trim_radius))
        self.last_timings: dict[str, float] = {}

    def process(self, features: FeatureClouds, dt: float | None = None) -> Pose:
        """Estimate the pose of one frame and fold it into the local map."""
        dt = self.default_dt if dt is None else dt
        timings: dict[str, float] = {}
        state = self.state
        try:
            pose = estimate_pose(features, state, self.cfg, dt, timings)
        except InsufficientConstraints:
            pose = predict(state, dt)

        motion = geom.log(state.pose.inverse().compose(pose))
        t0 = time.perf_counter()
        if self.cfg.undistort_enabled:
            undistorted = FeatureClouds(
                edge=undistort(features.edge, scan_fractions(features.edge), motion),
                surface=undistort(
                    features.surface, scan_fractions(features.surface), motion
                ),
                ground=undistort(
                    features.ground, scan_fractions(features.ground), motion
                ),
            )
            timings["undistortion"] = time.perf_counter() - t0
        else:
            undistorted = features

        t0 = time.perf_counter()
        update_map(state.map, undistorted, pose, self.cfg)
        timings["map_update"] = time.perf_counter() - t0

        if dt > 0:
            state.velocity = motion.scaled(1.0 / dt)
        state.prev_pose = state.pose
        state.pose = pose
        state.frame_index += 1
        self.last_timings = timings
        return pose
