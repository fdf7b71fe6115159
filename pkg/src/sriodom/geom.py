"""Rigid-body transform algebra: SE(3) poses, twists, exp/log maps.

Rotations are stored as 3x3 matrices because the hot path is batched point
transformation; Gauss-Newton linearizes on the tangent space regardless.
Composition re-orthonormalizes lazily when accumulated drift exceeds
ORTHO_DRIFT_TOL.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import RotationNearPi

# Below this angle (radians) exp/log switch to second-order Taylor series.
# The switch sits well above the 0/0 point so the closed forms never see
# 1-cos style cancellation; at the boundary the series is exact to ~1e-16.
SMALL_ANGLE = 1e-4
ORTHO_DRIFT_TOL = 1e-9


def skew(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix such that skew(v) @ w == cross(v, w)."""
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


@dataclass(frozen=True)
class Twist:
    """Tangent-space element: axis-angle rotation plus translation part.

    The 6-vector layout used by the optimizer is [linear, angular].
    """

    angular: np.ndarray  # (3,) radians, axis-angle
    linear: np.ndarray  # (3,) meters

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.linear, self.angular])

    @staticmethod
    def from_vector(xi: np.ndarray) -> "Twist":
        xi = np.asarray(xi, dtype=float)
        return Twist(angular=xi[3:6].copy(), linear=xi[0:3].copy())

    @staticmethod
    def zero() -> "Twist":
        return Twist(angular=np.zeros(3), linear=np.zeros(3))

    def scaled(self, s: float) -> "Twist":
        return Twist(angular=self.angular * s, linear=self.linear * s)


@dataclass(frozen=True)
class Pose:
    """SE(3) rigid transform: p_out = rotation @ p_in + translation."""

    rotation: np.ndarray  # (3,3) orthonormal, det +1
    translation: np.ndarray  # (3,) meters

    @staticmethod
    def identity() -> "Pose":
        return Pose(rotation=np.eye(3), translation=np.zeros(3))

    @staticmethod
    def from_matrix(mat: np.ndarray) -> "Pose":
        mat = np.asarray(mat, dtype=float)
        return Pose(rotation=mat[:3, :3].copy(), translation=mat[:3, 3].copy())

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous matrix."""
        out = np.eye(4)
        out[:3, :3] = self.rotation
        out[:3, 3] = self.translation
        return out

    def compose(self, other: "Pose") -> "Pose":
        """Transform applying `other` first, then self."""
        rot = self.rotation @ other.rotation
        if ortho_drift(rot) > ORTHO_DRIFT_TOL:
            rot = orthonormalize(rot)
        return Pose(
            rotation=rot,
            translation=self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "Pose":
        rot_t = self.rotation.T.copy()
        return Pose(rotation=rot_t, translation=-(rot_t @ self.translation))

    def apply(self, p: np.ndarray) -> np.ndarray:
        """Transform a single 3-point."""
        return self.rotation @ np.asarray(p, dtype=float) + self.translation

    def apply_batch(self, pts: np.ndarray) -> np.ndarray:
        """Transform an (n,3) array of points."""
        return pts @ self.rotation.T + self.translation


def ortho_drift(rot: np.ndarray) -> float:
    """Max absolute deviation of R^T R from the identity."""
    return float(np.abs(rot.T @ rot - np.eye(3)).max())


def orthonormalize(rot: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix via SVD, with det +1 enforced."""
    u, _, vt = np.linalg.svd(rot)
    out = u @ vt
    if np.linalg.det(out) < 0:
        u[:, -1] = -u[:, -1]
        out = u @ vt
    return out


def so3_exp(omega: np.ndarray) -> np.ndarray:
    """Rodrigues rotation from an axis-angle vector."""
    angle = float(np.linalg.norm(omega))
    k = skew(omega)
    if angle < SMALL_ANGLE:
        return np.eye(3) + k + 0.5 * (k @ k)
    k2 = k @ k
    half_sinc = math.sin(0.5 * angle) / angle  # (1-cos a)/a^2 == 2*half_sinc^2
    return np.eye(3) + (math.sin(angle) / angle) * k + (2.0 * half_sinc * half_sinc) * k2


def so3_log(rot: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation matrix; angle must be below pi."""
    cos_angle = 0.5 * (np.trace(rot) - 1.0)
    cos_angle = min(1.0, max(-1.0, cos_angle))
    angle = math.acos(cos_angle)
    if angle > math.pi - 1e-6:
        raise RotationNearPi(f"rotation angle {angle:.9f} too close to pi")
    vee = 0.5 * np.array(
        [rot[2, 1] - rot[1, 2], rot[0, 2] - rot[2, 0], rot[1, 0] - rot[0, 1]]
    )
    if angle < SMALL_ANGLE:
        # vee already approximates omega to second order here
        return vee * (1.0 + angle * angle / 6.0)
    return vee * (angle / math.sin(angle))


def _so3_left_jacobian(omega: np.ndarray) -> np.ndarray:
    angle = float(np.linalg.norm(omega))
    k = skew(omega)
    if angle < SMALL_ANGLE:
        return np.eye(3) + 0.5 * k + (k @ k) / 6.0
    k2 = k @ k
    half_sinc = math.sin(0.5 * angle) / angle
    a2 = angle * angle
    return (
        np.eye(3)
        + (2.0 * half_sinc * half_sinc) * k
        + ((angle - math.sin(angle)) / (a2 * angle)) * k2
    )


def _so3_left_jacobian_inv(omega: np.ndarray) -> np.ndarray:
    angle = float(np.linalg.norm(omega))
    k = skew(omega)
    if angle < SMALL_ANGLE:
        return np.eye(3) - 0.5 * k + (k @ k) / 12.0
    k2 = k @ k
    half = 0.5 * angle
    # (1 - (a/2) cot(a/2)) / a^2, evaluated via the half angle for stability
    coeff = (1.0 - half * math.cos(half) / math.sin(half)) / (angle * angle)
    return np.eye(3) - 0.5 * k + coeff * k2


def exp(xi: Twist) -> Pose:
    """SE(3) exponential map."""
    rot = so3_exp(xi.angular)
    trans = _so3_left_jacobian(xi.angular) @ xi.linear
    return Pose(rotation=rot, translation=trans)


def log(pose: Pose) -> Twist:
    """SE(3) logarithm map; raises RotationNearPi for angles near pi."""
    omega = so3_log(pose.rotation)
    rho = _so3_left_jacobian_inv(omega) @ pose.translation
    return Twist(angular=omega, linear=rho)


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
