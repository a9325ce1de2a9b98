"""Rotation and rigid-pose helpers shared by the data, model and metrics code.

Quaternions are stored as ``(w, x, y, z)`` arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix for a unit quaternion ``(w, x, y, z)``; batched over leading axes."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    r = np.empty(q.shape[:-1] + (3, 3))
    r[..., 0, 0] = 1 - 2 * (y * y + z * z)
    r[..., 0, 1] = 2 * (x * y - w * z)
    r[..., 0, 2] = 2 * (x * z + w * y)
    r[..., 1, 0] = 2 * (x * y + w * z)
    r[..., 1, 1] = 1 - 2 * (x * x + z * z)
    r[..., 1, 2] = 2 * (y * z - w * x)
    r[..., 2, 0] = 2 * (x * z - w * y)
    r[..., 2, 1] = 2 * (y * z + w * x)
    r[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return r


def matrix_to_quat(r: np.ndarray) -> np.ndarray:
    """Unit quaternion with ``w >= 0`` for a rotation matrix (Shepperd's method)."""
    r = np.asarray(r, dtype=np.float64)
    tr = np.trace(r)
    candidates = np.array([tr, r[0, 0], r[1, 1], r[2, 2]])
    i = int(np.argmax(candidates))
    if i == 0:
        s = 2.0 * np.sqrt(1.0 + tr)
        q = [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
    elif i == 1:
        s = 2.0 * np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2])
        q = [(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s]
    elif i == 2:
        s = 2.0 * np.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2])
        q = [(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1])
        q = [(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    q /= np.linalg.norm(q)
    return -q if q[0] < 0 else q


def random_quaternion(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation: normalized 4D standard Gaussian."""
    q = rng.standard_normal(4)
    return q / np.linalg.norm(q)


def axis_angle_matrix(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    k = skew(axis)
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


def rot_z(deg: float) -> np.ndarray:
    return axis_angle_matrix([0.0, 0.0, 1.0], np.deg2rad(deg))


def skew(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def so3_exp(omega) -> np.ndarray:
    omega = np.asarray(omega, dtype=np.float64)
    theta = np.linalg.norm(omega)
    if theta < 1e-12:
        return np.eye(3) + skew(omega)
    return axis_angle_matrix(omega / theta, theta)


def so3_log(r: np.ndarray) -> np.ndarray:
    """Rotation vector of ``r`` (angle in [0, pi])."""
    q = matrix_to_quat(r)
    v = q[1:]
    s = np.linalg.norm(v)
    if s < 1e-15:
        return np.zeros(3)
    angle = 2.0 * np.arctan2(s, q[0])
    return v / s * angle


def geodesic_angle(r1: np.ndarray, r2: np.ndarray) -> float:
    """Angle in radians of the relative rotation ``r1^T r2``."""
    c = (np.trace(r1.T @ r2) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def project_to_so3(m: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


@dataclass(frozen=True)
class Pose:
    """Rigid transform ``x -> R(q) x + t`` with a unit quaternion ``q``."""

    q: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64).reshape(4)
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        n = np.linalg.norm(q)
        if not np.isfinite(n) or abs(n - 1.0) > 1e-9:
            raise ValueError(f"pose quaternion must be unit norm, got |q|={n}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @classmethod
    def from_matrix(cls, r: np.ndarray, t=None) -> "Pose":
        return cls(matrix_to_quat(r), np.zeros(3) if t is None else t)

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ self.rotation.T + self.t

    def inverse(self) -> "Pose":
        r = self.rotation
        qi = self.q * np.array([1.0, -1.0, -1.0, -1.0])
        return Pose(qi, -r.T @ self.t)

    def compose(self, other: "Pose") -> "Pose":
        """``self ∘ other``: apply ``other`` first."""
        r = self.rotation
        return Pose.from_matrix(r @ other.rotation, r @ other.t + self.t)


def euler_zyx(r: np.ndarray) -> np.ndarray:
    """Intrinsic Z-Y-X angles ``(yaw, pitch, roll)`` in degrees, ``R = Rz(yaw) Ry(pitch) Rx(roll)``.

    At gimbal lock (``|pitch| = 90``) roll is fixed to 0 and the remaining
    freedom is folded into yaw.
    """
    r = np.asarray(r, dtype=np.float64)
    s = -r[2, 0]
    if abs(s) < 1.0 - 1e-12:
        pitch = np.arcsin(s)
        yaw = np.arctan2(r[1, 0], r[0, 0])
        roll = np.arctan2(r[2, 1], r[2, 2])
    else:
        pitch = np.copysign(np.pi / 2, s)
        roll = 0.0
        # R[0,1] = -sin(yaw -/+ roll) collapses to -sin(yaw) with roll = 0
        yaw = np.arctan2(-r[0, 1], r[1, 1])
    return np.rad2deg(np.array([yaw, pitch, roll]))


def euler_zyx_to_matrix(angles_deg) -> np.ndarray:
    yaw, pitch, roll = np.deg2rad(np.asarray(angles_deg, dtype=np.float64))
    rz = axis_angle_matrix([0, 0, 1], yaw)
    ry = axis_angle_matrix([0, 1, 0], pitch)
    rx = axis_angle_matrix([1, 0, 0], roll)
    return rz @ ry @ rx


def rigid_sqrt(r: np.ndarray, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rigid transform ``S`` with ``S ∘ S = (r, t)``.

    Uses the principal rotation square root; the translation solves
    ``(R_s + I) t_s = t``, which reduces to ``t / 2`` for pure translations.
    """
    rs = so3_exp(0.5 * so3_log(r))
    ts = np.linalg.lstsq(rs + np.eye(3), t, rcond=None)[0]
    return rs, ts
