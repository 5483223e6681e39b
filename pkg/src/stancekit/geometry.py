"""Quaternion, SO(3), and rigid-transform primitives.

Quaternions are scalar-first ``(w, x, y, z)`` float64 arrays. All functions
broadcast over leading batch dimensions, so shapes ``(4,)`` and ``(N, 4)``
work interchangeably. Rotation vectors (``rotvec``) are axis-angle products
in radians.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm == 0.0):
        raise ValueError("cannot normalize zero quaternion")
    return q / norm


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a * b."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    out = q.copy()
    out[..., 1:] = -out[..., 1:]
    return out


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector(s) v by quaternion(s) q."""
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    u = q[..., 1:]
    w = q[..., :1]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def quat_from_axis_angle(axis: np.ndarray, angle: np.ndarray) -> np.ndarray:
    """Unit quaternion for a rotation of `angle` radians about unit `axis`."""
    axis = np.asarray(axis, dtype=np.float64)
    angle = np.asarray(angle, dtype=np.float64)
    half = 0.5 * angle
    s = np.sin(half)
    w = np.cos(half)
    xyz = axis * s[..., None]
    return np.concatenate([np.broadcast_to(w[..., None], xyz.shape[:-1] + (1,)), xyz], axis=-1)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    m = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
    m[..., 0, 0] = 1.0 - 2.0 * (yy + zz)
    m[..., 0, 1] = 2.0 * (xy - wz)
    m[..., 0, 2] = 2.0 * (xz + wy)
    m[..., 1, 0] = 2.0 * (xy + wz)
    m[..., 1, 1] = 1.0 - 2.0 * (xx + zz)
    m[..., 1, 2] = 2.0 * (yz - wx)
    m[..., 2, 0] = 2.0 * (xz - wy)
    m[..., 2, 1] = 2.0 * (yz + wx)
    m[..., 2, 2] = 1.0 - 2.0 * (xx + yy)
    return m


def rotvec_to_quat(rv: np.ndarray) -> np.ndarray:
    """Exponential map: rotation vector -> unit quaternion."""
    rv = np.asarray(rv, dtype=np.float64)
    theta = np.linalg.norm(rv, axis=-1)
    half = 0.5 * theta
    # sin(theta/2)/theta with a series fallback near zero
    small = theta < 1e-8
    safe = np.where(small, 1.0, theta)
    scale = np.where(small, 0.5 - theta * theta / 48.0, np.sin(half) / safe)
    w = np.cos(half)
    return np.concatenate([w[..., None], rv * scale[..., None]], axis=-1)


def quat_to_rotvec(q: np.ndarray) -> np.ndarray:
    """Logarithmic map: unit quaternion -> rotation vector (angle in [0, pi])."""
    q = np.asarray(q, dtype=np.float64)
    q = np.where(q[..., :1] < 0.0, -q, q)
    w = q[..., 0]
    xyz = q[..., 1:]
    n = np.linalg.norm(xyz, axis=-1)
    small = n < 1e-9
    safe_n = np.where(small, 1.0, n)
    # 2*atan2(n, w)/n, series 2/w - 2n^2/(3w^3) for tiny n
    scale = np.where(small, 2.0 / w - 2.0 * n * n / (3.0 * w**3), 2.0 * np.arctan2(n, w) / safe_n)
    return xyz * scale[..., None]


def quat_angle(a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """Geodesic rotation angle of a (or between a and b) in radians."""
    if b is not None:
        a = quat_multiply(a, quat_conjugate(b))
    a = np.asarray(a, dtype=np.float64)
    n = np.linalg.norm(a[..., 1:], axis=-1)
    return 2.0 * np.arctan2(n, np.abs(a[..., 0]))


def quat_slerp(q0: np.ndarray, q1: np.ndarray, fraction: float) -> np.ndarray:
    """Spherical interpolation along the shortest geodesic.

    Endpoints are returned exactly: fraction 0 gives ``q0`` and fraction 1
    gives ``q1`` up to sign.
    """
    q0 = np.asarray(q0, dtype=np.float64)
    q1 = np.asarray(q1, dtype=np.float64)
    dot = float(np.dot(q0, q1))
    q1s = -q1 if dot < 0.0 else q1
    if fraction == 0.0:
        return q0.copy()
    if fraction == 1.0:
        return q1s.copy()
    dot = min(abs(dot), 1.0)
    theta = np.arccos(dot)
    if theta < 1e-9:
        out = (1.0 - fraction) * q0 + fraction * q1s
        return quat_normalize(out)
    s = np.sin(theta)
    out = (np.sin((1.0 - fraction) * theta) / s) * q0 + (np.sin(fraction * theta) / s) * q1s
    return quat_normalize(out)


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix [v]x, batched."""
    v = np.asarray(v, dtype=np.float64)
    m = np.zeros(v.shape[:-1] + (3, 3), dtype=np.float64)
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    m[..., 0, 1] = -z
    m[..., 0, 2] = y
    m[..., 1, 0] = z
    m[..., 1, 2] = -x
    m[..., 2, 0] = -y
    m[..., 2, 1] = x
    return m


def so3_left_jacobian_inverse(phi: np.ndarray) -> np.ndarray:
    """Inverse left Jacobian of SO(3) at rotation vector phi.

    Satisfies d/dw log(Exp(w) Exp(phi)) |_{w=0} = Jl_inv(phi). Used to chain
    angular-velocity Jacobians through rotation-log residuals.
    """
    phi = np.asarray(phi, dtype=np.float64)
    theta = np.linalg.norm(phi, axis=-1)
    ph = skew(phi)
    ph2 = ph @ ph
    small = theta < 1e-3
    safe = np.where(small, 1.0, theta)
    # c(theta) = (1 - theta*sin/(2(1-cos)))/theta^2, series 1/12 + theta^2/720
    one_minus_cos = 1.0 - np.cos(safe)
    c_exact = (1.0 - safe * np.sin(safe) / (2.0 * one_minus_cos)) / (safe * safe)
    c_series = 1.0 / 12.0 + theta * theta / 720.0
    c = np.where(small, c_series, c_exact)
    eye = np.broadcast_to(np.eye(3), ph.shape)
    return eye - 0.5 * ph + c[..., None, None] * ph2


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid-body transform: unit quaternion plus translation in meters."""

    quaternion: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        q = np.array(self.quaternion, dtype=np.float64).reshape(4)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise ValueError(f"pose quaternion is not unit norm: {q}")
        object.__setattr__(self, "quaternion", q)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(quat_identity(), np.zeros(3))

    @classmethod
    def from_axis_angle(cls, axis, angle: float, translation=(0.0, 0.0, 0.0)) -> "Pose":
        return cls(quat_from_axis_angle(np.asarray(axis, dtype=np.float64), angle), translation)

    def compose(self, other: "Pose") -> "Pose":
        q = quat_normalize(quat_multiply(self.quaternion, other.quaternion))
        t = self.translation + quat_rotate(self.quaternion, other.translation)
        return Pose(q, t)

    def __matmul__(self, other: "Pose") -> "Pose":
        return self.compose(other)

    def inverse(self) -> "Pose":
        qc = quat_conjugate(self.quaternion)
        return Pose(qc, -quat_rotate(qc, self.translation))

    def apply(self, v) -> np.ndarray:
        return quat_rotate(self.quaternion, np.asarray(v, dtype=np.float64)) + self.translation

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.quaternion)

    def __repr__(self) -> str:  # compact, round-trippable enough for debugging
        q = np.array2string(self.quaternion, precision=6, suppress_small=True)
        t = np.array2string(self.translation, precision=6, suppress_small=True)
        return f"Pose(q={q}, t={t})"
