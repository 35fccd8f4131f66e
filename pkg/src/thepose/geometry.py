"""SE(3) math, camera model and point sampling shared by the whole pipeline.

Conventions:
  - camera frame: x right, y down, z forward (depth); units are meters
  - pixel (u, v): u is the column index, v the row index
  - rotations are 3x3 row-major matrices acting on column vectors
  - an object's "up" axis is column 3 of its rotation matrix
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import Error


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole camera intrinsics (no distortion)."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise Error("shape", "focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise Error("shape", "principal point must lie inside the image")


@dataclass(frozen=True)
class RigidTransform:
    """Rotation + translation; R must be a proper rotation."""

    R: np.ndarray  # 3x3
    t: np.ndarray  # 3

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.float64)
        t = np.asarray(self.t, dtype=np.float64)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)
        if R.shape != (3, 3) or t.shape != (3,):
            raise Error("shape", "RigidTransform needs a 3x3 R and 3-vector t")
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-9:
            raise Error("shape", "R is not orthonormal within 1e-9")
        if abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise Error("shape", "det(R) != +1 within 1e-9")

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.R.T, -self.R.T @ self.t)


@dataclass(frozen=True)
class Pose:
    """Object pose: rotation, translation (m) and per-axis box extents (m)."""

    rotation: np.ndarray  # 3x3
    translation: np.ndarray  # 3
    size: np.ndarray  # 3, positive extents

    def __post_init__(self):
        rt = RigidTransform(self.rotation, self.translation)  # validates R
        object.__setattr__(self, "rotation", rt.R)
        object.__setattr__(self, "translation", rt.t)
        s = np.asarray(self.size, dtype=np.float64)
        object.__setattr__(self, "size", s)
        if s.shape != (3,) or not np.all(s > 0):
            raise Error("shape", "size must be 3 positive extents")


def backproject_depth(depth, mask, K: Intrinsics):
    """Back-project masked depth pixels into camera-frame 3D points.

    Returns (points, pixel_indices): one point per True mask pixel with
    x=(u-cx)*d/fx, y=(v-cy)*d/fy, z=d, and the flat row-major pixel index
    of each point so image features can later be gathered per point.
    """
    depth = np.asarray(depth, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if depth.shape != mask.shape or depth.shape != (K.height, K.width):
        raise Error("shape", "depth/mask must be H x W matching the intrinsics")
    flat = np.flatnonzero(mask.ravel())
    if flat.size == 0:
        raise Error("empty-object", "mask selects no pixels")
    d = depth.ravel()[flat]
    if not np.all(np.isfinite(d)) or np.any(d <= 0):
        raise Error("invalid-depth", "masked depth must be finite and > 0")
    v, u = np.unravel_index(flat, mask.shape)
    pts = np.empty((flat.size, 3), dtype=np.float64)
    pts[:, 0] = (u - K.cx) * d / K.fx
    pts[:, 1] = (v - K.cy) * d / K.fy
    pts[:, 2] = d
    return pts, flat


def project_points(points, K: Intrinsics):
    """Project camera-frame points to continuous pixel coordinates (u, v)."""
    p = np.asarray(points, dtype=np.float64)
    u = K.fx * p[:, 0] / p[:, 2] + K.cx
    v = K.fy * p[:, 1] / p[:, 2] + K.cy
    return np.stack([u, v], axis=1)


def sample_points(points, n: int, seed: int):
    """Uniformly sample n points: without replacement if possible.

    Deterministic for a fixed seed. Returns (sampled_points, indices) where
    indices map into the input array.
    """
    pts = np.asarray(points)
    if n < 1:
        raise Error("shape", "n must be >= 1")
    rng = np.random.default_rng(seed)
    if len(pts) >= n:
        idx = rng.choice(len(pts), size=n, replace=False)
    else:
        idx = rng.choice(len(pts), size=n, replace=True)
    return pts[idx], idx


def apply_se3(T: RigidTransform, points):
    """p' = R p + t for every point."""
    p = np.asarray(points, dtype=np.float64)
    return p @ T.R.T + T.t


def geodesic_angle(R1, R2) -> float:
    """Angle in degrees between two rotations: arccos((tr(R1^T R2)-1)/2)."""
    c = (np.trace(np.asarray(R1).T @ np.asarray(R2)) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


def gram_schmidt_rotation(a1, a2) -> np.ndarray:
    """Assemble a rotation from two axes: a1 -> column 3, a2 -> column 1.

    Column 1 is a2 made orthogonal to a1, column 2 closes the right-handed
    frame. Raises for near-zero or near-parallel inputs.
    """
    a1 = np.asarray(a1, dtype=np.float64)
    a2 = np.asarray(a2, dtype=np.float64)
    n1 = np.linalg.norm(a1)
    if n1 <= 1e-8:
        raise Error("degenerate-axes", "a1 is (near) zero")
    c3 = a1 / n1
    r = a2 - np.dot(a2, c3) * c3
    nr = np.linalg.norm(r)
    if np.linalg.norm(np.cross(a1, a2)) <= 1e-8 or nr <= 1e-8:
        raise Error("degenerate-axes", "a2 is (near) parallel to a1")
    c1 = r / nr
    c2 = np.cross(c3, c1)
    return np.stack([c1, c2, c3], axis=1)


def positional_encoding(points, bands: int = 6, base_freq: float = np.pi):
    """Sinusoidal encoding of 3D coordinates, width 6*bands.

    Ordering is dim-major, band-minor, sin before cos:
    [sin(f0 x), cos(f0 x), sin(f1 x), ..., sin(f0 y), ...] with
    f_b = base_freq * 2**b. Deliberately not translation invariant.
    """
    if bands < 1:
        raise Error("shape", "bands must be >= 1")
    p = np.asarray(points, dtype=np.float64)
    freqs = base_freq * (2.0 ** np.arange(bands))
    ang = p[:, :, None] * freqs[None, None, :]  # N x 3 x B
    out = np.empty((len(p), 3, bands, 2), dtype=np.float64)
    out[..., 0] = np.sin(ang)
    out[..., 1] = np.cos(ang)
    return out.reshape(len(p), 6 * bands)


def rotation_about_axis(axis, angle_rad: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    a = np.asarray(axis, dtype=np.float64)
    a = a / np.linalg.norm(a)
    K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + np.sin(angle_rad) * K + (1 - np.cos(angle_rad)) * (K @ K)


def rot_z(angle_rad: float) -> np.ndarray:
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation via a normalized quaternion."""
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )
