"""Camera geometry and the core scene data model.

Conventions used throughout the package:

- World frame: right-handed, +Z up, units are meters.
- Camera frame: +X right, +Y down, +Z forward (OpenCV style). A level
  camera therefore has its +Y axis pointing at the floor.
- Orientation quaternions are (w, x, y, z) and rotate camera-frame
  vectors into the world frame (world-from-camera).
- Yaw is the heading of the camera's forward axis projected onto the
  ground plane, in degrees, counter-clockwise from world +X about +Z.
- Image coordinates: u grows right, v grows down, origin at the top-left
  pixel corner. Arrays index as [v, u].
- Depth maps are uint16 millimeters storing z along the optical axis,
  with 0 meaning "no measurement".

There is no lens distortion model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Tuple

import numpy as np


class GeometryError(ValueError):
    """Invalid geometric construction (bad quaternion, empty cloud, ...)."""


def wrap_angle_deg(angle: float) -> float:
    """Wrap an angle in degrees to the half-open interval (-180, 180]."""
    wrapped = math.fmod(angle, 360.0)
    if wrapped > 180.0:
        wrapped -= 360.0
    elif wrapped <= -180.0:
        wrapped += 360.0
    return wrapped


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    norm = float(np.linalg.norm(q))
    if norm == 0.0 or not np.isfinite(norm):
        raise GeometryError("quaternion has zero or non-finite norm")
    return q / norm


def quat_to_matrix(q) -> np.ndarray:
    """Rotation matrix from a unit (w, x, y, z) quaternion."""
    w, x, y, z = quat_normalize(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ],
        dtype=np.float64,
    )


def matrix_to_quat(rot: np.ndarray) -> np.ndarray:
    """Unit (w, x, y, z) quaternion from a rotation matrix (Shepperd's method)."""
    m = np.asarray(rot, dtype=np.float64)
    trace = m[0, 0] + m[1, 1] + m[2, 2]
    if trace > 0:
        s = math.sqrt(trace + 1.0) * 2
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        q = np.array(
            [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        )
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        q = np.array(
            [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        )
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        q = np.array(
            [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        )
    return quat_normalize(q)


def quat_from_yaw_pitch(yaw_deg: float, pitch_deg: float = 0.0) -> np.ndarray:
    """Quaternion for a roll-free camera heading `yaw_deg`, tilted down by `pitch_deg`."""
    yaw = math.radians(yaw_deg)
    pitch = math.radians(pitch_deg)
    forward = np.array(
        [math.cos(yaw) * math.cos(pitch), math.sin(yaw) * math.cos(pitch), -math.sin(pitch)]
    )
    right = np.cross(forward, np.array([0.0, 0.0, 1.0]))
    norm = np.linalg.norm(right)
    if norm < 1e-12:
        raise GeometryError("camera forward axis is vertical; yaw is undefined")
    right /= norm
    down = np.cross(forward, right)
    rot = np.column_stack([right, down, forward])
    return matrix_to_quat(rot)


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole camera intrinsics in pixel units."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise GeometryError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width) or not (0 <= self.cy < self.height):
            raise GeometryError(
                f"principal point ({self.cx}, {self.cy}) outside image "
                f"{self.width}x{self.height}"
            )


@dataclass(frozen=True)
class ScenePose:
    """A camera in the scene: unique frame id, position, orientation, intrinsics.

    A quaternion more than 1e-3 off unit norm is rejected as corrupt.
    Norm drift up to 1e-8 is kept bit-exact (it is what 9-significant-
    digit serialization produces, and renormalizing would break byte-exact
    round trips); anything between gets normalized.
    """

    frame_id: str
    position: np.ndarray
    orientation: np.ndarray
    intrinsics: Intrinsics
    rotation: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        position = np.asarray(self.position, dtype=np.float64).reshape(3)
        q = np.asarray(self.orientation, dtype=np.float64).reshape(4)
        norm = float(np.linalg.norm(q))
        if abs(norm - 1.0) > 1e-3:
            raise GeometryError(
                f"frame {self.frame_id!r}: quaternion norm {norm:.6f} deviates from 1"
            )
        if abs(norm - 1.0) > 1e-8:
            q = q / norm
        if not np.all(np.isfinite(position)):
            raise GeometryError(f"frame {self.frame_id!r}: non-finite position")
        object.__setattr__(self, "position", position)
        object.__setattr__(self, "orientation", q)
        object.__setattr__(self, "rotation", quat_to_matrix(q))

    @property
    def forward(self) -> np.ndarray:
        return self.rotation[:, 2]

    @property
    def right(self) -> np.ndarray:
        return self.rotation[:, 0]

    @property
    def down(self) -> np.ndarray:
        return self.rotation[:, 1]

    @property
    def yaw_deg(self) -> float:
        """Heading of the forward axis in the ground plane, degrees CCW from +X."""
        f = self.forward
        return math.degrees(math.atan2(f[1], f[0]))

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return (pts - self.position) @ self.rotation

    def camera_to_world(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return pts @ self.rotation.T + self.position


def project_point(point, pose: ScenePose) -> Optional[Tuple[float, float, float]]:
    """Project a world point into a camera.

    Returns (u, v, z_cam) with z_cam in meters, or None when the point is
    at or behind the camera plane (z_cam <= 0). The pixel coordinates are
    continuous and may fall outside the image bounds.
    """
    cam = pose.world_to_camera(point)[0]
    z = cam[2]
    if z <= 0:
        return None
    intr = pose.intrinsics
    u = intr.cx + intr.fx * cam[0] / z
    v = intr.cy + intr.fy * cam[1] / z
    return (u, v, z)


def project_points(points: np.ndarray, pose: ScenePose) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized projection of an (N, 3) array of world points.

    Returns (uv, z) where uv is (N, 2) and z is (N,). Entries with
    z <= 0 carry NaN pixel coordinates; callers mask on z > 0.
    """
    cam = pose.world_to_camera(points)
    z = cam[:, 2]
    intr = pose.intrinsics
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intr.cx + intr.fx * cam[:, 0] / z
        v = intr.cy + intr.fy * cam[:, 1] / z
    bad = z <= 0
    u = np.where(bad, np.nan, u)
    v = np.where(bad, np.nan, v)
    return np.stack([u, v], axis=1), z


def back_project(us, vs, zs, pose: ScenePose) -> np.ndarray:
    """Lift pixel coordinates with depth (meters) back to (N, 3) world points."""
    us = np.asarray(us, dtype=np.float64)
    vs = np.asarray(vs, dtype=np.float64)
    zs = np.asarray(zs, dtype=np.float64)
    intr = pose.intrinsics
    x = (us - intr.cx) / intr.fx * zs
    y = (vs - intr.cy) / intr.fy * zs
    cam = np.stack([x, y, zs], axis=-1).reshape(-1, 3)
    return pose.camera_to_world(cam)


class RelativeDisplacement(NamedTuple):
    forward: float
    right: float
    up: float
    yaw_delta_deg: float


def relative_displacement(a: ScenePose, b: ScenePose) -> RelativeDisplacement:
    """Displacement of b's position expressed in a's camera axes, plus yaw change.

    forward/right follow a's camera axes; up is against gravity (world +Z
    component of the displacement is +up only for a level camera, so up is
    reported as the negated camera-down component). yaw_delta_deg is
    wrapped to (-180, 180], positive counter-clockwise.
    """
    d = b.position - a.position
    fwd = float(np.dot(d, a.forward))
    rgt = float(np.dot(d, a.right))
    up = float(-np.dot(d, a.down))
    yaw_delta = wrap_angle_deg(b.yaw_deg - a.yaw_deg)
    return RelativeDisplacement(fwd, rgt, up, yaw_delta)


@dataclass
class RGBDFrame:
    """One captured view: color image plus registered depth in millimeters."""

    frame_id: str
    rgb: np.ndarray
    depth: np.ndarray

    def __post_init__(self):
        if self.rgb.ndim != 3 or self.rgb.shape[2] != 3:
            raise GeometryError(f"frame {self.frame_id!r}: rgb must be HxWx3")
        if self.depth.shape != self.rgb.shape[:2]:
            raise GeometryError(
                f"frame {self.frame_id!r}: depth shape {self.depth.shape} "
                f"does not match rgb {self.rgb.shape[:2]}"
            )
        if np.any(self.depth.astype(np.int64) < 0):
            raise GeometryError(f"frame {self.frame_id!r}: negative depth values")


@dataclass
class BoundingBox:
    """Axis-aligned 2D box in pixels, inclusive-exclusive on both axes."""

    xmin: int
    ymin: int
    xmax: int
    ymax: int
    instance_id: str = ""
    difficulty: int = 0

    def __post_init__(self):
        if self.xmin >= self.xmax or self.ymin >= self.ymax:
            raise GeometryError(
                f"degenerate box ({self.xmin}, {self.ymin}, {self.xmax}, {self.ymax})"
            )

    @property
    def width(self) -> int:
        return self.xmax - self.xmin

    @property
    def height(self) -> int:
        return self.ymax - self.ymin

    @property
    def area(self) -> int:
        return self.width * self.height

    def iou(self, other: "BoundingBox") -> float:
        ix = min(self.xmax, other.xmax) - max(self.xmin, other.xmin)
        iy = min(self.ymax, other.ymax) - max(self.ymin, other.ymin)
        if ix <= 0 or iy <= 0:
            return 0.0
        inter = ix * iy
        return inter / float(self.area + other.area - inter)

    def clipped(self, width: int, height: int) -> Optional["BoundingBox"]:
        """Clip to image bounds; returns None when nothing remains."""
        xmin = max(self.xmin, 0)
        ymin = max(self.ymin, 0)
        xmax = min(self.xmax, width)
        ymax = min(self.ymax, height)
        if xmin >= xmax or ymin >= ymax:
            return None
        return BoundingBox(xmin, ymin, xmax, ymax, self.instance_id, self.difficulty)


def mask_box(mask: np.ndarray, instance_id: str = "") -> Optional["BoundingBox"]:
    """Tight inclusive-exclusive box over true pixels; None for an empty mask."""
    rows = np.any(mask, axis=1)
    cols = np.any(mask, axis=0)
    if not rows.any():
        return None
    ys = np.nonzero(rows)[0]
    xs = np.nonzero(cols)[0]
    return BoundingBox(int(xs[0]), int(ys[0]), int(xs[-1]) + 1, int(ys[-1]) + 1, instance_id)


@dataclass
class InstanceAnnotation:
    """A projected 2D label: one instance's box in one frame."""

    frame_id: str
    instance_id: str
    box: BoundingBox
    visible_point_count: int

    @property
    def difficulty(self) -> int:
        return self.box.difficulty


@dataclass(frozen=True)
class PointCloud:
    """World-frame points belonging to one object instance."""

    points: np.ndarray
    instance_id: str

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] == 0:
            raise GeometryError(f"instance {self.instance_id!r}: cloud must be non-empty (N, 3)")
        if not np.all(np.isfinite(pts)):
            raise GeometryError(f"instance {self.instance_id!r}: non-finite cloud coordinates")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]
