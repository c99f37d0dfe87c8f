"""Cross-marker plate, synthetic pinhole camera, and pose recovery.

The receiver's top plate carries five square fiducials: a 70 mm marker at
the body origin and four 30 mm satellites offset along the body axes
(front +x, back -x, left +y, right -y). Corner pixels are synthesized
geometrically through a pinhole model and perturbed with Gaussian noise;
no image processing is simulated.

Detection envelope (all conditions must hold):
  (a) all four corners inside the image,
  (b) camera tilt relative to the marker normal within [30, 55] degrees,
  (c) slant range within 3.0 m scaled by marker side / 70 mm,
  (d) the marker faces the camera.

Pose recovery solves the planar homography from the marker's canonical
square to the observed corners and decomposes it with the inverse
intrinsic matrix; the rotation is re-orthonormalized by polar projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import FrameTransform, Pose, quat_rotate, quat_to_matrix, quat_to_yaw

MARKER_IDS = ("center", "front", "back", "left", "right")

_CENTER_RANGE_M = 3.0
_CENTER_SIDE_REF = 0.070
_TILT_MIN_DEG = 30.0
_TILT_MAX_DEG = 55.0


class BehindCamera(ValueError):
    """Projection requested for a point at or behind the image plane."""


class DegenerateCorners(ValueError):
    """Observed corners are too collapsed to estimate a pose."""


class NumericalFailure(RuntimeError):
    """Homography system is rank-deficient."""


class NoCenterMarker(ValueError):
    """Fusion requires the center marker."""


class HeadingUndefined(ValueError):
    """Heading requested with no satellite marker visible."""


@dataclass(frozen=True)
class CmpLayout:
    """Five-marker cross on the receiver top plate, in body coordinates."""

    center_side: float = 0.070
    satellite_side: float = 0.030
    satellite_offset: float = 0.12

    def marker_offset(self, marker_id: str) -> np.ndarray:
        d = self.satellite_offset
        offsets = {
            "center": (0.0, 0.0),
            "front": (d, 0.0),
            "back": (-d, 0.0),
            "left": (0.0, d),
            "right": (0.0, -d),
        }
        x, y = offsets[marker_id]
        return np.array([x, y, 0.0])

    def marker_side(self, marker_id: str) -> float:
        return self.center_side if marker_id == "center" else self.satellite_side

    def detection_range(self, marker_id: str) -> float:
        return _CENTER_RANGE_M * self.marker_side(marker_id) / _CENTER_SIDE_REF


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float = 600.0
    fy: float = 600.0
    skew: float = 0.0
    cx: float = 320.0
    cy: float = 240.0
    width: int = 640
    height: int = 480
    fps: float = 30.0

    def matrix(self) -> np.ndarray:
        return np.array([
            [self.fx, self.skew, self.cx],
            [0.0, self.fy, self.cy],
            [0.0, 0.0, 1.0],
        ])


@dataclass(frozen=True)
class CameraMount:
    """Camera fixed to the EBS body, tilted forward from straight down."""

    tilt: float = math.radians(45.0)
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def rotation_body_to_camera(self) -> np.ndarray:
        # camera axes in body coordinates: x right (-y body), y toward the
        # image bottom, z along the optical axis (down-forward at tilt)
        st, ct = math.sin(self.tilt), math.cos(self.tilt)
        x_c = np.array([0.0, -1.0, 0.0])
        y_c = np.array([-ct, 0.0, -st])
        z_c = np.array([st, 0.0, -ct])
        return np.vstack([x_c, y_c, z_c])


@dataclass
class MarkerObservation:
    marker_id: str
    corners_px: np.ndarray      # (4, 2), order TL TR BR BL of the canonical square
    detected: bool
    range_m: float


@dataclass(frozen=True)
class AlignmentErrors:
    e_m: float
    alpha_deg: float


def canonical_corners(side: float) -> np.ndarray:
    h = side / 2.0
    return np.array([
        [-h, h, 0.0],
        [h, h, 0.0],
        [h, -h, 0.0],
        [-h, -h, 0.0],
    ])


def project_point(intrinsics: CameraIntrinsics, extrinsic: FrameTransform,
                  world_point: np.ndarray) -> tuple[float, float]:
    """Pinhole projection of a world point through a world->camera transform."""
    p = extrinsic.apply(np.asarray(world_point, dtype=float))
    z = float(p[2])
    if z <= 1e-6:
        raise BehindCamera(f"camera-frame depth {z:.3g} is not positive")
    u = intrinsics.fx * p[0] / z + intrinsics.skew * p[1] / z + intrinsics.cx
    v = intrinsics.fy * p[1] / z + intrinsics.cy
    return float(u), float(v)


def camera_extrinsic(ebs_pose: Pose, mount: CameraMount) -> FrameTransform:
    """World -> camera transform for the mounted camera."""
    r_wb = quat_to_matrix(ebs_pose.attitude).T
    r_bc = mount.rotation_body_to_camera()
    rotation = r_bc @ r_wb
    translation = -rotation @ ebs_pose.position - r_bc @ mount.offset
    return FrameTransform(rotation, translation)


def camera_world_position(ebs_pose: Pose, mount: CameraMount) -> np.ndarray:
    return ebs_pose.to_world(mount.offset)


def observe_markers(ebs_pose: Pose, mount: CameraMount, rec_pose: Pose,
                    layout: CmpLayout, intrinsics: CameraIntrinsics,
                    noise_sigma: float, rng: np.random.Generator,
                    visible_ids: tuple[str, ...] = MARKER_IDS,
                    ) -> list[MarkerObservation]:
    """Synthesize one camera frame of marker observations.

    Noise is drawn only for detected markers, in fixed marker order, so a
    given seed reproduces the same frame. ``visible_ids`` lets experiments
    mask satellites to force a particular marker association.
    """
    extrinsic = camera_extrinsic(ebs_pose, mount)
    cam_pos = camera_world_position(ebs_pose, mount)
    optical_axis = extrinsic.rotation.T @ np.array([0.0, 0.0, 1.0])
    plate_normal = quat_rotate(rec_pose.attitude, np.array([0.0, 0.0, 1.0]))
    tilt_rel = math.degrees(math.acos(max(-1.0, min(1.0, float(
        np.dot(optical_axis, -plate_normal))))))

    observations = []
    for marker_id in MARKER_IDS:
        center_world = rec_pose.to_world(layout.marker_offset(marker_id))
        slant = float(np.linalg.norm(center_world - cam_pos))
        corners_world = [
            rec_pose.to_world(layout.marker_offset(marker_id) + c)
            for c in canonical_corners(layout.marker_side(marker_id))
        ]
        detected = marker_id in visible_ids
        corners_px = np.zeros((4, 2))
        if detected:
            try:
                for i, cw in enumerate(corners_world):
                    u, v = project_point(intrinsics, extrinsic, cw)
                    if not (0.0 <= u < intrinsics.width and 0.0 <= v < intrinsics.height):
                        detected = False
                        break
                    corners_px[i] = (u, v)
            except BehindCamera:
                detected = False
        if detected and not _TILT_MIN_DEG <= tilt_rel <= _TILT_MAX_DEG:
            detected = False
        if detected and slant > layout.detection_range(marker_id):
            detected = False
        if detected and float(np.dot(plate_normal, cam_pos - center_world)) <= 0.0:
            detected = False
        if detected and noise_sigma > 0.0:
            corners_px = corners_px + rng.normal(0.0, noise_sigma, size=(4, 2))
        if not detected:
            corners_px = np.zeros((4, 2))
        observations.append(MarkerObservation(marker_id, corners_px, detected, slant))
    return observations


def _normalize_points(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    centroid = pts.mean(axis=0)
    shifted = pts - centroid
    mean_dist = float(np.mean(np.linalg.norm(shifted, axis=1)))
    scale = math.sqrt(2.0) / mean_dist if mean_dist > 1e-12 else 1.0
    t = np.array([
        [scale, 0.0, -scale * centroid[0]],
        [0.0, scale, -scale * centroid[1]],
        [0.0, 0.0, 1.0],
    ])
    return (pts - centroid) * scale, t


def _homography(obj_xy: np.ndarray, img_xy: np.ndarray) -> np.ndarray:
    obj_n, t_obj = _normalize_points(obj_xy)
    img_n, t_img = _normalize_points(img_xy)
    rows = []
    for (x, y), (u, v) in zip(obj_n, img_n):
        rows.append([-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u])
        rows.append([0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v])
    a = np.array(rows)
    _, s, vt = np.linalg.svd(a)
    if s[0] <= 0.0 or s[-2] / s[0] < 1e-12:
        raise NumericalFailure("homography system is rank-deficient")
    h_norm = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_img) @ h_norm @ t_obj
    return h / h[2, 2]


def _quad_area(corners: np.ndarray) -> float:
    x, y = corners[:, 0], corners[:, 1]
    return 0.5 * abs(float(
        np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def planar_pose_from_points(obj_xy: np.ndarray, img_xy: np.ndarray,
                            intrinsics: CameraIntrinsics) -> FrameTransform:
    """Pose of a planar target (z=0 object points) in the camera frame.

    Homography decomposition with the inverse intrinsic matrix; the
    rotation is re-orthonormalized by polar projection and the sign chosen
    so the target sits in front of the camera.
    """
    h = _homography(obj_xy, img_xy)
    a = np.linalg.inv(intrinsics.matrix()) @ h
    n1, n2 = float(np.linalg.norm(a[:, 0])), float(np.linalg.norm(a[:, 1]))
    if n1 < 1e-12 or n2 < 1e-12:
        raise NumericalFailure("homography columns collapsed")
    lam = 1.0 / math.sqrt(n1 * n2)
    if a[2, 2] * lam < 0.0:
        lam = -lam
    r1, r2 = a[:, 0] * lam, a[:, 1] * lam
    r3 = np.cross(r1, r2)
    rough = np.column_stack([r1, r2, r3])
    u, _, vt = np.linalg.svd(rough)
    rotation = u @ np.diag([1.0, 1.0, float(np.linalg.det(u @ vt))]) @ vt
    translation = a[:, 2] * lam
    return FrameTransform(rotation, translation)


def estimate_pose_from_marker(obs: MarkerObservation, intrinsics: CameraIntrinsics,
                              marker_side: float) -> FrameTransform:
    """Recover the marker-in-camera pose from one observed square.

    The translation norm equals the slant range up to the corner noise.
    """
    if not obs.detected:
        raise ValueError(f"marker {obs.marker_id} was not detected")
    if _quad_area(obs.corners_px) < 4.0:
        raise DegenerateCorners(
            f"marker {obs.marker_id} corner area {_quad_area(obs.corners_px):.2f} px^2")
    obj_xy = canonical_corners(marker_side)[:, :2]
    return planar_pose_from_points(obj_xy, obs.corners_px, intrinsics)


@dataclass
class FusedEstimate:
    """Receiver pose in the camera frame fused from per-marker poses."""

    position: np.ndarray
    plate_normal: np.ndarray
    heading: np.ndarray | None      # receiver +x axis in camera frame
    association: str | None
    marker_ids: tuple[str, ...]

    def heading_or_raise(self) -> np.ndarray:
        if self.heading is None:
            raise HeadingUndefined("no satellite marker was visible")
        return self.heading


_ASSOCIATION_PAIRS = (
    ("front", "back"),
    ("right", "back"),
    ("left", "back"),
    ("front", "center"),
    ("center", "back"),
    ("left", "center"),
    ("center", "right"),
)


def fuse_marker_poses(observations: list[MarkerObservation], layout: CmpLayout,
                      intrinsics: CameraIntrinsics,
                      require_heading: bool = False) -> FusedEstimate:
    """Fuse detected markers into one receiver-plate estimate.

    All detected corners lie in the plate plane at known offsets, so one
    joint planar solve over every visible marker recovers the plate pose;
    the satellites extend the effective target far beyond the 70 mm center
    square, which is what makes the heading usable at range. Decomposing
    each small marker separately and averaging is hopeless by comparison:
    a 30 mm square a meter out carries centimeter-scale depth noise per
    half-pixel of corner noise.

    Heading is reported only when at least one satellite participates,
    along with the highest-priority marker association backing it
    (front-back, then right-back, then left-back, then center pairs).
    """
    detected = {o.marker_id: o for o in observations if o.detected}
    if "center" not in detected:
        raise NoCenterMarker("fusion requires the center marker")

    obj_rows = []
    img_rows = []
    for marker_id, obs in detected.items():
        if _quad_area(obs.corners_px) < 4.0:
            raise DegenerateCorners(
                f"marker {marker_id} corner area {_quad_area(obs.corners_px):.2f} px^2")
        offset = layout.marker_offset(marker_id)
        for corner, px in zip(canonical_corners(layout.marker_side(marker_id)),
                              obs.corners_px):
            obj_rows.append([offset[0] + corner[0], offset[1] + corner[1]])
            img_rows.append([px[0], px[1]])
    plate = planar_pose_from_points(np.asarray(obj_rows), np.asarray(img_rows),
                                    intrinsics)

    satellites = [m for m in detected if m != "center"]
    heading = plate.rotation[:, 0] if satellites else None
    association = None
    for a, b in _ASSOCIATION_PAIRS:
        if a in detected and b in detected:
            association = f"{a}-{b}"
            break
    if heading is None and require_heading:
        raise HeadingUndefined("no satellite marker visible for heading")

    return FusedEstimate(
        position=plate.translation,
        plate_normal=plate.rotation[:, 2],
        heading=heading,
        association=association if heading is not None else None,
        marker_ids=tuple(sorted(detected)),
    )


def alignment_errors(est_pose: Pose, target_pose: Pose,
                     desired_heading: float) -> AlignmentErrors:
    """Position error (Euclidean) and heading deviation versus the target.

    The angular deviation is wrapped to [0, 180] degrees and is invariant
    to full-turn offsets on either angle.
    """
    diff = np.asarray(est_pose.position, dtype=float) - np.asarray(
        target_pose.position, dtype=float)
    e = float(np.linalg.norm(diff))
    alpha = math.degrees(quat_yaw_diff(est_pose, desired_heading))
    return AlignmentErrors(e_m=e, alpha_deg=alpha)


def quat_yaw_diff(est_pose: Pose, desired_heading: float) -> float:
    raw = quat_to_yaw(est_pose.attitude) - desired_heading
    wrapped = math.atan2(math.sin(raw), math.cos(raw))
    return abs(wrapped)
