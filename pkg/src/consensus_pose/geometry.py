"""Pinhole camera model and rigid transforms between camera frames.

Conventions
-----------
* Lengths are millimeters, image coordinates are pixels.
* A frustum pose is an array of shape ``(..., 3)`` holding ``(u, v, z)``
  per joint; an absolute pose holds ``(x, y, z)`` in a camera frame.
* Extrinsics ``(R, T)`` map points from a source camera into a target
  camera as ``x_target = R @ (x_source - T)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidExtrinsicsError, InvalidInputError

SO3_TOL = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    """Focal lengths and principal point of a pinhole camera, in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        for name in ("fx", "fy", "cx", "cy"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise InvalidInputError(f"intrinsic {name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidInputError(
                f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}"
            )

    @property
    def focal(self) -> np.ndarray:
        return np.array([self.fx, self.fy])

    @property
    def center(self) -> np.ndarray:
        return np.array([self.cx, self.cy])

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


def check_rotation(rotation, tol: float = SO3_TOL) -> np.ndarray:
    """Return ``rotation`` as a float array, raising if it is not in SO(3)."""
    R = np.asarray(rotation, dtype=float)
    if R.shape != (3, 3):
        raise InvalidExtrinsicsError(f"rotation must be 3x3, got shape {R.shape}")
    if not np.all(np.isfinite(R)):
        raise InvalidExtrinsicsError("rotation contains non-finite entries")
    ortho = np.abs(R.T @ R - np.eye(3)).max()
    if ortho > tol:
        raise InvalidExtrinsicsError(f"rotation is not orthogonal (max |R^T R - I| = {ortho:.3e})")
    det = np.linalg.det(R)
    if abs(det - 1.0) > tol:
        raise InvalidExtrinsicsError(f"rotation determinant is {det:.12f}, expected +1")
    return R


@dataclass(frozen=True, eq=False)
class CameraExtrinsics:
    """Rigid transform ``x -> R @ (x - T)`` from one camera frame to another."""

    rotation: np.ndarray
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = check_rotation(self.rotation).copy()
        T = np.array(self.translation, dtype=float).reshape(-1)
        if T.shape != (3,) or not np.all(np.isfinite(T)):
            raise InvalidExtrinsicsError(f"translation must be a finite 3-vector, got {self.translation!r}")
        R.flags.writeable = False
        T.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", T)

    @classmethod
    def identity(cls) -> "CameraExtrinsics":
        return cls(np.eye(3), np.zeros(3))

    def inverse(self) -> "CameraExtrinsics":
        return invert_extrinsics(self)

    def is_identity(self, tol: float = SO3_TOL) -> bool:
        return bool(
            np.abs(self.rotation - np.eye(3)).max() <= tol and np.abs(self.translation).max() <= tol
        )

    def __eq__(self, other):
        if not isinstance(other, CameraExtrinsics):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(
            self.translation, other.translation
        )

    def __repr__(self):
        return (
            f"CameraExtrinsics(rotation={self.rotation.tolist()}, "
            f"translation={self.translation.tolist()})"
        )


def _as_points(points, name: str) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 0 or arr.shape[-1] != 3:
        raise InvalidInputError(f"{name} must have a trailing dimension of 3, got shape {arr.shape}")
    return arr


def inverse_project(uvz, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Lift frustum coordinates ``(u, v, z)`` to camera coordinates ``(x, y, z)``.

    Works on a single joint or on any batch shaped ``(..., 3)``.
    """
    p = _as_points(uvz, "uvz")
    z = p[..., 2]
    if np.any(~(z > 0)):
        raise InvalidInputError("depth must be positive for every joint")
    out = np.empty_like(p)
    out[..., 0] = (p[..., 0] - intrinsics.cx) / intrinsics.fx * z
    out[..., 1] = (p[..., 1] - intrinsics.cy) / intrinsics.fy * z
    out[..., 2] = z
    return out


def project(xyz, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Project camera coordinates to ``(u, v, z)``; exact inverse of :func:`inverse_project`."""
    p = _as_points(xyz, "xyz")
    z = p[..., 2]
    if np.any(~(z > 0)):
        raise InvalidInputError("points must lie in front of the camera (z > 0)")
    out = np.empty_like(p)
    out[..., 0] = intrinsics.fx * p[..., 0] / z + intrinsics.cx
    out[..., 1] = intrinsics.fy * p[..., 1] / z + intrinsics.cy
    out[..., 2] = z
    return out


def transform_pose(points, extrinsics: CameraExtrinsics) -> np.ndarray:
    """Apply ``R @ (x - T)`` to every point of a ``(..., 3)`` array."""
    if not isinstance(extrinsics, CameraExtrinsics):
        extrinsics = CameraExtrinsics(*extrinsics)
    p = _as_points(points, "points")
    return (p - extrinsics.translation) @ extrinsics.rotation.T


def invert_extrinsics(extrinsics: CameraExtrinsics) -> CameraExtrinsics:
    """Return the reverse transform: ``x_source = R^T x_target + T = R^T (x_target + R T)``."""
    R = extrinsics.rotation
    return CameraExtrinsics(R.T, -(R @ extrinsics.translation))


def compose_extrinsics(first: CameraExtrinsics, second: CameraExtrinsics) -> CameraExtrinsics:
    """Transform equivalent to applying ``first`` then ``second``."""
    R = second.rotation @ first.rotation
    # R2 (R1 (x - T1) - T2) = R (x - T1 - R1^T T2)
    T = first.translation + first.rotation.T @ second.translation
    return CameraExtrinsics(R, T)


def rotation_geodesic_distance(R_a, R_b) -> float:
    """Angle in radians of the relative rotation ``R_a^T R_b``."""
    rel = np.asarray(R_a).T @ np.asarray(R_b)
    # arccos loses precision near 0; use the skew part alongside the trace
    cos = (np.trace(rel) - 1.0) / 2.0
    skew = np.array([rel[2, 1] - rel[1, 2], rel[0, 2] - rel[2, 0], rel[1, 0] - rel[0, 1]])
    sin = np.linalg.norm(skew) / 2.0
    return float(np.arctan2(sin, cos))


def look_at_rotation(eye, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """World-to-camera rotation for a camera at ``eye`` looking at ``target``.

    Camera axes are x right, y down, z forward.
    """
    eye = np.asarray(eye, dtype=float)
    forward = np.asarray(target, dtype=float) - eye
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=float))
    norm = np.linalg.norm(right)
    if norm < 1e-12:
        raise InvalidInputError("viewing direction is parallel to the up vector")
    right /= norm
    down = np.cross(forward, right)
    return np.stack([right, down, forward])


@dataclass
class CalibrationSet:
    """Intrinsics for every camera and extrinsics mapping each camera into the reference frame.

    The reference camera's extrinsics are the identity; it is added when
    omitted.
    """

    reference: str
    intrinsics: dict[str, CameraIntrinsics]
    extrinsics: dict[str, CameraExtrinsics] = field(default_factory=dict)

    def __post_init__(self):
        if self.reference not in self.intrinsics:
            raise InvalidInputError(f"reference camera {self.reference!r} has no intrinsics")
        self.extrinsics = dict(self.extrinsics)
        self.extrinsics.setdefault(self.reference, CameraExtrinsics.identity())
        if not self.extrinsics[self.reference].is_identity():
            raise InvalidExtrinsicsError(f"reference camera {self.reference!r} must have identity extrinsics")
        missing = set(self.intrinsics) ^ set(self.extrinsics)
        if missing:
            raise InvalidInputError(f"cameras without both intrinsics and extrinsics: {sorted(missing)}")

    @property
    def camera_ids(self) -> list[str]:
        return list(self.intrinsics)

    def __contains__(self, camera_id) -> bool:
        return camera_id in self.intrinsics

    def to_reference(self, camera_id: str, points) -> np.ndarray:
        """Map absolute points from ``camera_id``'s frame into the reference frame."""
        return transform_pose(points, self.extrinsics[camera_id])

    def lift(self, camera_id: str, uvz) -> np.ndarray:
        """Inverse-project frustum points of ``camera_id`` straight into the reference frame."""
        return self.to_reference(camera_id, inverse_project(uvz, self.intrinsics[camera_id]))
