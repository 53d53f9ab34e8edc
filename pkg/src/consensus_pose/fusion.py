"""Confidence-weighted fusion of absolute poses predicted by several cameras."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .geometry import CalibrationSet


@dataclass(frozen=True, eq=False)
class ViewPrediction:
    """One camera's absolute pose ``(J, 3)`` and per-joint confidences ``(J,)``."""

    camera_id: str
    pose: np.ndarray
    confidences: np.ndarray

    def __post_init__(self):
        pose = np.asarray(self.pose, dtype=float)
        conf = np.asarray(self.confidences, dtype=float)
        if pose.ndim != 2 or pose.shape[1] != 3:
            raise InvalidInputError(f"pose must have shape (J, 3), got {pose.shape}")
        if conf.shape != (pose.shape[0],):
            raise InvalidInputError(f"expected {pose.shape[0]} confidences, got shape {conf.shape}")
        if np.any((conf < 0) | (conf > 1)):
            raise InvalidInputError("confidences must lie in [0, 1]")
        object.__setattr__(self, "pose", pose)
        object.__setattr__(self, "confidences", conf)


def fuse_views(views, threshold: float = 0.5) -> np.ndarray:
    """Per-joint confidence-weighted average over views with confidence ``>= threshold``.

    A joint that no view reports confidently falls back to the weighted
    average over all views, and to a plain average if every weight is zero.
    All poses must already be expressed in the same (reference) frame.
    """
    views = list(views)
    if not views:
        raise InvalidInputError("need at least one view to fuse")
    poses = np.stack([v.pose for v in views])
    if len({p.shape for p in poses}) > 1:
        raise InvalidInputError("all views must have the same joint count")
    conf = np.stack([v.confidences for v in views])

    w = np.where(conf >= threshold, conf, 0.0)
    total = w.sum(axis=0)
    fallback = total <= 0
    if np.any(fallback):
        w[:, fallback] = conf[:, fallback]
        total = w.sum(axis=0)
        uniform = total <= 0
        w[:, uniform] = 1.0
        total = w.sum(axis=0)
    return np.einsum("vj,vjk->jk", w, poses) / total[:, None]


def fuse_frame(uvz_by_camera: dict, conf_by_camera: dict, calibration: CalibrationSet,
               threshold: float = 0.5) -> np.ndarray:
    """Lift every camera's frustum pose into the reference frame and fuse them.

    Cameras whose observation is missing (all-NaN) are skipped.
    """
    views = []
    for cid, uvz in uvz_by_camera.items():
        uvz = np.asarray(uvz, dtype=float)
        if np.all(np.isnan(uvz)):
            continue
        if cid not in calibration:
            raise InvalidInputError(f"camera {cid!r} is missing from the calibration")
        views.append(ViewPrediction(cid, calibration.lift(cid, uvz), conf_by_camera[cid]))
    return fuse_views(views, threshold)
