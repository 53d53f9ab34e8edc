"""JSON interchange formats and the CSV iteration trace.

Poses file::

    {"skeleton": {"n_joints", "root_index", "joint_names"},
     "cameras": [camera_id, ...],
     "image_size": [width, height],            # optional
     "frames": [{"frame_id", "observations": [
         {"camera_id", "joints": [{"u", "v", "z", "conf"}, ...]}]}]}

Calibration file::

    {"reference_camera",
     "cameras": [{"camera_id", "fx", "fy", "cx", "cy",
                  "rotation": [9 reals, row-major], "translation": [3 reals, mm]}]}

Absolute poses file (fused predictions and ground truth)::

    {"skeleton": {...}, "reference_camera",
     "frames": [{"frame_id", "joints": [{"x", "y", "z"}, ...]}]}

Maps file (input of ``decode``)::

    {"skeleton": {...}, "cameras": [...], "image_size": [w, h],   # optional
     "frames": [{"frame_id", "observations": [
         {"camera_id", "alpha_z", "crop": {"x0", "y0", "scale"},  # crop optional
          "joints": [{"heatmap": [[...]], "depth_map": [[...]], "conf"}]}]}]}

Every reader validates the type invariants and raises
:class:`~consensus_pose.errors.ValidationError` on violation.
"""

from __future__ import annotations

import csv
import io as _io
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, ValidationError
from .geometry import CalibrationSet, CameraExtrinsics, CameraIntrinsics


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump(path, doc) -> None:
    atomic_write_text(path, json.dumps(doc, indent=1) + "\n")


def _load(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: top level must be a JSON object")
    return doc


def _get(obj, key, where):
    try:
        return obj[key]
    except (KeyError, TypeError):
        raise ValidationError(f"{where}: missing field {key!r}") from None


def _real(obj, key, where) -> float:
    value = _get(obj, key, where)
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not np.isfinite(value):
        raise ValidationError(f"{where}: field {key!r} must be a finite number, got {value!r}")
    return float(value)


@dataclass
class SkeletonInfo:
    n_joints: int
    root_index: int = 0
    joint_names: list[str] | None = None

    def __post_init__(self):
        if self.n_joints < 1:
            raise ValidationError(f"skeleton.n_joints must be >= 1, got {self.n_joints}")
        if not 0 <= self.root_index < self.n_joints:
            raise ValidationError(f"skeleton.root_index {self.root_index} out of range")
        if self.joint_names is not None and len(self.joint_names) != self.n_joints:
            raise ValidationError("skeleton.joint_names length differs from n_joints")

    def to_json(self) -> dict:
        doc = {"n_joints": self.n_joints, "root_index": self.root_index}
        if self.joint_names is not None:
            doc["joint_names"] = list(self.joint_names)
        return doc

    @classmethod
    def from_json(cls, doc, where="skeleton") -> "SkeletonInfo":
        n = _get(doc, "n_joints", where)
        root = doc.get("root_index", 0) if isinstance(doc, dict) else 0
        if not isinstance(n, int) or not isinstance(root, int):
            raise ValidationError(f"{where}: n_joints and root_index must be integers")
        names = doc.get("joint_names")
        return cls(n, root, list(names) if names is not None else None)


@dataclass
class PosesData:
    """Frustum observations of every camera, as dense ``(F, J, 3)`` arrays.

    Missing observations are NaN in ``uvz`` and zero in ``conf``.
    """

    skeleton: SkeletonInfo
    camera_ids: list[str]
    frame_ids: list
    uvz: dict[str, np.ndarray]
    conf: dict[str, np.ndarray]
    image_size: tuple[float, float] | None = None

    def observed(self, camera_id, frame: int) -> bool:
        return not np.all(np.isnan(self.uvz[camera_id][frame]))


def write_poses(path, data: PosesData) -> None:
    frames = []
    for f, frame_id in enumerate(data.frame_ids):
        observations = []
        for cid in data.camera_ids:
            if not data.observed(cid, f):
                continue
            joints = [
                {"u": float(u), "v": float(v), "z": float(z), "conf": float(c)}
                for (u, v, z), c in zip(data.uvz[cid][f], data.conf[cid][f])
            ]
            observations.append({"camera_id": cid, "joints": joints})
        frames.append({"frame_id": frame_id, "observations": observations})
    doc = {"skeleton": data.skeleton.to_json(), "cameras": list(data.camera_ids)}
    if data.image_size is not None:
        doc["image_size"] = [float(s) for s in data.image_size]
    doc["frames"] = frames
    _dump(path, doc)


def _frames(doc, path):
    frames = _get(doc, "frames", str(path))
    if not isinstance(frames, list):
        raise ValidationError(f"{path}: frames must be a list")
    seen = set()
    for i, frame in enumerate(frames):
        fid = _get(frame, "frame_id", f"{path}: frames[{i}]")
        key = json.dumps(fid)
        if key in seen:
            raise ValidationError(f"{path}: duplicate frame_id {fid!r}")
        seen.add(key)
    return frames


def _image_size(doc, path):
    size = doc.get("image_size")
    if size is None:
        return None
    if not (isinstance(size, list) and len(size) == 2 and all(isinstance(s, (int, float)) and s > 0 for s in size)):
        raise ValidationError(f"{path}: image_size must be [width, height] with positive entries")
    return float(size[0]), float(size[1])


def read_poses(path) -> PosesData:
    doc = _load(path)
    skeleton = SkeletonInfo.from_json(_get(doc, "skeleton", str(path)), f"{path}: skeleton")
    cameras = [str(c) for c in _get(doc, "cameras", str(path))]
    if len(set(cameras)) != len(cameras):
        raise ValidationError(f"{path}: duplicate camera ids")
    frames = _frames(doc, path)
    n_f, n_j = len(frames), skeleton.n_joints
    uvz = {c: np.full((n_f, n_j, 3), np.nan) for c in cameras}
    conf = {c: np.zeros((n_f, n_j)) for c in cameras}
    for f, frame in enumerate(frames):
        for o, obs in enumerate(_get(frame, "observations", f"{path}: frames[{f}]")):
            where = f"{path}: frames[{f}].observations[{o}]"
            cid = str(_get(obs, "camera_id", where))
            if cid not in uvz:
                raise ValidationError(f"{where}: camera {cid!r} not listed in cameras")
            if not np.all(np.isnan(uvz[cid][f])):
                raise ValidationError(f"{where}: camera {cid!r} observed twice in one frame")
            joints = _get(obs, "joints", where)
            if len(joints) != n_j:
                raise ValidationError(f"{where}: expected {n_j} joints, got {len(joints)}")
            for j, joint in enumerate(joints):
                jw = f"{where}.joints[{j}]"
                z = _real(joint, "z", jw)
                c = _real(joint, "conf", jw)
                if z <= 0:
                    raise ValidationError(f"{jw}: depth z must be positive, got {z}")
                if not 0 <= c <= 1:
                    raise ValidationError(f"{jw}: conf must lie in [0, 1], got {c}")
                uvz[cid][f, j] = (_real(joint, "u", jw), _real(joint, "v", jw), z)
                conf[cid][f, j] = c
    return PosesData(skeleton, cameras, [fr["frame_id"] for fr in frames], uvz, conf, _image_size(doc, path))


def write_calibration(path, calib: CalibrationSet) -> None:
    cameras = []
    for cid in calib.camera_ids:
        k, e = calib.intrinsics[cid], calib.extrinsics[cid]
        cameras.append({
            "camera_id": cid, "fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy,
            "rotation": [float(r) for r in e.rotation.ravel()],
            "translation": [float(t) for t in e.translation],
        })
    _dump(path, {"reference_camera": calib.reference, "cameras": cameras})


def read_calibration(path) -> CalibrationSet:
    doc = _load(path)
    reference = str(_get(doc, "reference_camera", str(path)))
    intrinsics, extrinsics = {}, {}
    for i, cam in enumerate(_get(doc, "cameras", str(path))):
        where = f"{path}: cameras[{i}]"
        cid = str(_get(cam, "camera_id", where))
        if cid in intrinsics:
            raise ValidationError(f"{where}: duplicate camera {cid!r}")
        rot, trans = _get(cam, "rotation", where), _get(cam, "translation", where)
        if not (isinstance(rot, list) and len(rot) == 9 and isinstance(trans, list) and len(trans) == 3):
            raise ValidationError(f"{where}: rotation needs 9 reals and translation 3 reals")
        try:
            intrinsics[cid] = CameraIntrinsics(*(_real(cam, key, where) for key in ("fx", "fy", "cx", "cy")))
            extrinsics[cid] = CameraExtrinsics(np.array(rot, dtype=float).reshape(3, 3), np.array(trans, dtype=float))
        except (InvalidInputError, TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"{where}: {exc}") from None
    try:
        return CalibrationSet(reference, intrinsics, extrinsics)
    except InvalidInputError as exc:
        raise ValidationError(f"{path}: {exc}") from None


@dataclass
class AbsolutePoses:
    skeleton: SkeletonInfo
    frame_ids: list
    poses: np.ndarray
    reference_camera: str | None = None

    def __post_init__(self):
        self.poses = np.asarray(self.poses, dtype=float)
        if self.poses.shape != (len(self.frame_ids), self.skeleton.n_joints, 3):
            raise ValidationError(
                f"poses shape {self.poses.shape} does not match "
                f"{len(self.frame_ids)} frames x {self.skeleton.n_joints} joints"
            )


def write_absolute_poses(path, data: AbsolutePoses) -> None:
    frames = [
        {"frame_id": fid, "joints": [{"x": float(x), "y": float(y), "z": float(z)} for x, y, z in pose]}
        for fid, pose in zip(data.frame_ids, data.poses)
    ]
    doc = {"skeleton": data.skeleton.to_json()}
    if data.reference_camera is not None:
        doc["reference_camera"] = data.reference_camera
    doc["frames"] = frames
    _dump(path, doc)


def read_absolute_poses(path) -> AbsolutePoses:
    doc = _load(path)
    skeleton = SkeletonInfo.from_json(_get(doc, "skeleton", str(path)), f"{path}: skeleton")
    frames = _frames(doc, path)
    poses = np.empty((len(frames), skeleton.n_joints, 3))
    for f, frame in enumerate(frames):
        joints = _get(frame, "joints", f"{path}: frames[{f}]")
        if len(joints) != skeleton.n_joints:
            raise ValidationError(f"{path}: frames[{f}] has {len(joints)} joints, expected {skeleton.n_joints}")
        for j, joint in enumerate(joints):
            where = f"{path}: frames[{f}].joints[{j}]"
            poses[f, j] = [_real(joint, key, where) for key in ("x", "y", "z")]
    ref = doc.get("reference_camera")
    return AbsolutePoses(skeleton, [fr["frame_id"] for fr in frames], poses, None if ref is None else str(ref))


@dataclass
class MapObservation:
    camera_id: str
    alpha_z: float
    heatmaps: list
    depth_maps: list
    conf: np.ndarray
    crop: tuple[float, float, float] | None = None


@dataclass
class MapsData:
    skeleton: SkeletonInfo
    camera_ids: list[str]
    frame_ids: list
    observations: list[list[MapObservation]] = field(default_factory=list)
    image_size: tuple[float, float] | None = None


def read_maps(path) -> MapsData:
    """Load a maps file; numerical invariants of the maps are checked by the decoder."""
    doc = _load(path)
    skeleton = SkeletonInfo.from_json(_get(doc, "skeleton", str(path)), f"{path}: skeleton")
    cameras = [str(c) for c in _get(doc, "cameras", str(path))]
    frames = _frames(doc, path)
    per_frame = []
    for f, frame in enumerate(frames):
        obs_list = []
        for o, obs in enumerate(_get(frame, "observations", f"{path}: frames[{f}]")):
            where = f"{path}: frames[{f}].observations[{o}]"
            cid = str(_get(obs, "camera_id", where))
            if cid not in cameras:
                raise ValidationError(f"{where}: camera {cid!r} not listed in cameras")
            joints = _get(obs, "joints", where)
            if len(joints) != skeleton.n_joints:
                raise ValidationError(f"{where}: expected {skeleton.n_joints} joints, got {len(joints)}")
            crop = obs.get("crop")
            if crop is not None:
                crop = tuple(_real(crop, key, f"{where}.crop") for key in ("x0", "y0", "scale"))
            conf = np.array([float(j.get("conf", 1.0)) for j in joints])
            if np.any((conf < 0) | (conf > 1)):
                raise ValidationError(f"{where}: conf must lie in [0, 1]")
            obs_list.append(MapObservation(
                cid, _real(obs, "alpha_z", where),
                [_get(j, "heatmap", f"{where}.joints[{i}]") for i, j in enumerate(joints)],
                [_get(j, "depth_map", f"{where}.joints[{i}]") for i, j in enumerate(joints)],
                conf, crop,
            ))
        per_frame.append(obs_list)
    return MapsData(skeleton, cameras, [fr["frame_id"] for fr in frames], per_frame, _image_size(doc, path))


def write_trace(path, traces: dict) -> None:
    """Write per-pair objective traces as CSV (camera_id, iteration, substep, objective)."""
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["camera_id", "iteration", "substep", "objective"])
    for cid, trace in traces.items():
        for entry in trace:
            writer.writerow([cid, entry.iteration, entry.substep, repr(float(entry.objective))])
    atomic_write_text(path, buf.getvalue())


def read_trace(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            {"camera_id": row["camera_id"], "iteration": int(row["iteration"]),
             "substep": row["substep"], "objective": float(row["objective"])}
            for row in csv.DictReader(fh)
        ]
