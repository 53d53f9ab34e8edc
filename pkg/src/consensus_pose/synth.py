"""Synthetic multi-camera scenes with known calibration and poses.

Cameras stand on a ring around the subject volume and look at its center.
Poses are random articulated point clouds: a fixed skeleton tree with bone
lengths sampled once per sequence and bone directions sampled per frame.
Observations are exact projections plus Gaussian noise in ``(u, v, z)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .decode import ConfidenceStats, confidence_ground_truth
from .errors import InvalidInputError, SceneGenerationError
from .geometry import (
    CalibrationSet,
    CameraExtrinsics,
    CameraIntrinsics,
    inverse_project,
    look_at_rotation,
    project,
)

# Human3.6M 17-joint layout
H36M_PARENTS = (-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15)
H36M_BONE_MM = (0, 130, 450, 440, 130, 450, 440, 230, 250, 100, 115, 150, 280, 250, 150, 280, 250)
H36M_JOINT_NAMES = (
    "pelvis", "r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle", "spine",
    "thorax", "neck", "head", "l_shoulder", "l_elbow", "l_wrist", "r_shoulder",
    "r_elbow", "r_wrist",
)

SUBJECT_HALF_EXTENT_MM = 1000.0
MAX_FRAME_RETRIES = 200


@dataclass(frozen=True)
class NoiseModel:
    sigma_uv_px: float = 0.0
    sigma_z_mm: float = 0.0
    occlusion_scale: float = 10.0

    def __post_init__(self):
        if self.sigma_uv_px < 0 or self.sigma_z_mm < 0 or self.occlusion_scale < 0:
            raise InvalidInputError("noise parameters must be non-negative")


@dataclass(frozen=True)
class Skeleton:
    parents: tuple[int, ...]
    joint_names: tuple[str, ...]
    root_index: int = 0

    @property
    def n_joints(self) -> int:
        return len(self.parents)


def make_skeleton(n_joints: int, rng: np.random.Generator | None = None) -> Skeleton:
    """Human3.6M tree for 17 joints, otherwise a random tree rooted at joint 0."""
    if n_joints < 1:
        raise InvalidInputError(f"n_joints must be >= 1, got {n_joints}")
    if n_joints == len(H36M_PARENTS):
        return Skeleton(H36M_PARENTS, H36M_JOINT_NAMES)
    rng = rng or np.random.default_rng(0)
    parents = [-1] + [int(rng.integers(0, i)) for i in range(1, n_joints)]
    return Skeleton(tuple(parents), tuple(f"joint_{i}" for i in range(n_joints)))


@dataclass(eq=False)
class SyntheticScene:
    """Ground truth and noisy observations of one generated sequence.

    ``poses_world`` has shape ``(F, J, 3)``; the per-camera dictionaries are
    keyed by camera id. ``poses_reference`` are the ground-truth poses in
    the reference camera frame, the frame fused predictions live in.
    """

    calibration: CalibrationSet
    skeleton: Skeleton
    poses_world: np.ndarray
    poses_camera: dict[str, np.ndarray]
    observations: dict[str, np.ndarray]
    confidences: dict[str, np.ndarray]
    occluded: dict[str, np.ndarray]
    noise: NoiseModel
    occlusion_rate: float
    seed: int
    image_size: tuple[int, int]
    world_to_camera: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    @property
    def camera_ids(self) -> list[str]:
        return self.calibration.camera_ids

    @property
    def reference(self) -> str:
        return self.calibration.reference

    @property
    def poses_reference(self) -> np.ndarray:
        return self.poses_camera[self.reference]

    @property
    def n_frames(self) -> int:
        return self.poses_world.shape[0]


def _sample_cameras(n_cameras, rng, image_size, radius_range, focal_px):
    w, h = image_size
    cams = []
    offset = rng.uniform(0, 2 * np.pi)
    for k in range(n_cameras):
        angle = offset + 2 * np.pi * k / n_cameras + rng.uniform(-0.2, 0.2)
        radius = rng.uniform(*radius_range)
        eye = np.array([radius * np.cos(angle), radius * np.sin(angle), rng.uniform(-300, 300)])
        target = rng.uniform(-150, 150, size=3)
        R = look_at_rotation(eye, target)
        roll = rng.uniform(-0.05, 0.05)
        c, s = np.cos(roll), np.sin(roll)
        R = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]) @ R
        f = focal_px * rng.uniform(0.95, 1.05)
        k = CameraIntrinsics(
            fx=f, fy=f * rng.uniform(0.99, 1.01),
            cx=w / 2 + rng.uniform(-15, 15), cy=h / 2 + rng.uniform(-15, 15),
        )
        cams.append((R, eye, k))
    return cams


def _relative_extrinsics(R_ref, eye_ref, R_k, eye_k) -> CameraExtrinsics:
    # x_ref = R_ref R_k^T x_k + R_ref (eye_k - eye_ref)  ==  R (x_k - T)
    R = R_ref @ R_k.T
    T = R_k @ (eye_ref - eye_k)
    return CameraExtrinsics(R, T)


def _sample_pose(skeleton: Skeleton, bones, rng):
    n = skeleton.n_joints
    pose = np.empty((n, 3))
    pose[0] = rng.uniform(-300, 300, size=3)
    dirs = rng.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    for j in range(1, n):
        pose[j] = pose[skeleton.parents[j]] + bones[j] * dirs[j]
    return pose


def _in_view(points_cam, k: CameraIntrinsics, image_size):
    z = points_cam[:, 2]
    if np.any(z <= 100.0):
        return False
    uv = k.focal * points_cam[:, :2] / z[:, None] + k.center
    return bool(np.all((uv >= 0) & (uv <= np.asarray(image_size, dtype=float))))


def generate_scene(n_cameras: int = 4, n_frames: int = 100, n_joints: int = 17,
                   noise: NoiseModel = NoiseModel(), occlusion_rate: float = 0.0, seed: int = 0,
                   image_size: tuple[int, int] = (1000, 1000),
                   radius_range: tuple[float, float] = (3000.0, 6000.0),
                   focal_px: float = 1150.0) -> SyntheticScene:
    """Generate a deterministic synthetic scene.

    Raises
    ------
    SceneGenerationError
        If poses cannot be placed in front of and inside the view of every
        camera.
    """
    if n_cameras < 1 or n_frames < 1:
        raise InvalidInputError("n_cameras and n_frames must be >= 1")
    if not 0.0 <= occlusion_rate <= 1.0:
        raise InvalidInputError(f"occlusion_rate must lie in [0, 1], got {occlusion_rate}")
    if radius_range[0] <= 0 or radius_range[0] > radius_range[1]:
        raise InvalidInputError(f"invalid radius range {radius_range}")
    rng = np.random.default_rng(seed)
    skeleton = make_skeleton(n_joints, rng)

    cams = _sample_cameras(n_cameras, rng, image_size, radius_range, focal_px)
    ids = [f"cam{k}" for k in range(n_cameras)]
    R_ref, eye_ref, _ = cams[0]
    for cid, (R, eye, _) in zip(ids, cams):
        # the subject volume center must be in front of every camera
        if (R @ (np.zeros(3) - eye))[2] <= SUBJECT_HALF_EXTENT_MM:
            raise SceneGenerationError(f"subject volume is behind or too close to camera {cid}")

    if n_joints == len(H36M_PARENTS):
        bones = np.asarray(H36M_BONE_MM, dtype=float) * rng.uniform(0.9, 1.1, size=n_joints)
    else:
        bones = rng.uniform(100.0, 300.0, size=n_joints)
    bones[0] = 0.0

    poses = np.empty((n_frames, n_joints, 3))
    for f in range(n_frames):
        for _ in range(MAX_FRAME_RETRIES):
            pose = _sample_pose(skeleton, bones, rng)
            if np.abs(pose).max() > SUBJECT_HALF_EXTENT_MM:
                continue
            if all(_in_view((pose - eye) @ R.T, k, image_size) for R, eye, k in cams):
                break
        else:
            raise SceneGenerationError(
                f"could not place frame {f} inside every camera view after {MAX_FRAME_RETRIES} tries"
            )
        poses[f] = pose

    intrinsics, extrinsics, world_to_camera = {}, {}, {}
    poses_camera, observations, confidences, occluded = {}, {}, {}, {}
    sigma = np.array([noise.sigma_uv_px, noise.sigma_uv_px, noise.sigma_z_mm])
    for cid, (R, eye, k) in zip(ids, cams):
        intrinsics[cid] = k
        extrinsics[cid] = _relative_extrinsics(R_ref, eye_ref, R, eye)
        world_to_camera[cid] = (R, eye)
        cam_pts = (poses - eye) @ R.T
        poses_camera[cid] = cam_pts
        occ = rng.random(size=(n_frames, n_joints)) < occlusion_rate
        scale = np.where(occ, noise.occlusion_scale, 1.0)[..., None]
        obs = project(cam_pts, k) + rng.normal(size=cam_pts.shape) * sigma * scale
        if np.any(obs[..., 2] <= 0):
            raise SceneGenerationError(f"depth noise pushed a joint behind camera {cid}")
        observations[cid] = obs
        occluded[cid] = occ

    # confidences follow the injected 3-D error through the rule-consistent sigmoid,
    # squeezed into (0.5, 1) for visible joints and (0, 0.5) for occluded ones
    errors = {cid: np.linalg.norm(inverse_project(observations[cid], intrinsics[cid]) - poses_camera[cid], axis=-1)
              for cid in ids}
    all_errors = np.concatenate([e.ravel() for e in errors.values()])
    spread = all_errors.std()
    for cid in ids:
        if spread > 0:
            c = confidence_ground_truth(errors[cid], ConfidenceStats(float(all_errors.mean()), float(spread)))
        else:
            c = np.full(errors[cid].shape, 0.5)
        confidences[cid] = 0.5 * (c + (~occluded[cid]))

    calibration = CalibrationSet(ids[0], intrinsics, extrinsics)
    return SyntheticScene(
        calibration=calibration,
        skeleton=skeleton,
        poses_world=poses,
        poses_camera=poses_camera,
        observations=observations,
        confidences=confidences,
        occluded=occluded,
        noise=noise,
        occlusion_rate=occlusion_rate,
        seed=seed,
        image_size=tuple(image_size),
        world_to_camera=world_to_camera,
    )


def perturb_intrinsics(k: CameraIntrinsics, rel: float, rng: np.random.Generator) -> CameraIntrinsics:
    """Scale each intrinsic by ``1 +/- rel`` with a random sign per parameter."""
    signs = rng.choice([-1.0, 1.0], size=4)
    fx, fy, cx, cy = np.array([k.fx, k.fy, k.cx, k.cy]) * (1.0 + rel * signs)
    return CameraIntrinsics(fx, fy, cx, cy)


def scene_poses_data(scene: SyntheticScene):
    from .io import PosesData, SkeletonInfo

    skel = SkeletonInfo(scene.skeleton.n_joints, scene.skeleton.root_index, list(scene.skeleton.joint_names))
    return PosesData(
        skeleton=skel,
        camera_ids=scene.camera_ids,
        frame_ids=list(range(scene.n_frames)),
        uvz=dict(scene.observations),
        conf=dict(scene.confidences),
        image_size=scene.image_size,
    )


def write_scene(scene: SyntheticScene, poses_path, calib_path, gt_poses_path) -> None:
    """Write observations, ground-truth calibration and ground-truth reference-frame poses."""
    from .io import AbsolutePoses, write_absolute_poses, write_calibration, write_poses

    data = scene_poses_data(scene)
    write_poses(poses_path, data)
    write_calibration(calib_path, scene.calibration)
    write_absolute_poses(
        gt_poses_path, AbsolutePoses(data.skeleton, data.frame_ids, scene.poses_reference, scene.reference)
    )
