"""Consensus-based self-calibration of a camera pair, and its star extension to a rig.

Given frustum-space predictions of the same joints from two cameras, the
optimizer minimizes the cross-view error

    E = sum_i w_i || x1_i - R (x2_i - T) ||^2

where ``x1``/``x2`` are the predictions lifted with each camera's current
intrinsics. Every update is a closed-form minimizer of ``E`` in its own
variables:

* rotation: rigid Procrustes alignment of the centered clouds,
* translation: the weighted mean of ``x2 - R^T x1``,
* one intrinsic family per iteration, round-robin over
  ``(f1, f2, C1, C2)``, as 1-D linear least squares per image axis.

The camera-2 updates fit ``R^T x1 + T`` to ``x2`` which has the same cost
because ``||a - R b|| = ||R^T a - b||`` for orthogonal ``R``. Hence ``E`` is
non-increasing after every substep.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .errors import (
    ConsensusPoseError,
    DegenerateGeometryError,
    InvalidInputError,
    NumericalFailureError,
)
from .geometry import CalibrationSet, CameraExtrinsics, CameraIntrinsics, check_rotation

log = logging.getLogger(__name__)

MIN_CORRESPONDENCES = 3
# relative singular-value cutoff for a rank-deficient cross-covariance
RANK_TOL = 1e-10
INTRINSIC_SUBSTEPS = ("focal_1", "focal_2", "center_1", "center_2")


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings for :func:`calibrate_pair` and :func:`calibrate_rig`.

    Initial intrinsics come from ``init_focal_px``/``init_center_px`` when
    given, otherwise from ``image_size`` (focal = larger side, center =
    image center). Per-camera initial intrinsics passed to the calibrate
    functions take precedence over both.
    """

    max_iter: int = 200
    rel_tol: float = 1e-10
    conf_threshold: float = 0.5
    init_focal_px: float | tuple[float, float] | None = None
    init_center_px: tuple[float, float] | None = None
    image_size: tuple[float, float] | None = None
    freeze_intrinsics: bool = False
    weighted: bool = False
    center_bound_factor: float = 4.0

    def __post_init__(self):
        if int(self.max_iter) != self.max_iter or self.max_iter < 0:
            raise InvalidInputError(f"max_iter must be a non-negative integer, got {self.max_iter}")
        if not 0.0 <= self.conf_threshold <= 1.0:
            raise InvalidInputError(f"conf_threshold must lie in [0, 1], got {self.conf_threshold}")
        if not self.rel_tol >= 0:
            raise InvalidInputError(f"rel_tol must be non-negative, got {self.rel_tol}")

    def initial_intrinsics(self) -> CameraIntrinsics:
        if self.init_focal_px is not None:
            fx, fy = np.broadcast_to(np.asarray(self.init_focal_px, dtype=float), (2,))
        elif self.image_size is not None:
            fx = fy = float(max(self.image_size))
        else:
            raise InvalidInputError("need init_focal_px or image_size to initialize the focal length")
        if self.init_center_px is not None:
            cx, cy = self.init_center_px
        elif self.image_size is not None:
            cx, cy = self.image_size[0] / 2.0, self.image_size[1] / 2.0
        else:
            raise InvalidInputError("need init_center_px or image_size to initialize the principal point")
        return CameraIntrinsics(fx, fy, cx, cy)


@dataclass(frozen=True, eq=False)
class CorrespondenceSet:
    """Matched frustum triples of one camera pair, after confidence filtering."""

    uvz_a: np.ndarray
    uvz_b: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        a = np.ascontiguousarray(self.uvz_a, dtype=float)
        b = np.ascontiguousarray(self.uvz_b, dtype=float)
        w = np.ascontiguousarray(self.weights, dtype=float)
        if a.ndim != 2 or a.shape[1] != 3 or a.shape != b.shape or w.shape != (a.shape[0],):
            raise InvalidInputError(
                f"mismatched correspondence arrays: {a.shape}, {b.shape}, weights {w.shape}"
            )
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise InvalidInputError("correspondences must be finite")
        if np.any(a[:, 2] <= 0) or np.any(b[:, 2] <= 0):
            raise InvalidInputError("correspondence depths must be positive")
        if np.any((w < 0) | (w > 1)):
            raise InvalidInputError("weights must lie in [0, 1]")
        object.__setattr__(self, "uvz_a", a)
        object.__setattr__(self, "uvz_b", b)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.uvz_a.shape[0]


def build_correspondences(p_a, p_b, conf_a=None, conf_b=None, threshold: float = 0.5) -> CorrespondenceSet:
    """Pair up joints observed by both cameras with confidence ``>= threshold`` in each.

    ``p_a``/``p_b`` are frustum poses of shape ``(F, J, 3)`` (or ``(J, 3)``);
    missing observations are NaN. The weight of a pair is the product of
    its two confidences.
    """
    a = np.asarray(p_a, dtype=float).reshape(-1, 3)
    b = np.asarray(p_b, dtype=float).reshape(-1, 3)
    if a.shape != b.shape:
        raise InvalidInputError(f"prediction shapes differ: {np.shape(p_a)} vs {np.shape(p_b)}")
    ca = np.ones(len(a)) if conf_a is None else np.asarray(conf_a, dtype=float).reshape(-1)
    cb = np.ones(len(b)) if conf_b is None else np.asarray(conf_b, dtype=float).reshape(-1)
    if ca.shape != (len(a),) or cb.shape != (len(b),):
        raise InvalidInputError("confidence arrays must have one entry per joint")
    keep = (
        np.all(np.isfinite(a), axis=1)
        & np.all(np.isfinite(b), axis=1)
        & (ca >= threshold)
        & (cb >= threshold)
    )
    return CorrespondenceSet(a[keep], b[keep], ca[keep] * cb[keep])


# -- closed-form building blocks ---------------------------------------------


def _weights(weights, n):
    if weights is None:
        return np.ones(n)
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise InvalidInputError(f"expected {n} weights, got shape {w.shape}")
    return w


def _matched(x_c1, x_c2):
    a = np.asarray(x_c1, dtype=float).reshape(-1, 3)
    b = np.asarray(x_c2, dtype=float).reshape(-1, 3)
    if a.shape != b.shape:
        raise InvalidInputError(f"point sets differ in length: {a.shape[0]} vs {b.shape[0]}")
    if a.shape[0] == 0:
        raise InvalidInputError("point sets are empty")
    return a, b


def objective(x_c1, x_c2, extrinsics: CameraExtrinsics, weights=None) -> float:
    """Squared (optionally weighted) Frobenius norm of ``x_c1 - R (x_c2 - T)``."""
    a, b = _matched(x_c1, x_c2)
    r = a - (b - extrinsics.translation) @ extrinsics.rotation.T
    return float(_weights(weights, len(a)) @ np.einsum("ij,ij->i", r, r))


def optimal_translation(x_c1, x_c2, rotation, weights=None) -> np.ndarray:
    """Translation minimizing the objective for a fixed rotation: mean of ``x_c2 - R^T x_c1``."""
    a, b = _matched(x_c1, x_c2)
    R = check_rotation(rotation)
    w = _weights(weights, len(a))
    if not w.sum() > 0:
        raise InvalidInputError("weights sum to zero")
    return w @ (b - a @ R) / w.sum()


def rotation_from_covariance(M) -> np.ndarray:
    """Rotation maximizing ``trace(R M)``, with reflection correction."""
    U, s, Vt = np.linalg.svd(M)
    if not np.all(np.isfinite(s)) or s[0] <= 0 or s[1] <= RANK_TOL * s[0]:
        raise DegenerateGeometryError(
            f"cross-covariance has rank < 2 (singular values {s.tolist()}); points are collinear"
        )
    V = Vt.T
    d = np.sign(np.linalg.det(V @ U.T))
    return V @ np.diag([1.0, 1.0, d]) @ U.T


def procrustes_rotation(x_c1, x_c2, weights=None) -> np.ndarray:
    """Rotation in SO(3) minimizing ``sum_i w_i ||x_c1_i - R x_c2_i||^2``.

    Pass centered point sets to obtain the rotation of the optimal rigid
    alignment.
    """
    a, b = _matched(x_c1, x_c2)
    if len(a) < MIN_CORRESPONDENCES:
        raise DegenerateGeometryError(f"need at least {MIN_CORRESPONDENCES} points, got {len(a)}")
    w = _weights(weights, len(a))
    return rotation_from_covariance((b * w[:, None]).T @ a)


def optimal_focal(u, z, center: float, target, weights=None) -> float:
    """Focal length minimizing ``||(u - C) z / f - target||^2`` along one image axis.

    Solved linearly in ``1/f``; returns ``inf`` when the optimal inverse
    focal is zero and a negative value when it is negative, leaving the
    physical check to the caller.
    """
    u, z, target = (np.asarray(v, dtype=float).reshape(-1) for v in (u, z, target))
    w = _weights(weights, len(u))
    num, den = _kernels.python_backend.focal_normal_sums(u, z, float(center), target, w)
    if den <= 0:
        raise DegenerateGeometryError("(u - C) z is identically zero; focal length is undetermined")
    return den / num if num != 0 else float("inf")


def optimal_center(u, z, focal: float, target, weights=None) -> float:
    """Principal point minimizing ``||(u - C) z / f - target||^2`` along one image axis."""
    u, z, target = (np.asarray(v, dtype=float).reshape(-1) for v in (u, z, target))
    w = _weights(weights, len(u))
    num, den = _kernels.python_backend.center_normal_sums(u, z, float(focal), target, w)
    if den <= 0:
        raise DegenerateGeometryError("z / f is identically zero; principal point is undetermined")
    return num / den


# -- Algorithm ---------------------------------------------------------------


@dataclass(frozen=True)
class TraceEntry:
    iteration: int
    substep: str
    objective: float
    rejected: bool = False


@dataclass
class PairCalibration:
    """Result of one pairwise run. ``extrinsics`` maps camera 2 into camera 1."""

    intrinsics_1: CameraIntrinsics
    intrinsics_2: CameraIntrinsics
    extrinsics: CameraExtrinsics
    trace: list[TraceEntry]
    n_points: int
    total_weight: float
    n_iterations: int
    n_rejected: int = 0
    converged: bool = False
    objective_floor: float = 0.0

    @property
    def objective(self) -> float:
        return self.trace[-1].objective

    @property
    def rms_residual(self) -> float:
        """Root-mean-square cross-view joint distance in mm at the final parameters."""
        return float(np.sqrt(self.objective / self.total_weight))

    def is_monotone(self, rtol: float = 1e-9) -> bool:
        return trace_is_monotone(self.trace, rtol=rtol, atol=self.objective_floor)


def trace_is_monotone(trace, rtol: float = 1e-9, atol: float = 0.0) -> bool:
    """True when every objective is at most ``prev * (1 + rtol) + atol``."""
    values = [e.objective if isinstance(e, TraceEntry) else float(e) for e in trace]
    return all(b <= a * (1.0 + rtol) + atol for a, b in zip(values, values[1:]))


class _PairProblem:
    """Mutable optimizer state for one camera pair."""

    def __init__(self, corr: CorrespondenceSet, k1: CameraIntrinsics, k2: CameraIntrinsics,
                 cfg: OptimizerConfig, kernels):
        self.kb = kernels
        self.cfg = cfg
        self.uvz = (corr.uvz_a, corr.uvz_b)
        self.u = tuple(np.ascontiguousarray(p[:, 0]) for p in self.uvz)
        self.v = tuple(np.ascontiguousarray(p[:, 1]) for p in self.uvz)
        self.z = tuple(np.ascontiguousarray(p[:, 2]) for p in self.uvz)
        self.w = corr.weights.copy() if cfg.weighted else np.ones(len(corr))
        self.total_weight = float(self.w.sum())
        if not self.total_weight > 0:
            raise DegenerateGeometryError("all correspondence weights are zero")
        # [fx, fy, cx, cy] per camera
        self.k = [np.array([k.fx, k.fy, k.cx, k.cy]) for k in (k1, k2)]
        self.center_bounds = [self._center_bounds(k) for k in (k1, k2)]
        self.x = [None, None]
        self.rebuild(0)
        self.rebuild(1)
        self.R = np.eye(3)
        self.T = np.zeros(3)

    def _center_bounds(self, k: CameraIntrinsics):
        if self.cfg.image_size is not None:
            size = np.asarray(self.cfg.image_size, dtype=float)
        else:
            size = 2.0 * np.abs([k.cx, k.cy])
        half = self.cfg.center_bound_factor * size / 2.0
        mid = size / 2.0 if self.cfg.image_size is not None else np.array([k.cx, k.cy])
        return mid - half, mid + half

    def rebuild(self, cam):
        fx, fy, cx, cy = self.k[cam]
        self.x[cam] = self.kb.backproject(self.uvz[cam], fx, fy, cx, cy)

    def value(self, T=None):
        return self.kb.rigid_objective(self.x[0], self.x[1], self.R, self.T if T is None else T, self.w)

    def translation(self):
        """Weighted mean of ``x2 - R^T x1``, the best translation for the current rotation."""
        rotated = self.kb.map_rigid_inverse(self.x[0], self.R, np.zeros(3))
        return self.w @ (self.x[1] - rotated) / self.total_weight

    def update_rotation(self):
        ma, mb, M = self.kb.weighted_cross_covariance(self.x[0], self.x[1], self.w)
        self.R = rotation_from_covariance(M)
        # the alignment's own translation puts the centroids on top of each other
        return self.value(mb - self.R.T @ ma)

    def update_translation(self):
        self.T = self.translation()
        return self.value()

    def targets(self, cam):
        """Where the other camera places this camera's joints, in this camera's frame."""
        if cam == 0:
            return self.kb.map_rigid(self.x[1], self.R, self.T)
        return self.kb.map_rigid_inverse(self.x[0], self.R, self.T)

    def update_focal(self, cam):
        t = self.targets(cam)
        rejected = False
        for axis, coords in enumerate((self.u[cam], self.v[cam])):
            target = np.ascontiguousarray(t[:, axis])
            num, den = self.kb.focal_normal_sums(coords, self.z[cam], self.k[cam][2 + axis], target, self.w)
            if den <= 0:
                raise DegenerateGeometryError(
                    f"camera {cam + 1}: pixel offsets from the center are all zero on axis {axis}"
                )
            if num > 0 and np.isfinite(den / num):
                self.k[cam][axis] = den / num
            else:
                rejected = True
        self.rebuild(cam)
        return rejected

    def update_center(self, cam):
        t = self.targets(cam)
        lo, hi = self.center_bounds[cam]
        rejected = False
        for axis, coords in enumerate((self.u[cam], self.v[cam])):
            target = np.ascontiguousarray(t[:, axis])
            num, den = self.kb.center_normal_sums(coords, self.z[cam], self.k[cam][axis], target, self.w)
            if den <= 0:
                raise DegenerateGeometryError(f"camera {cam + 1}: depths are all zero")
            c = num / den
            if np.isfinite(c) and lo[axis] <= c <= hi[axis]:
                self.k[cam][2 + axis] = c
            else:
                rejected = True
        self.rebuild(cam)
        return rejected

    def intrinsics(self, cam) -> CameraIntrinsics:
        return CameraIntrinsics(*self.k[cam])


def _objective_floor(x1, x2, total_weight):
    # objective level indistinguishable from double-precision roundoff of the coordinates
    scale = max(np.abs(x1).max(), np.abs(x2).max(), 1.0)
    return 3.0 * total_weight * (1e3 * np.finfo(float).eps * scale) ** 2


def optimize_pair(corr: CorrespondenceSet, init_1: CameraIntrinsics, init_2: CameraIntrinsics,
                  cfg: OptimizerConfig = OptimizerConfig(), backend=None) -> PairCalibration:
    """Run the alternating closed-form optimization on prepared correspondences."""
    if len(corr) < MIN_CORRESPONDENCES:
        raise DegenerateGeometryError(
            f"only {len(corr)} correspondences survive filtering; need {MIN_CORRESPONDENCES}"
        )
    prob = _PairProblem(corr, init_1, init_2, cfg, _kernels.get_backend(backend))
    prob.T = prob.translation()
    obj = prob.value()
    _check_finite(obj, 0)
    trace = [TraceEntry(0, "init", obj)]
    floor = _objective_floor(prob.x[0], prob.x[1], prob.total_weight)
    history = [obj]
    cycle = 1 if cfg.freeze_intrinsics else len(INTRINSIC_SUBSTEPS)
    n_rejected = 0
    converged = False
    iteration = 0

    for iteration in range(1, cfg.max_iter + 1):
        if obj <= floor:
            converged = True
            iteration -= 1
            break
        obj = prob.update_rotation()
        _check_finite(obj, iteration)
        trace.append(TraceEntry(iteration, "rotation", obj))
        obj = prob.update_translation()
        _check_finite(obj, iteration)
        trace.append(TraceEntry(iteration, "translation", obj))

        if not cfg.freeze_intrinsics:
            family = (iteration - 1) % 4
            cam = family % 2
            if family < 2:
                rejected = prob.update_focal(cam)
            else:
                rejected = prob.update_center(cam)
            n_rejected += rejected
            obj = prob.value()
            _check_finite(obj, iteration)
            trace.append(TraceEntry(iteration, INTRINSIC_SUBSTEPS[family], obj, rejected))

        history.append(obj)
        if len(history) > cycle:
            prev = history[-1 - cycle]
            if prev - obj <= cfg.rel_tol * prev:
                converged = True
                break

    log.debug("pair optimization stopped after %d iterations, objective %.6g", iteration, obj)
    return PairCalibration(
        intrinsics_1=prob.intrinsics(0),
        intrinsics_2=prob.intrinsics(1),
        extrinsics=CameraExtrinsics(prob.R, prob.T),
        trace=trace,
        n_points=len(corr),
        total_weight=prob.total_weight,
        n_iterations=iteration,
        n_rejected=int(n_rejected),
        converged=converged,
        objective_floor=floor,
    )


def _check_finite(value, iteration):
    if not np.isfinite(value):
        raise NumericalFailureError(f"objective became non-finite at iteration {iteration}", iteration)


def calibrate_pair(p_c1, p_c2, cfg: OptimizerConfig = OptimizerConfig(), conf_c1=None, conf_c2=None,
                   init_1: CameraIntrinsics | None = None, init_2: CameraIntrinsics | None = None,
                   backend=None) -> PairCalibration:
    """Self-calibrate two cameras from frustum predictions of the same joints.

    Parameters
    ----------
    p_c1, p_c2 : array_like, shape (F, J, 3)
        Per-frame ``(u, v, z)`` predictions, matched frame-by-frame and
        joint-by-joint. NaN rows mark missing observations.
    cfg : OptimizerConfig
    conf_c1, conf_c2 : array_like, shape (F, J), optional
        Joint confidences; pairs below ``cfg.conf_threshold`` in either
        camera are discarded.
    init_1, init_2 : CameraIntrinsics, optional
        Starting intrinsics; default to ``cfg.initial_intrinsics()``.

    Returns
    -------
    PairCalibration
        Estimated intrinsics of both cameras, the transform from camera 2
        into camera 1 and the per-substep objective trace.
    """
    corr = build_correspondences(p_c1, p_c2, conf_c1, conf_c2, cfg.conf_threshold)
    init_1 = init_1 or cfg.initial_intrinsics()
    init_2 = init_2 or cfg.initial_intrinsics()
    return optimize_pair(corr, init_1, init_2, cfg, backend)


@dataclass
class RigCalibration:
    calibration: CalibrationSet
    pairs: dict[str, PairCalibration] = field(default_factory=dict)


def _tag(exc: ConsensusPoseError, camera_id) -> ConsensusPoseError:
    if isinstance(exc, NumericalFailureError):
        tagged = NumericalFailureError(f"camera {camera_id}: {exc}", exc.iteration)
    else:
        tagged = type(exc)(f"camera {camera_id}: {exc}")
    tagged.camera_id = camera_id
    return tagged


def calibrate_rig(predictions: dict, reference_id, cfg: OptimizerConfig = OptimizerConfig(),
                  confidences: dict | None = None, initial_intrinsics: dict | None = None,
                  n_jobs: int = 1, backend=None) -> RigCalibration:
    """Calibrate every camera against ``reference_id`` (star topology).

    Each non-reference camera is solved as an independent pair with the
    reference as camera 1, so its extrinsics map it into the reference
    frame. The reference intrinsics estimated by each pair are averaged.
    """
    if len(predictions) < 2:
        raise InvalidInputError(f"need at least 2 cameras, got {len(predictions)}")
    if reference_id not in predictions:
        raise InvalidInputError(f"reference camera {reference_id!r} not among {list(predictions)}")
    confidences = confidences or {}
    initial_intrinsics = initial_intrinsics or {}

    def init_for(cid):
        return initial_intrinsics.get(cid) or cfg.initial_intrinsics()

    others = sorted((cid for cid in predictions if cid != reference_id), key=str)

    def run(cid):
        try:
            return calibrate_pair(
                predictions[reference_id], predictions[cid], cfg,
                confidences.get(reference_id), confidences.get(cid),
                init_for(reference_id), init_for(cid), backend,
            )
        except ConsensusPoseError as exc:
            raise _tag(exc, cid) from exc

    if n_jobs > 1 and len(others) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(run, others))
    else:
        results = [run(cid) for cid in others]
    pairs = dict(zip(others, results))

    if cfg.freeze_intrinsics:
        ref_k = init_for(reference_id)
    else:
        stacked = np.array([[p.intrinsics_1.fx, p.intrinsics_1.fy, p.intrinsics_1.cx, p.intrinsics_1.cy]
                            for p in results])
        ref_k = CameraIntrinsics(*stacked.mean(axis=0))

    intrinsics = {}
    extrinsics = {}
    for cid in predictions:
        if cid == reference_id:
            intrinsics[cid] = ref_k
            extrinsics[cid] = CameraExtrinsics.identity()
        else:
            intrinsics[cid] = pairs[cid].intrinsics_2
            extrinsics[cid] = pairs[cid].extrinsics
    return RigCalibration(CalibrationSet(reference_id, intrinsics, extrinsics), pairs)


def with_overrides(cfg: OptimizerConfig, **changes) -> OptimizerConfig:
    return replace(cfg, **{k: v for k, v in changes.items() if v is not None})
