"""Pose evaluation metrics: MPJPE, MRPE, PCK/AUC and the elastic-net loss.

Poses are arrays of shape ``(J, 3)`` or batches ``(F, J, 3)`` in mm.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidInputError

PCK_THRESHOLD_MM = 150.0
AUC_THRESHOLDS_MM = np.arange(0.0, 150.0 + 1e-9, 5.0)


def _pair(pred, gt):
    p = np.asarray(pred, dtype=float)
    g = np.asarray(gt, dtype=float)
    if p.shape != g.shape:
        raise InvalidInputError(f"pose shapes differ: {p.shape} vs {g.shape}")
    if p.ndim < 2 or p.shape[-1] != 3 or p.shape[-2] == 0:
        raise InvalidInputError(f"poses must have shape (..., J, 3) with J >= 1, got {p.shape}")
    if p.ndim == 2:
        p, g = p[None], g[None]
    return p.reshape(-1, *p.shape[-2:]), g.reshape(-1, *g.shape[-2:])


def _check_root(root, n_joints):
    if not 0 <= root < n_joints:
        raise InvalidInputError(f"root index {root} out of range for {n_joints} joints")


def root_centered_errors(pred, gt, root: int = 0) -> np.ndarray:
    """Per-joint Euclidean errors ``(F, J)`` after moving both roots to the origin."""
    p, g = _pair(pred, gt)
    _check_root(root, p.shape[1])
    pc = p - p[:, root:root + 1]
    gc = g - g[:, root:root + 1]
    return np.linalg.norm(pc - gc, axis=-1)


def mpjpe(pred, gt, root: int = 0) -> float:
    """Mean per-joint position error in mm after root-centering both poses."""
    return float(root_centered_errors(pred, gt, root).mean())


def mrpe(pred, gt, root: int = 0) -> float:
    """Mean Euclidean error of the root joint in absolute coordinates."""
    p, g = _pair(pred, gt)
    _check_root(root, p.shape[1])
    return float(np.linalg.norm(p[:, root] - g[:, root], axis=-1).mean())


def pck_auc(pred, gt, threshold_mm: float = PCK_THRESHOLD_MM, thresholds=AUC_THRESHOLDS_MM,
            root: int = 0) -> tuple[float, float]:
    """Fraction of joints within ``threshold_mm`` and its mean over ``thresholds``.

    Errors are root-centered; the root joint itself is always exact after
    centering and is left out of the count unless it is the only joint.
    A joint counts as correct when its error is ``<=`` the threshold.
    """
    err = root_centered_errors(pred, gt, root)
    if err.shape[1] > 1:
        err = np.delete(err, root, axis=1)
    err = err.ravel()
    pck = float(np.mean(err <= threshold_mm))
    auc = float(np.mean([np.mean(err <= t) for t in np.asarray(thresholds, dtype=float)]))
    return pck, auc


def elastic_net_loss(pred, gt) -> float:
    """Mean over samples (axis 0) of ``||e||_1 + ||e||_2^2``; scalars are single samples."""
    p = np.asarray(pred, dtype=float)
    g = np.asarray(gt, dtype=float)
    if p.shape != g.shape:
        raise InvalidInputError(f"shapes differ: {p.shape} vs {g.shape}")
    e = (p - g).reshape(len(p) if p.ndim else 1, -1)
    return float(np.mean(np.abs(e).sum(axis=1) + (e * e).sum(axis=1)))


METRIC_NAMES = ("mpjpe", "mrpe", "pck", "auc", "elastic_net")


@dataclass
class MetricReport:
    mpjpe_mm: float | None = None
    mrpe_mm: float | None = None
    pck: float | None = None
    auc: float | None = None
    elastic_net: float | None = None
    pck_threshold_mm: float = PCK_THRESHOLD_MM
    n_frames: int = 0
    per_joint_mpjpe_mm: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_table(self, precision: int = 4) -> str:
        rows = [
            ("MPJPE (mm)", self.mpjpe_mm),
            ("MRPE (mm)", self.mrpe_mm),
            (f"PCK@{self.pck_threshold_mm:g}mm", self.pck),
            ("AUC", self.auc),
            ("elastic net", self.elastic_net),
        ]
        rows = [(name, value) for name, value in rows if value is not None]
        rows += [(f"  {name}", value) for name, value in self.per_joint_mpjpe_mm.items()]
        width = max(len(name) for name, _ in rows) if rows else 0
        lines = [f"{'metric'.ljust(width)}  value", f"{'-' * width}  {'-' * 12}"]
        lines += [f"{name.ljust(width)}  {value:.{precision}f}" for name, value in rows]
        return "\n".join(lines)


def evaluate(pred, gt, metrics=METRIC_NAMES, root: int = 0, pck_threshold_mm: float = PCK_THRESHOLD_MM,
             joint_names=None) -> MetricReport:
    """Compute the requested metrics over a batch of frames."""
    unknown = set(metrics) - set(METRIC_NAMES)
    if unknown:
        raise InvalidInputError(f"unknown metrics {sorted(unknown)}; choose from {METRIC_NAMES}")
    p, g = _pair(pred, gt)
    report = MetricReport(pck_threshold_mm=pck_threshold_mm, n_frames=len(p))
    if "mpjpe" in metrics:
        errors = root_centered_errors(p, g, root)
        report.mpjpe_mm = float(errors.mean())
        names = joint_names or [f"joint_{j}" for j in range(p.shape[1])]
        report.per_joint_mpjpe_mm = {str(n): float(e) for n, e in zip(names, errors.mean(axis=0))}
    if "mrpe" in metrics:
        report.mrpe_mm = mrpe(p, g, root)
    if "pck" in metrics or "auc" in metrics:
        pck, auc = pck_auc(p, g, pck_threshold_mm, root=root)
        report.pck = pck if "pck" in metrics else None
        report.auc = auc if "auc" in metrics else None
    if "elastic_net" in metrics:
        report.elastic_net = elastic_net_loss(p, g)
    return report
