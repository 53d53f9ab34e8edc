"""Decoding of per-joint network outputs into frustum-space poses.

A joint heatmap is a probability grid of shape ``(height, width)`` indexed
``[v, u]``; its soft-argmax is the expected pixel position. The paired
depth map holds normalized depths in ``[0, 1]`` that are pooled under the
heatmap and mapped onto a metric interval centered on the person. The
person's absolute distance comes from a bounded sigmoid of a single
regressed activation, and the two are summed per joint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import InvalidInputError

HEATMAP_SUM_TOL = 1e-6


@dataclass(frozen=True)
class DecodeConfig:
    rho: float = 10000.0
    beta: float = 0.5
    depth_range_mm: float = 2000.0

    def __post_init__(self):
        for name in ("rho", "beta", "depth_range_mm"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise InvalidInputError(f"{name} must be positive, got {value}")


@dataclass(frozen=True)
class ConfidenceStats:
    """Mean and standard deviation of the prediction error, in mm."""

    mean_error_mm: float
    std_error_mm: float

    def __post_init__(self):
        if not (np.isfinite(self.std_error_mm) and self.std_error_mm > 0):
            raise InvalidInputError(f"std_error_mm must be positive, got {self.std_error_mm}")

    @classmethod
    def from_errors(cls, errors) -> "ConfidenceStats":
        errors = np.asarray(errors, dtype=float)
        return cls(float(errors.mean()), float(errors.std()))


def check_heatmap(heatmap, joint: int | None = None) -> np.ndarray:
    h = np.asarray(heatmap, dtype=float)
    where = "" if joint is None else f" (joint {joint})"
    if h.ndim != 2 or h.size == 0:
        raise InvalidInputError(f"heatmap must be a non-empty 2-D grid{where}, got shape {h.shape}")
    if not np.all(np.isfinite(h)) or h.min() < 0:
        raise InvalidInputError(f"heatmap entries must be finite and non-negative{where}")
    total = h.sum()
    if abs(total - 1.0) > HEATMAP_SUM_TOL:
        raise InvalidInputError(f"heatmap must sum to 1 within {HEATMAP_SUM_TOL}{where}, sums to {total!r}")
    return h


def check_depth_map(depth_map, shape, joint: int | None = None) -> np.ndarray:
    d = np.asarray(depth_map, dtype=float)
    where = "" if joint is None else f" (joint {joint})"
    if d.shape != tuple(shape):
        raise InvalidInputError(f"depth map shape {d.shape} does not match heatmap shape {tuple(shape)}{where}")
    if not np.all(np.isfinite(d)) or d.min() < 0 or d.max() > 1:
        raise InvalidInputError(f"depth map entries must lie in [0, 1]{where}")
    return d


def soft_argmax_2d(heatmap) -> tuple[float, float]:
    """Expected ``(u, v)`` grid position under a normalized heatmap."""
    h = check_heatmap(heatmap)
    rows, cols = h.shape
    u = float(h.sum(axis=0) @ np.arange(cols, dtype=float))
    v = float(h.sum(axis=1) @ np.arange(rows, dtype=float))
    return u, v


def normalize_depth(value, cfg: DecodeConfig = DecodeConfig()):
    """Affine map of ``[0, 1]`` onto ``[-range/2, +range/2]`` mm."""
    return (np.asarray(value, dtype=float) - 0.5) * cfg.depth_range_mm


def pool_relative_depth(depth_map, heatmap, cfg: DecodeConfig = DecodeConfig()) -> float:
    """Heatmap-weighted average of a normalized depth map, in mm relative to the person."""
    h = check_heatmap(heatmap)
    d = check_depth_map(depth_map, h.shape)
    return float(normalize_depth(np.sum(d * h), cfg))


def absolute_depth(alpha_z, cfg: DecodeConfig = DecodeConfig()):
    """Person distance ``rho / (1 + exp(beta * alpha_z))`` in mm."""
    # expit(-x) == 1 / (1 + exp(x)) without overflow for large |x|
    out = cfg.rho * expit(-cfg.beta * np.asarray(alpha_z, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def compose_depth(relative_mm, absolute_mm):
    z = np.asarray(relative_mm, dtype=float) + np.asarray(absolute_mm, dtype=float)
    if np.any(~(z > 0)):
        raise InvalidInputError("composed joint depth must be positive")
    return float(z) if np.ndim(z) == 0 else z


def confidence_ground_truth(error_mm, stats: ConfidenceStats):
    """Training target of the joint confidence: ``1 / (1 + exp((d - mean) / std))``.

    Decreasing in the error, and exactly 0.5 at the mean error, so the
    ``c < 0.5`` filter drops joints that are worse than average.
    """
    d = np.asarray(error_mm, dtype=float)
    if np.any(d < 0):
        raise InvalidInputError("error must be non-negative")
    c = expit((stats.mean_error_mm - d) / stats.std_error_mm)
    return float(c) if np.ndim(c) == 0 else c


def decode_pose(heatmaps, depth_maps, alpha_z: float, cfg: DecodeConfig = DecodeConfig(),
                crop: tuple[float, float, float] | None = None) -> np.ndarray:
    """Decode one person's maps into a ``(J, 3)`` frustum pose.

    Parameters
    ----------
    heatmaps, depth_maps : array_like, shape (J, H, W)
    alpha_z : float
        Raw absolute-depth activation for the person.
    crop : (x0, y0, scale), optional
        Maps grid coordinates to image pixels as ``x0 + scale * u``.
        Without it the grid is taken to be the image.
    """
    z_abs = absolute_depth(alpha_z, cfg)
    n_joints = len(heatmaps)
    if len(depth_maps) != n_joints:
        raise InvalidInputError(f"got {n_joints} heatmaps but {len(depth_maps)} depth maps")
    out = np.empty((n_joints, 3))
    for j in range(n_joints):
        h = check_heatmap(heatmaps[j], joint=j)
        d = check_depth_map(depth_maps[j], h.shape, joint=j)
        out[j, :2] = soft_argmax_2d(h)
        try:
            out[j, 2] = compose_depth(pool_relative_depth(d, h, cfg), z_abs)
        except InvalidInputError as exc:
            raise InvalidInputError(f"{exc} (joint {j})") from None
    if crop is not None:
        x0, y0, scale = crop
        out[:, 0] = x0 + scale * out[:, 0]
        out[:, 1] = y0 + scale * out[:, 1]
    return out
