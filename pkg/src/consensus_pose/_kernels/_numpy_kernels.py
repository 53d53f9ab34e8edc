"""Pure numpy implementations of the calibration inner-loop kernels.

Every function takes C-contiguous float64 arrays; ``w`` is a per-point
weight vector (all ones for an unweighted objective).
"""

import numpy as np

NAME = "python"


def backproject(uvz, fx, fy, cx, cy):
    out = np.empty_like(uvz)
    z = uvz[:, 2]
    out[:, 0] = (uvz[:, 0] - cx) / fx * z
    out[:, 1] = (uvz[:, 1] - cy) / fy * z
    out[:, 2] = z
    return out


def map_rigid(b, R, T):
    """``R @ (b_i - T)`` for every row."""
    return (b - T) @ R.T


def map_rigid_inverse(a, R, T):
    """``R^T @ a_i + T`` for every row."""
    return a @ R + T


def rigid_objective(a, b, R, T, w):
    r = a - (b - T) @ R.T
    return float(np.dot(w, np.einsum("ij,ij->i", r, r)))


def weighted_cross_covariance(a, b, w):
    """Weighted centroids of ``a`` and ``b`` and ``sum_i w_i (b_i - mb)(a_i - ma)^T``."""
    total = w.sum()
    ma = w @ a / total
    mb = w @ b / total
    M = ((b - mb) * w[:, None]).T @ (a - ma)
    return ma, mb, M


def focal_normal_sums(u, z, c, target, w):
    """Normal-equation sums for ``min_s ||s * (u - c) z - target||_w``."""
    A = (u - c) * z
    wA = w * A
    return float(wA @ target), float(wA @ A)


def center_normal_sums(u, z, f, target, w):
    """Normal-equation sums for ``min_c ||(u - c) z / f - target||_w``."""
    B = z / f
    wB = w * B
    return float(wB @ (u * B - target)), float(wB @ B)
