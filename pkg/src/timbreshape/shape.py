"""Self-similarity images of normalised point clouds."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from .errors import DegenerateBlockError

# centred points shorter than this fraction of the cloud's scale count as sitting on the mean
_SPREAD_TOL = 1e-10


def normalize_point_cloud(cloud, return_flags: bool = False):
    """Centre a cloud on its mean and scale every point to unit length.

    Points that sit on the mean become zero vectors; ``return_flags=True``
    also returns the boolean mask of those points. Raises
    ``DegenerateBlockError`` when every point coincides with the mean.
    """
    points = np.asarray(getattr(cloud, "points", cloud), dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 2:
        raise ValueError("need a (K, n) cloud with K >= 2")
    centered = points - points.mean(axis=0)
    norms = np.linalg.norm(centered, axis=1)
    scale = max(float(np.max(np.abs(points))), np.finfo(float).tiny)
    at_mean = norms <= _SPREAD_TOL * scale
    if np.all(at_mean):
        raise DegenerateBlockError("degenerate block: all points coincide")
    out = np.zeros_like(centered)
    out[~at_mean] = centered[~at_mean] / norms[~at_mean, None]
    return (out, at_mean) if return_flags else out


def compute_ssm(cloud) -> np.ndarray:
    """Pairwise Euclidean distances between the points, in time order."""
    points = np.asarray(getattr(cloud, "points", cloud), dtype=np.float64)
    if points.shape[0] < 2:
        raise ValueError("need at least 2 points")
    return squareform(pdist(points))


@lru_cache(maxsize=32)
def _interp_weights(size: int, d: int):
    # output pixel u samples input coordinate u * (size - 1) / (d - 1), corners aligned
    x = np.arange(d) * (size - 1) / (d - 1)
    i0 = np.minimum(np.floor(x).astype(np.int64), size - 2)
    frac = x - i0
    return i0, frac


def interpolation_matrix(size: int, d: int) -> np.ndarray:
    """``(d, size)`` matrix of linear interpolation weights with aligned corners."""
    if size < 2 or d < 2:
        raise ValueError("need size >= 2 and d >= 2")
    i0, frac = _interp_weights(size, d)
    rows = np.arange(d)
    R = np.zeros((d, size))
    R[rows, i0] = 1.0 - frac
    R[rows, i0 + 1] += frac
    return R


def _symmetrize_if(raw: np.ndarray, out: np.ndarray) -> np.ndarray:
    if raw.shape[0] == raw.shape[1] and np.array_equal(raw, raw.T):
        return 0.5 * (out + out.T)
    return out


def resize_ssm(raw: np.ndarray, d: int) -> np.ndarray:
    """Bilinear resize of a square matrix to ``d x d``."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[0] != raw.shape[1] or raw.shape[0] < 2:
        raise ValueError("need a square matrix of size >= 2")
    if d < 2:
        raise ValueError("d must be at least 2")
    if raw.shape[0] == d:
        return raw.copy()
    R = interpolation_matrix(raw.shape[0], d)
    return _symmetrize_if(raw, R @ raw @ R.T)


def block_ssm(cloud, d: int) -> np.ndarray:
    """Normalised, resized SSM of one block.

    Equivalent to ``resize_ssm(compute_ssm(normalize_point_cloud(cloud)), d)``
    but only measures the distances bilinear sampling actually reads.
    """
    unit = normalize_point_cloud(cloud)
    K = unit.shape[0]
    if K == d:
        image = compute_ssm(unit)
    else:
        R = interpolation_matrix(K, d)
        used = np.flatnonzero(np.any(R != 0, axis=0))
        sub = cdist(unit[used], unit[used])
        Ru = R[:, used]
        image = Ru @ sub @ Ru.T
        image = 0.5 * (image + image.T)
    return np.clip(image, 0.0, 2.0)


@dataclass
class BlockImages:
    """SSM images of the blocks that had shape, plus the indices of those that did not."""

    images: np.ndarray
    kept: list[int] = field(default_factory=list)
    skipped: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return self.images.shape[0]


def block_ssms(clouds: Iterable, d: int, dtype=np.float32) -> BlockImages:
    """SSM images for a sequence of block clouds, skipping degenerate ones."""
    images, kept, skipped = [], [], []
    for index, cloud in enumerate(clouds):
        if cloud is None:
            skipped.append(index)
            continue
        try:
            images.append(block_ssm(cloud, d).astype(dtype))
        except DegenerateBlockError:
            skipped.append(index)
            continue
        kept.append(index)
    stacked = np.stack(images) if images else np.zeros((0, d, d), dtype=dtype)
    return BlockImages(stacked, kept, skipped)
