"""Cross-similarity between two songs' SSM sequences and its mutual-kNN binarisation."""

from __future__ import annotations

import math

import numpy as np

# squared distances below this fraction of the squared norms are recomputed directly
_CANCELLATION_TOL = 1e-6


def _as_stack(images) -> np.ndarray:
    if isinstance(images, np.ndarray):
        stack = images
    else:
        images = list(images)
        if not images:
            raise ValueError("empty SSM list")
        stack = np.stack([np.asarray(im) for im in images])
    if stack.ndim != 3 or stack.shape[0] == 0:
        raise ValueError("empty SSM list")
    return stack.reshape(stack.shape[0], -1).astype(np.float64, copy=False)


def compute_csm(ssms_a, ssms_b) -> np.ndarray:
    """Frobenius distance between every SSM of song A (rows) and song B (columns).

    Computed through the Gram matrix, symmetrised so that swapping the two
    songs gives the exact transpose. Entries that suffer from cancellation are
    recomputed from the differences, so identical images give exactly zero.
    """
    A, B = _as_stack(ssms_a), _as_stack(ssms_b)
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"SSM dimension mismatch: {A.shape[1]} vs {B.shape[1]} pixels")
    na = np.einsum("ij,ij->i", A, A)
    nb = np.einsum("ij,ij->i", B, B)
    gram = 0.5 * (A @ B.T + (B @ A.T).T)
    sq = (na[:, None] + nb[None, :]) - 2.0 * gram
    scale = na[:, None] + nb[None, :]
    for i, j in zip(*np.nonzero(sq <= _CANCELLATION_TOL * scale)):
        diff = A[i] - B[j]
        sq[i, j] = diff @ diff
    return np.sqrt(np.maximum(sq, 0.0))


def threshold_count(kappa: float, n: int) -> int:
    """``max(1, round(kappa * n))`` with halves rounded up."""
    return max(1, int(math.floor(kappa * n + 0.5)))


def _ranks(values: np.ndarray, axis: int) -> np.ndarray:
    # stable sort: ties go to the smaller index
    order = np.argsort(values, axis=axis, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.arange(values.shape[axis]).reshape((-1, 1) if axis == 0 else (1, -1)), axis=axis)
    return ranks


def binarize_mutual_knn(csm: np.ndarray, kappa: float) -> np.ndarray:
    """Keep entry (i, j) iff it is among the ``kappa``-fraction nearest in both its row and column.

    Row ``i`` keeps its ``max(1, round(kappa * M))`` smallest entries and
    column ``j`` its ``max(1, round(kappa * N))`` smallest; ties are ranked by
    index. Returns a uint8 matrix of 0/1.
    """
    if not 0 < kappa <= 1:
        raise ValueError(f"kappa must lie in (0, 1], got {kappa}")
    csm = np.asarray(csm, dtype=np.float64)
    if csm.ndim != 2 or csm.size == 0:
        raise ValueError("need a non-empty 2-D cross-similarity matrix")
    N, M = csm.shape
    in_row = _ranks(csm, axis=1) < threshold_count(kappa, M)
    in_col = _ranks(csm, axis=0) < threshold_count(kappa, N)
    return (in_row & in_col).astype(np.uint8)
