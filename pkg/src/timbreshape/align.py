"""Smith-Waterman local alignment of a binary cross-similarity matrix with near-diagonal moves.

Only three predecessor moves are allowed, ``(i-1, j-1)``, ``(i-2, j-1)`` and
``(i-1, j-2)``. A matching cell scores +1 and a mismatch -1. The gap term
costs 0 on a match, -0.5 when a mismatch follows a match and -0.7 when a
mismatch follows a mismatch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

GAP_OPEN = -0.5
GAP_EXTEND = -0.7

# (row step, column step) back to the predecessor, and the offset of the "previous" bit
MOVES = ((1, 1), (2, 1), (1, 2))


@dataclass
class AlignmentResult:
    """Best local alignment score.

    ``best_cell`` and ``path`` use table coordinates, in which cell ``(i, j)``
    reads bit ``(i - 1, j - 1)``. Row and column 0 are the zero border.
    """

    score: float
    best_cell: tuple[int, int]
    table: np.ndarray | None = None
    path: list[tuple[int, int]] | None = None


def _gap(prev: np.ndarray, cur: np.ndarray) -> np.ndarray:
    return np.where(cur == 1, 0.0, np.where(prev == 1, GAP_OPEN, GAP_EXTEND))


def alignment_table(bits) -> np.ndarray:
    """The full ``(N + 1) x (M + 1)`` score table; bits and scores outside the matrix read as 0."""
    bits = np.asarray(bits)
    if bits.ndim != 2 or bits.size == 0:
        raise ValueError("need a non-empty 2-D binary matrix")
    N, M = bits.shape
    # padded[r + 3, c + 3] holds bit (r, c) for r, c >= -3
    padded = np.zeros((N + 3, M + 3), dtype=np.int8)
    padded[3:, 3:] = bits != 0
    # scores[i + 1, j + 1] holds table cell (i, j) for i, j >= -1
    scores = np.zeros((N + 2, M + 2))
    cols = slice(3, M + 3)
    for i in range(1, N + 1):
        cur = padded[i + 2, cols]  # bit (i-1, j-1)
        match = np.where(cur == 1, 1.0, -1.0)
        diag = scores[i, 1:M + 1] + match + _gap(padded[i + 1, 2:M + 2], cur)
        down = scores[i - 1, 1:M + 1] + match + _gap(padded[i, 2:M + 2], cur)
        right = scores[i, 0:M] + match + _gap(padded[i + 1, 1:M + 1], cur)
        scores[i + 1, 2:] = np.maximum(np.maximum(diag, down), np.maximum(right, 0.0))
    return scores[1:, 1:]


def _traceback(table: np.ndarray, bits: np.ndarray, cell: tuple[int, int]) -> list[tuple[int, int]]:
    def bit(r, c):
        return int(bits[r, c]) if r >= 0 and c >= 0 else 0

    path = [cell]
    i, j = cell
    while table[i, j] > 0:
        cur = bit(i - 1, j - 1)
        match = 1.0 if cur == 1 else -1.0
        step = None
        for di, dj in MOVES:
            pi, pj = i - di, j - dj
            prev_score = table[pi, pj] if pi >= 0 and pj >= 0 else 0.0
            prev_bit = bit(i - 1 - di, j - 1 - dj)
            gap = 0.0 if cur == 1 else (GAP_OPEN if prev_bit == 1 else GAP_EXTEND)
            if prev_score + match + gap == table[i, j]:
                step = (pi, pj)
                break
        if step is None or min(step) < 0 or table[step] <= 0:
            break
        i, j = step
        path.append(step)
    return path[::-1]


def smith_waterman_constrained(bits, return_table: bool = False, traceback: bool = False) -> AlignmentResult:
    """Score a binary cross-similarity matrix; the score is the largest table entry."""
    bits = np.asarray(bits)
    table = alignment_table(bits)
    flat = int(np.argmax(table))
    cell = divmod(flat, table.shape[1])
    score = float(table[cell])
    path = _traceback(table, bits, cell) if traceback and score > 0 else ([cell] if traceback else None)
    return AlignmentResult(score, cell, table if return_table else None, path)


def normalized_score(score: float, n: int, m: int) -> float:
    return score / math.sqrt(n * m)
