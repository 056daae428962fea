from __future__ import annotations

import numpy as np
import pytest

from sw_oracle import memo_table
from timbreshape.align import MOVES, alignment_table, normalized_score, smith_waterman_constrained


def test_all_zero_bits_score_zero():
    res = smith_waterman_constrained(np.zeros((5, 7)))
    assert res.score == 0.0


@pytest.mark.parametrize("n", range(1, 7))
def test_identity_scores_n_and_matches_oracle(n):
    bits = np.eye(n, dtype=np.uint8)
    table = alignment_table(bits)
    np.testing.assert_array_equal(table, np.array(memo_table(bits)))
    assert smith_waterman_constrained(bits).score == n


def test_skip_example_matches_oracle():
    bits = np.zeros((6, 6), dtype=np.uint8)
    for r, c in [(0, 0), (1, 1), (3, 2), (4, 3)]:
        bits[r, c] = 1
    table = alignment_table(bits)
    np.testing.assert_array_equal(table, np.array(memo_table(bits)))
    res = smith_waterman_constrained(bits, traceback=True)
    assert res.score == table.max()
    assert res.path[-1] == res.best_cell


def test_random_small_matrices_match_oracle():
    rng = np.random.default_rng(0)
    for _ in range(300):
        n, m = rng.integers(1, 7, size=2)
        bits = (rng.random((n, m)) < rng.uniform(0.1, 0.9)).astype(np.uint8)
        np.testing.assert_array_equal(alignment_table(bits), np.array(memo_table(bits)))


def test_transpose_symmetry_and_bounds():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n, m = rng.integers(1, 20, size=2)
        bits = (rng.random((n, m)) < 0.3).astype(np.uint8)
        s = smith_waterman_constrained(bits).score
        assert s == smith_waterman_constrained(bits.T).score
        assert 0 <= s <= min(n, m)


def test_setting_a_bit_never_lowers_the_score():
    rng = np.random.default_rng(2)
    for _ in range(200):
        bits = (rng.random((8, 9)) < 0.3).astype(np.uint8)
        zeros = np.argwhere(bits == 0)
        if zeros.size == 0:
            continue
        r, c = zeros[rng.integers(len(zeros))]
        more = bits.copy()
        more[r, c] = 1
        assert smith_waterman_constrained(more).score >= smith_waterman_constrained(bits).score


def test_traceback_uses_only_allowed_moves():
    rng = np.random.default_rng(3)
    allowed = set(MOVES)
    for _ in range(100):
        bits = (rng.random((15, 12)) < 0.4).astype(np.uint8)
        res = smith_waterman_constrained(bits, return_table=True, traceback=True)
        assert res.path[-1] == res.best_cell
        for (i0, j0), (i1, j1) in zip(res.path, res.path[1:]):
            assert (i1 - i0, j1 - j0) in allowed
        assert all(res.table[c] > 0 for c in res.path) or res.score == 0


def test_gap_costs_follow_match_state():
    # match, mismatch, mismatch along the diagonal: 1, 1 - 1 - 0.5, then clipped at 0
    bits = np.array([[1, 0, 0], [0, 0, 0], [0, 0, 0]])
    table = alignment_table(bits)
    assert table[1, 1] == 1.0
    assert table[2, 2] == 0.0  # 1 - 1 - 0.5 < 0
    bits = np.eye(4, dtype=np.uint8)
    bits[2, 2] = 0
    t = alignment_table(bits)
    assert t[3, 3] == pytest.approx(2 - 1 - 0.5)
    assert t[4, 4] == pytest.approx(0.5 + 1)


def test_empty_matrix_rejected():
    with pytest.raises(ValueError):
        smith_waterman_constrained(np.zeros((0, 3)))


def test_normalized_score():
    assert normalized_score(6.0, 4, 9) == 1.0
