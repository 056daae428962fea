"""Beat blocks and their sliding-window MFCC point clouds.

Windows are one tempo period long and advance by 1/200 of that, so
consecutive windows overlap by 99.5%. The window length is kept an exact
multiple of the hop: ``W = hops_per_window * H`` with ``H`` rounded to whole
samples. Beat positions snapped to that hop grid make the windows of every
block a contiguous slice of one per-song MFCC grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.fft
from numpy.lib.stride_tricks import sliding_window_view

from .audio_io import AudioSignal
from .beat import BeatTrack
from .spectral import band_energies, log_compress

HOPS_PER_WINDOW = 200
MIN_WINDOW = 64


@dataclass(frozen=True)
class MfccConfig:
    n_coeffs: int = 20
    n_mels: int = 40
    fmin: float = 0.0
    fmax: float | None = None
    log_floor: float = 1e-10
    dynamic_range_db: float | None = 80.0

    def __post_init__(self):
        if not 1 <= self.n_coeffs <= self.n_mels:
            raise ValueError("need 1 <= n_coeffs <= n_mels")
        if self.fmin < 0 or (self.fmax is not None and self.fmax <= self.fmin):
            raise ValueError("need 0 <= fmin < fmax")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")

    def band_limits(self, sample_rate: int) -> tuple[float, float]:
        fmax = sample_rate / 2.0 if self.fmax is None else float(self.fmax)
        if fmax > sample_rate / 2.0:
            raise ValueError(f"fmax {fmax} exceeds Nyquist {sample_rate / 2.0}")
        return float(self.fmin), fmax


@dataclass(frozen=True)
class Block:
    """``B`` contiguous beat intervals.

    ``beat_start_index`` and ``beat_end_index`` index the opening and closing
    beats, so ``beat_end_index - beat_start_index == B``. ``t1`` and ``t2`` are
    the matching sample indices.
    """

    beat_start_index: int
    beat_end_index: int
    t1: int
    t2: int

    @property
    def n_intervals(self) -> int:
        return self.beat_end_index - self.beat_start_index


@dataclass(frozen=True, eq=False)
class TimeOrderedPointCloud:
    points: np.ndarray
    intervals: np.ndarray

    def __len__(self) -> int:
        return self.points.shape[0]


def mfcc_frames(frames: np.ndarray, sample_rate: int, cfg: MfccConfig | None = None) -> np.ndarray:
    """MFCCs of a stack of equal-length windows, one row per window.

    Each window is Hann weighted and analysed as a single frame: power
    spectrum, triangular mel filterbank, floored log, orthonormal DCT-II.
    The floor is the larger of ``log_floor`` and ``dynamic_range_db`` below the
    window's loudest band.
    """
    cfg = cfg or MfccConfig()
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if frames.shape[1] < MIN_WINDOW:
        raise ValueError(f"window of {frames.shape[1]} samples is shorter than {MIN_WINDOW}")
    fmin, fmax = cfg.band_limits(sample_rate)
    energies = band_energies(frames, sample_rate, cfg.n_mels, fmin, fmax)
    logmel = log_compress(energies, cfg.log_floor, cfg.dynamic_range_db, axis=1)
    return scipy.fft.dct(logmel, type=2, norm="ortho", axis=1)[:, : cfg.n_coeffs]


def mfcc_window(window, sample_rate: int, cfg: MfccConfig | None = None) -> np.ndarray:
    """MFCC vector of one window of audio."""
    samples = window.samples if isinstance(window, AudioSignal) else np.asarray(window, dtype=np.float64)
    return mfcc_frames(samples[None, :], sample_rate, cfg)[0]


def window_geometry(period: float, sample_rate: int, hops_per_window: int = HOPS_PER_WINDOW) -> tuple[int, int]:
    """Window length and hop in samples for a tempo period given in seconds."""
    hop = max(1, int(round(period * sample_rate / hops_per_window)))
    return hops_per_window * hop, hop


def window_intervals(t1: int, t2: int, window: int, hop: int) -> np.ndarray:
    """Sample intervals ``[a, b)`` of the windows covering ``[t1, t2)``.

    Windows start at ``t1`` and advance by ``hop`` while they end inside the
    block; one window flush with ``t2`` is appended if the grid misses it.
    """
    if t2 - t1 < window:
        raise ValueError(f"block of {t2 - t1} samples is shorter than one {window}-sample window")
    starts = t1 + hop * np.arange((t2 - t1 - window) // hop + 1)
    if starts[-1] + window < t2:
        starts = np.append(starts, t2 - window)
    return np.stack([starts, starts + window], axis=1)


def make_blocks(beats: BeatTrack | Sequence[float], B: int, sample_rate: int) -> list[Block]:
    """All runs of ``B`` contiguous beat intervals: ``N - B + 1`` blocks for ``N`` intervals."""
    times = beats.beat_times if isinstance(beats, BeatTrack) else np.asarray(beats, dtype=float)
    positions = np.round(times * sample_rate).astype(np.int64)
    return blocks_from_positions(positions, B)


def blocks_from_positions(positions: Sequence[int], B: int) -> list[Block]:
    positions = np.asarray(positions, dtype=np.int64)
    n_intervals = positions.size - 1
    if B < 1:
        raise ValueError("B must be at least 1")
    if B > n_intervals:
        raise ValueError(f"{n_intervals} beat intervals cannot hold a block of {B}")
    return [Block(i, i + B, int(positions[i]), int(positions[i + B])) for i in range(n_intervals - B + 1)]


def block_point_cloud(
    signal: AudioSignal,
    block: Block,
    W: float,
    cfg: MfccConfig | None = None,
    hops_per_window: int = HOPS_PER_WINDOW,
) -> TimeOrderedPointCloud:
    """Point cloud of one block computed directly from the audio.

    ``W`` is the window length in seconds (the mean beat period); the hop is
    ``W / hops_per_window`` rounded to whole samples.
    """
    window, hop = window_geometry(W, signal.sample_rate, hops_per_window)
    intervals = window_intervals(block.t1, block.t2, window, hop)
    if intervals[-1, 1] > len(signal) or block.t1 < 0:
        raise ValueError("block extends beyond the signal")
    frames = np.stack([signal.samples[a:b] for a, b in intervals])
    return TimeOrderedPointCloud(mfcc_frames(frames, signal.sample_rate, cfg), intervals)


def snap_to_grid(positions: Sequence[int], hop: int, limit: int) -> np.ndarray:
    """Round sample positions onto the hop grid anchored at the first one.

    Positions past ``limit`` (the signal length) are dropped.
    """
    positions = np.asarray(positions, dtype=np.int64)
    if positions.size == 0:
        return positions
    origin = positions[0]
    snapped = origin + hop * np.floor((positions - origin) / hop + 0.5).astype(np.int64)
    snapped = np.unique(snapped)
    return snapped[snapped <= limit]


@dataclass(frozen=True, eq=False)
class MfccGrid:
    """MFCCs of windows starting at ``origin + j * hop``, for every window inside the signal."""

    points: np.ndarray
    origin: int
    window: int
    hop: int

    def cloud(self, block: Block) -> TimeOrderedPointCloud:
        """The point cloud of a block whose ends lie on this grid."""
        if (block.t1 - self.origin) % self.hop or (block.t2 - self.origin) % self.hop:
            raise ValueError("block boundaries are not on the hop grid")
        first = (block.t1 - self.origin) // self.hop
        intervals = window_intervals(block.t1, block.t2, self.window, self.hop)
        last = first + intervals.shape[0]
        if first < 0 or last > self.points.shape[0]:
            raise ValueError("block extends beyond the grid")
        return TimeOrderedPointCloud(self.points[first:last], intervals)


def mfcc_grid(
    signal: AudioSignal,
    origin: int,
    window: int,
    hop: int,
    cfg: MfccConfig | None = None,
    chunk: int = 64,
) -> MfccGrid:
    """MFCCs on the whole hop grid starting at sample ``origin``."""
    usable = signal.samples[origin:]
    if usable.size < window:
        return MfccGrid(np.zeros((0, (cfg or MfccConfig()).n_coeffs)), origin, window, hop)
    frames = sliding_window_view(usable, window)[::hop]
    points = np.concatenate(
        [mfcc_frames(frames[s : s + chunk], signal.sample_rate, cfg) for s in range(0, frames.shape[0], chunk)]
    )
    return MfccGrid(points, origin, window, hop)


def pca3_project(cloud) -> np.ndarray:
    """Time-ordered coordinates on the top three principal axes.

    Axis signs are fixed so the largest-magnitude loading of each axis is
    positive.
    """
    points = np.asarray(getattr(cloud, "points", cloud), dtype=np.float64)
    if points.shape[0] < 3:
        raise ValueError("PCA projection needs at least 3 points")
    centered = points - points.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    axes = vt[:3]
    signs = np.sign(axes[np.arange(axes.shape[0]), np.argmax(np.abs(axes), axis=1)])
    axes = axes * np.where(signs == 0, 1.0, signs)[:, None]
    proj = centered @ axes.T
    if proj.shape[1] < 3:
        proj = np.pad(proj, ((0, 0), (0, 3 - proj.shape[1])))
    return proj
