"""Dynamic-programming beat tracking biased towards a prior tempo.

The onset envelope is a log-mel spectral flux. Tempo comes from the
autocorrelation of that envelope weighted by a log-Gaussian around the bias
tempo, and beats are placed by the classic dynamic program that trades onset
strength against deviation from the tempo period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.ndimage import uniform_filter1d
from scipy.signal import correlate

from .audio_io import AudioSignal
from .spectral import band_energies, log_compress


@dataclass(frozen=True)
class BeatConfig:
    frame_len: float = 0.046
    frame_hop: float = 0.010
    n_mels: int = 40
    log_floor: float = 1e-10
    dynamic_range_db: float | None = 80.0
    local_mean_window: float = 0.5
    tightness: float = 100.0
    sigma_octaves: float = 1.0
    min_period: float = 0.2
    max_period: float = 2.0


@dataclass(frozen=True, eq=False)
class OnsetEnvelope:
    """Non-negative onset strength per frame.

    ``frame_offset`` is the time (seconds) attributed to frame 0: the middle of
    the newest hop of audio that entered the analysis window.
    """

    values: np.ndarray
    frame_hop: float
    frame_offset: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if self.frame_hop <= 0:
            raise ValueError("frame_hop must be positive")
        if values.ndim != 1 or not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("onset envelope must be a finite, non-negative 1-D array")
        object.__setattr__(self, "values", values)

    @property
    def frame_rate(self) -> float:
        return 1.0 / self.frame_hop

    def times(self) -> np.ndarray:
        return self.frame_offset + np.arange(self.values.size) * self.frame_hop


@dataclass(frozen=True, eq=False)
class BeatTrack:
    beat_times: np.ndarray
    bias_bpm: float
    period: float
    no_rhythm: bool = False

    def __post_init__(self):
        times = np.asarray(self.beat_times, dtype=np.float64)
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("beat times must be strictly increasing")
        object.__setattr__(self, "beat_times", times)

    @property
    def n_intervals(self) -> int:
        return max(0, self.beat_times.size - 1)

    @property
    def mean_period(self) -> float:
        """Mean spacing of consecutive beats; the tempo period when there are fewer than two."""
        if self.beat_times.size < 2:
            return self.period
        return float(np.mean(np.diff(self.beat_times)))


def onset_envelope(
    signal: AudioSignal,
    frame_len: float = 0.046,
    frame_hop: float = 0.010,
    config: BeatConfig | None = None,
) -> OnsetEnvelope:
    """Half-wave rectified log-mel spectral flux with its local mean removed.

    Produces ``floor((len - win) / hop) + 1`` frames; the first frame has no
    predecessor and carries zero flux.
    """
    cfg = config or BeatConfig(frame_len=frame_len, frame_hop=frame_hop)
    fs = signal.sample_rate
    win = int(round(frame_len * fs))
    hop = int(round(frame_hop * fs))
    if hop <= 0 or win < hop:
        raise ValueError("need frame_len >= frame_hop > 0")
    if len(signal) < win:
        raise ValueError(f"signal of {len(signal)} samples is shorter than one {win}-sample frame")

    frames = sliding_window_view(signal.samples, win)[::hop]
    energies = band_energies(frames, fs, cfg.n_mels, 0.0, fs / 2.0)
    logmel = log_compress(energies, cfg.log_floor, cfg.dynamic_range_db)
    flux = np.zeros(frames.shape[0])
    flux[1:] = np.maximum(np.diff(logmel, axis=0), 0.0).sum(axis=1)

    size = max(1, int(round(cfg.local_mean_window / (hop / fs))))
    local_mean = uniform_filter1d(flux, size=size, mode="nearest")
    values = np.maximum(flux - local_mean, 0.0)
    return OnsetEnvelope(values, hop / fs, (win - hop / 2) / fs)


def estimate_tempo(env: OnsetEnvelope, bias_bpm: float, config: BeatConfig | None = None) -> tuple[float, bool]:
    """Beat period in seconds and a ``no_rhythm`` flag.

    The period maximises the envelope autocorrelation weighted by a
    log-Gaussian (``sigma_octaves`` wide) centred on ``60 / bias_bpm``. When the
    envelope carries no periodicity the bias period is returned and flagged.
    """
    cfg = config or BeatConfig()
    if not 30.0 <= bias_bpm <= 300.0:
        raise ValueError(f"bias_bpm must lie in [30, 300], got {bias_bpm}")
    bias_period = 60.0 / bias_bpm
    values = env.values
    if values.size == 0:
        raise ValueError("empty onset envelope")
    if not np.any(values > 0):
        return bias_period, True

    hop = env.frame_hop
    lo = max(1, math.ceil(cfg.min_period / hop))
    hi = min(math.floor(cfg.max_period / hop), values.size - 1)
    if hi < lo:
        return bias_period, True
    centered = values - values.mean()
    acf = correlate(centered, centered, mode="full", method="fft")[values.size - 1 :]
    lags = np.arange(lo, hi + 1)
    weight = np.exp(-0.5 * (np.log2(lags * hop / bias_period) / cfg.sigma_octaves) ** 2)
    score = acf[lags] * weight
    k = int(np.argmax(score))
    if score[k] <= 0:
        return bias_period, True

    lag = float(lags[k])
    if 0 < k < score.size - 1:
        y0, y1, y2 = score[k - 1], score[k], score[k + 1]
        denom = y0 - 2 * y1 + y2
        if denom < 0:
            lag += 0.5 * (y0 - y2) / denom
    return float(np.clip(lag * hop, cfg.min_period, cfg.max_period)), False


def _even_beats(env: OnsetEnvelope, period: float) -> np.ndarray:
    last = env.frame_offset + (env.values.size - 1) * env.frame_hop
    count = int(math.floor((last - env.frame_offset) / period + 1e-9)) + 1
    return env.frame_offset + period * np.arange(count)


def _local_maxima(x: np.ndarray) -> np.ndarray:
    padded = np.pad(x, 1, mode="edge")
    return (x > padded[:-2]) & (x >= padded[2:])


def track_beats(
    env: OnsetEnvelope,
    period: float,
    bias_bpm: float | None = None,
    tightness: float = 100.0,
    no_rhythm: bool = False,
) -> BeatTrack:
    """Place beats by dynamic programming over the onset envelope.

    Maximises the summed (smoothed, normalised) onset strength at the beats
    minus ``tightness * log(spacing / period)**2`` per interval, with spacings
    restricted to ``[period / 2, 2 * period]``. A flagged or all-zero envelope
    yields beats exactly ``period`` apart.
    """
    bias = 60.0 / period if bias_bpm is None else bias_bpm
    values = env.values
    if values.size == 0:
        raise ValueError("empty onset envelope")
    if no_rhythm or not np.any(values > 0):
        return BeatTrack(_even_beats(env, period), bias, period, True)

    fpb = period / env.frame_hop
    std = values.std()
    norm = values / std if std > 0 else values / values.max()
    half = int(round(fpb))
    kernel = np.exp(-0.5 * (np.arange(-half, half + 1) * 32.0 / fpb) ** 2)
    local = np.convolve(norm, kernel, mode="same")

    n = local.size
    near = max(1, int(round(fpb / 2)))
    far = max(near, int(round(2 * fpb)))
    spacing = np.arange(far, near - 1, -1)  # spacing for predecessors in ascending frame order
    penalty = tightness * np.log(spacing / fpb) ** 2

    cumscore = np.zeros(n)
    backlink = np.full(n, -1, dtype=np.int64)
    threshold = 0.01 * local.max()
    first_beat = True
    for i in range(n):
        start = i - far
        stop = i - near + 1
        loc = -1
        if stop > 0:
            offset = max(0, -start)
            candidates = cumscore[max(0, start) : stop] - penalty[offset:]
            k = int(np.argmax(candidates))
            loc = max(0, start) + k
            cumscore[i] = local[i] + candidates[k]
        else:
            cumscore[i] = local[i]
        if first_beat and local[i] < threshold:
            backlink[i] = -1
        else:
            backlink[i] = loc
            first_beat = False

    maxima = _local_maxima(cumscore)
    if np.any(maxima):
        cutoff = 0.5 * np.median(cumscore[maxima])
        eligible = np.flatnonzero(maxima & (cumscore >= cutoff))
        last = int(eligible[-1]) if eligible.size else n - 1
    else:
        last = n - 1

    frames = [last]
    while backlink[frames[-1]] >= 0:
        frames.append(int(backlink[frames[-1]]))
    frames = np.array(frames[::-1])

    # drop weak leading and trailing beats
    smooth = np.convolve(local[frames], np.hanning(5), mode="same")
    threshold = 0.5 * np.sqrt(np.mean(smooth**2))
    strong = np.flatnonzero(smooth > threshold)
    if strong.size >= 2:
        frames = frames[strong[0] : strong[-1] + 1]

    return BeatTrack(env.frame_offset + frames * env.frame_hop, bias, period, False)


def beat_track(signal: AudioSignal, bias_bpm: float, config: BeatConfig | None = None, env: OnsetEnvelope | None = None) -> BeatTrack:
    """Onset envelope, biased tempo estimate and dynamic-programming beats in one call."""
    cfg = config or BeatConfig()
    if env is None:
        env = onset_envelope(signal, cfg.frame_len, cfg.frame_hop, cfg)
    period, flagged = estimate_tempo(env, bias_bpm, cfg)
    return track_beats(env, period, bias_bpm, cfg.tightness, flagged)
