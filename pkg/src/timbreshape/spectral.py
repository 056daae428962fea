"""Small spectral helpers shared by the onset envelope and the MFCC embedding."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.fft
from scipy.signal import get_window


def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=float) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=float) / 2595.0) - 1.0)


@lru_cache(maxsize=64)
def mel_filterbank(sample_rate: int, n_fft: int, n_mels: int, fmin: float, fmax: float) -> np.ndarray:
    """Triangular mel filters evaluated at the rfft bin frequencies.

    Returns an array of shape ``(n_mels, n_fft // 2 + 1)``. Triangle edges are
    placed on the continuous frequency axis, so narrow low-frequency filters
    never collapse onto a single rounded bin index.
    """
    if not 0 <= fmin < fmax <= sample_rate / 2:
        raise ValueError(f"need 0 <= fmin < fmax <= {sample_rate / 2}, got {fmin}, {fmax}")
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lower) / (center - lower)
    falling = (upper - freqs) / (upper - center)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    fb.setflags(write=False)
    return fb


@lru_cache(maxsize=64)
def hann(length: int) -> np.ndarray:
    w = get_window("hann", length)
    w.setflags(write=False)
    return w


def fft_size(length: int) -> int:
    return scipy.fft.next_fast_len(length, real=True)


def band_energies(frames: np.ndarray, sample_rate: int, n_mels: int, fmin: float, fmax: float) -> np.ndarray:
    """Mel band energies of Hann-weighted frames, one row per frame."""
    frames = np.atleast_2d(frames)
    length = frames.shape[1]
    n_fft = fft_size(length)
    spec = scipy.fft.rfft(frames * hann(length), n=n_fft, axis=1)
    power = spec.real**2
    power += spec.imag**2
    return power @ mel_filterbank(sample_rate, n_fft, n_mels, float(fmin), float(fmax)).T


def log_compress(energies: np.ndarray, floor: float, dynamic_range_db: float | None, axis=None) -> np.ndarray:
    """Natural log with an absolute floor and an optional floor relative to the peak.

    The relative floor keeps the compression covariant with gain: scaling the
    input by ``g`` shifts every output value by exactly ``2 log g``.
    """
    eff = floor
    if dynamic_range_db is not None:
        peak = np.max(energies, axis=axis, keepdims=True)
        eff = np.maximum(floor, peak * 10.0 ** (-dynamic_range_db / 10.0))
    return np.log(np.maximum(energies, eff))
