"""Load WAV files into a canonical mono float signal and resample it."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import AudioError

CANONICAL_RATE = 22050


@dataclass(frozen=True, eq=False)
class AudioSignal:
    """Mono sample buffer with its sample rate.

    Samples are stored as a read-only float64 array.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64).reshape(-1)
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate}")
        if samples.size == 0:
            raise ValueError("audio signal is empty")
        if not np.all(np.isfinite(samples)):
            raise ValueError("audio signal contains non-finite samples")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def slice(self, start: int, stop: int) -> "AudioSignal":
        """The portion of the signal between sample indices ``start`` and ``stop``."""
        return AudioSignal(self.samples[start:stop], self.sample_rate)


def downmix(channels: np.ndarray) -> np.ndarray:
    """Average an ``(n_samples, n_channels)`` array down to one channel."""
    channels = np.asarray(channels, dtype=np.float64)
    if channels.ndim == 1:
        return channels
    if channels.shape[1] == 1:
        return channels[:, 0]
    if channels.shape[1] == 2:
        # written out so that swapping channels gives bit-identical output
        return (channels[:, 0] + channels[:, 1]) / 2.0
    raise AudioError(f"unsupported channel count {channels.shape[1]}")


def load_audio(path: str | os.PathLike) -> AudioSignal:
    """Read a PCM16 or float32 WAV file (mono or stereo) as a mono signal in [-1, 1]."""
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError as exc:
        raise AudioError(f"unreadable file {os.fspath(path)!r}: no such file") from exc
    except (OSError, ValueError, EOFError) as exc:
        raise AudioError(f"unreadable file {os.fspath(path)!r}: {exc}") from exc

    if data.ndim == 2 and data.shape[1] > 2:
        raise AudioError(f"unsupported channel count {data.shape[1]} in {os.fspath(path)!r}")
    if data.dtype == np.int16:
        scaled = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        scaled = np.clip(data.astype(np.float64), -1.0, 1.0)
    else:
        raise AudioError(f"unsupported codec/bit-depth ({data.dtype}) in {os.fspath(path)!r}")
    if scaled.shape[0] == 0:
        raise AudioError(f"zero-length audio in {os.fspath(path)!r}")
    mono = downmix(scaled)
    if not np.all(np.isfinite(mono)):
        raise AudioError(f"non-finite samples in {os.fspath(path)!r}")
    return AudioSignal(mono, int(rate))


def write_wav(path: str | os.PathLike, signal: AudioSignal, subtype: str = "pcm16") -> None:
    """Write a mono signal as a PCM16 or float32 WAV file."""
    clipped = np.clip(signal.samples, -1.0, 1.0)
    if subtype == "pcm16":
        # same scale the loader divides by, so PCM round trips are exact to one step
        data = np.clip(np.round(clipped * 32768.0), -32768, 32767).astype(np.int16)
    elif subtype == "float32":
        data = clipped.astype(np.float32)
    else:
        raise ValueError(f"unknown subtype {subtype!r}")
    wavfile.write(path, signal.sample_rate, data)


def resampled_length(n_samples: int, source_rate: int, target_rate: int) -> int:
    # round half up on the exact rational n * target / source
    return (2 * n_samples * target_rate + source_rate) // (2 * source_rate)


def resample(signal: AudioSignal, target_rate: int) -> AudioSignal:
    """Band-limited polyphase resampling to ``target_rate``.

    The output has ``round(len * target_rate / source_rate)`` samples.
    """
    if int(target_rate) != target_rate or target_rate <= 0:
        raise ValueError(f"target_rate must be a positive integer, got {target_rate}")
    target_rate = int(target_rate)
    if target_rate == signal.sample_rate:
        return signal
    g = math.gcd(target_rate, signal.sample_rate)
    up, down = target_rate // g, signal.sample_rate // g
    out = resample_poly(signal.samples, up, down)
    n_out = max(1, resampled_length(len(signal), signal.sample_rate, target_rate))
    if out.size >= n_out:
        out = out[:n_out]
    else:
        out = np.concatenate([out, np.zeros(n_out - out.size)])
    return AudioSignal(out, target_rate)
