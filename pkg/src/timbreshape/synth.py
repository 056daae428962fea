"""Synthetic audio with known ground truth: click tracks, tone songs and covers.

Songs are sequences of sections. Every beat re-attacks a gated chord in the
song's timbre, and a per-section rhythm mask decides which beats also carry a
short noise click. Covers keep the section structure and rhythm masks while
changing tempo, key, timbre and level.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .audio_io import CANONICAL_RATE, AudioSignal

TIMBRES = ("sine", "sawtooth", "square", "noise")
CLICK_SECONDS = 0.005
CLICK_DECAY = 0.001


@dataclass(frozen=True)
class Section:
    beats: int
    chord: tuple[float, ...]
    rhythm: tuple[bool, ...]

    def __post_init__(self):
        object.__setattr__(self, "chord", tuple(float(f) for f in self.chord))
        object.__setattr__(self, "rhythm", tuple(bool(r) for r in self.rhythm))
        if self.beats < 1:
            raise ValueError("a section needs at least one beat")
        if not self.chord or min(self.chord) <= 0:
            raise ValueError("chord must hold positive frequencies")
        if not self.rhythm:
            raise ValueError("rhythm mask must be non-empty")


@dataclass(frozen=True)
class SongSpec:
    sections: tuple[Section, ...]
    tempo: float
    timbre: str = "sine"
    gain: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "sections", tuple(self.sections))
        if not 40.0 <= self.tempo <= 240.0:
            raise ValueError(f"tempo must lie in [40, 240] BPM, got {self.tempo}")
        if len(self.sections) < 2:
            raise ValueError("a song needs at least two sections")
        if self.timbre not in TIMBRES:
            raise ValueError(f"unknown timbre {self.timbre!r}; choose from {TIMBRES}")
        if self.gain <= 0:
            raise ValueError("gain must be positive")

    @property
    def total_beats(self) -> int:
        return sum(s.beats for s in self.sections)

    @property
    def duration(self) -> float:
        return self.total_beats * 60.0 / self.tempo

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SongSpec":
        sections = tuple(Section(s["beats"], tuple(s["chord"]), tuple(s["rhythm"])) for s in data["sections"])
        return cls(sections, data["tempo"], data.get("timbre", "sine"), data.get("gain", 1.0))


@dataclass(frozen=True)
class CoverTransform:
    tempo_factor: float = 1.0
    transpose_semitones: float = 0.0
    new_timbre: str | None = None
    new_gain: float | None = None
    prepend_intro_beats: int = 0


DEFAULT_COVER = CoverTransform(tempo_factor=1.25, transpose_semitones=3.0, new_timbre="sawtooth", new_gain=0.5)


def make_cover(spec: SongSpec, transform: CoverTransform) -> SongSpec:
    """Apply a cover transformation to a song description.

    An intro, when requested, repeats the first section's chord without clicks.
    Raises ``ValueError`` when the new tempo leaves [40, 240] BPM.
    """
    tempo = spec.tempo * transform.tempo_factor
    if not 40.0 <= tempo <= 240.0:
        raise ValueError(f"transformed tempo {tempo:.2f} BPM outside [40, 240]")
    ratio = 2.0 ** (transform.transpose_semitones / 12.0)
    sections = [replace(s, chord=tuple(f * ratio for f in s.chord)) for s in spec.sections]
    if transform.prepend_intro_beats > 0:
        intro = Section(transform.prepend_intro_beats, sections[0].chord, (False,))
        sections.insert(0, intro)
    return SongSpec(
        tuple(sections),
        tempo,
        transform.new_timbre or spec.timbre,
        spec.gain if transform.new_gain is None else transform.new_gain,
    )


def _click(rng: np.random.Generator, fs: int) -> np.ndarray:
    n = max(1, int(round(CLICK_SECONDS * fs)))
    t = np.arange(n) / fs
    return rng.uniform(-1.0, 1.0, n) * np.exp(-t / CLICK_DECAY)


def synth_click_track(bpm: float, duration: float, fs: int = CANONICAL_RATE, seed: int = 0) -> AudioSignal:
    """Short decaying noise bursts at ``k * 60 / bpm`` seconds on digital silence."""
    if not 30.0 <= bpm <= 300.0:
        raise ValueError(f"bpm must lie in [30, 300], got {bpm}")
    rng = np.random.default_rng(seed)
    out = np.zeros(int(round(duration * fs)))
    period = 60.0 / bpm
    k = 0
    while k * period < duration:
        start = int(round(k * period * fs))
        burst = _click(rng, fs)[: out.size - start]
        out[start : start + burst.size] += 0.9 * burst
        k += 1
    return AudioSignal(out, fs)


def _tone(freqs, n: int, fs: int, timbre: str, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(n) / fs
    nyquist = fs / 2.0
    out = np.zeros(n)
    for f in freqs:
        if timbre == "sine":
            out += np.sin(2 * np.pi * f * t)
        elif timbre in ("sawtooth", "square"):
            # additive synthesis keeps the waveform band-limited
            step = 2 if timbre == "square" else 1
            scale = 4 / np.pi if timbre == "square" else 2 / np.pi
            for h in range(1, int(nyquist // f) + 1, step):
                out += scale * np.sin(2 * np.pi * h * f * t) / h
        elif timbre == "noise":
            spec = np.fft.rfft(rng.standard_normal(n))
            bins = np.fft.rfftfreq(n, 1.0 / fs)
            spec[(bins < f * 2 ** (-1 / 12)) | (bins > f * 2 ** (1 / 12))] = 0.0
            burst = np.fft.irfft(spec, n)
            peak = np.max(np.abs(burst))
            out += burst / peak if peak > 0 else burst
    return out / len(freqs)


def _gate(n: int, fs: int) -> np.ndarray:
    env = np.ones(n)
    attack = min(n, int(0.005 * fs))
    env[:attack] = np.linspace(0.0, 1.0, attack, endpoint=False)
    release = int(0.25 * n)
    if release > 0:
        env[n - release :] *= 0.5 * (1 + np.cos(np.linspace(0.0, np.pi, release)))
    return env


def render_song(spec: SongSpec, fs: int = CANONICAL_RATE, seed: int = 0) -> AudioSignal:
    """Render a song description to audio; identical (spec, seed) give identical output."""
    rng = np.random.default_rng(seed)
    period = 60.0 / spec.tempo
    bounds = [int(round(k * period * fs)) for k in range(spec.total_beats + 1)]
    out = np.zeros(bounds[-1])
    beat = 0
    for section in spec.sections:
        for pos in range(section.beats):
            a, b = bounds[beat], bounds[beat + 1]
            out[a:b] += 0.5 * _tone(section.chord, b - a, fs, spec.timbre, rng) * _gate(b - a, fs)
            if section.rhythm[pos % len(section.rhythm)]:
                burst = _click(rng, fs)[: b - a]
                out[a : a + burst.size] += burst
            beat += 1
    peak = np.max(np.abs(out))
    if peak > 0:
        out *= 0.9 * spec.gain / peak
    return AudioSignal(out, fs)


def random_song_spec(
    rng: np.random.Generator,
    *,
    tempo_range: tuple[float, float] = (80.0, 140.0),
    n_section_types: int = 3,
    arrangement_length: int = 4,
    timbre: str = "sine",
) -> SongSpec:
    """Draw a song: a few section types arranged with repeats, e.g. A B A C."""
    types = []
    for _ in range(n_section_types):
        root = int(rng.integers(48, 65))
        third = 4 if rng.random() < 0.5 else 3
        notes = (root, root + third, root + 7)
        chord = tuple(round(440.0 * 2 ** ((m - 69) / 12), 3) for m in notes)
        length = int(rng.choice([4, 8]))
        rhythm = rng.random(length) < 0.5
        rhythm[int(rng.integers(length))] = True
        beats = int(rng.choice([8, 12, 16]))
        types.append(Section(beats, chord, tuple(bool(r) for r in rhythm)))
    order = [0, 1] + [int(rng.integers(n_section_types)) for _ in range(arrangement_length - 2)]
    if n_section_types > 2 and 2 not in order:
        order[-1] = 2
    tempo = round(float(rng.uniform(*tempo_range)), 1)
    return SongSpec(tuple(types[i] for i in order), tempo, timbre, 1.0)


@dataclass
class Corpus:
    """Originals in set A, covers in set B; ``truth[i]`` is the index in B of A[i]'s cover."""

    set_a: list[SongSpec]
    set_b: list[SongSpec]
    truth: list[int]
    seeds_a: list[int] = field(default_factory=list)
    seeds_b: list[int] = field(default_factory=list)

    def manifest(self, files_a=None, files_b=None) -> str:
        entries = {
            "set_a": [
                {"file": None if files_a is None else str(files_a[i]), "seed": self.seeds_a[i], "spec": s.to_dict()}
                for i, s in enumerate(self.set_a)
            ],
            "set_b": [
                {"file": None if files_b is None else str(files_b[i]), "seed": self.seeds_b[i], "spec": s.to_dict()}
                for i, s in enumerate(self.set_b)
            ],
            "truth": self.truth,
        }
        return json.dumps(entries, indent=2, sort_keys=True)


def make_corpus(
    n_songs: int,
    seed: int = 0,
    transform: CoverTransform = DEFAULT_COVER,
    shuffle: bool = True,
    min_beats: int = 0,
) -> Corpus:
    """Seeded corpus of ``n_songs`` originals and one cover each."""
    rng = np.random.default_rng(seed)
    originals = []
    while len(originals) < n_songs:
        spec = random_song_spec(rng)
        if spec.total_beats >= min_beats:
            originals.append(spec)
    covers = [make_cover(s, transform) for s in originals]
    perm = rng.permutation(n_songs) if shuffle else np.arange(n_songs)
    # B[perm[i]] = cover of A[i]
    set_b = [None] * n_songs
    for i, j in enumerate(perm):
        set_b[j] = covers[i]
    seeds = rng.integers(0, 2**31 - 1, size=2 * n_songs)
    return Corpus(originals, set_b, [int(j) for j in perm], [int(s) for s in seeds[:n_songs]], [int(s) for s in seeds[n_songs:]])
