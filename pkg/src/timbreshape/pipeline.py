"""End-to-end cover scoring: features per tempo bias, pairwise scores, benchmark protocol.

Feature extraction is split in two stages. ``analyze_song`` does everything
that does not depend on the block length or image size (beat tracking and
the sliding-window MFCC grid per bias). ``features_from_analysis`` then cuts
blocks and renders SSM images for one ``(B, d)``. Parameter sweeps reuse one
analysis per song across the grid.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .align import normalized_score, smith_waterman_constrained
from .audio_io import CANONICAL_RATE, AudioSignal, resample
from .beat import BeatConfig, BeatTrack, onset_envelope, estimate_tempo, track_beats
from .embed import (
    HOPS_PER_WINDOW,
    MfccConfig,
    MfccGrid,
    blocks_from_positions,
    mfcc_grid,
    snap_to_grid,
    window_geometry,
)
from .errors import ManifestError, SongTooShortError
from .shape import block_ssms
from .simmatch import binarize_mutual_knn, compute_csm

log = logging.getLogger(__name__)

SWEEP_KAPPAS = (0.05, 0.1, 0.15)
SWEEP_BEATS = (8, 10, 12, 14)
SWEEP_DIMS = (100, 200, 300)


@dataclass(frozen=True)
class PipelineConfig:
    kappa: float = 0.1
    beats_per_block: int = 14
    ssm_dim: int = 200
    tempo_biases: tuple[float, ...] = (60.0, 120.0, 180.0)
    sample_rate: int = CANONICAL_RATE
    mfcc: MfccConfig = field(default_factory=MfccConfig)
    beat: BeatConfig = field(default_factory=BeatConfig)
    hops_per_window: int = HOPS_PER_WINDOW
    normalize_score: bool = False

    def __post_init__(self):
        object.__setattr__(self, "tempo_biases", tuple(float(b) for b in self.tempo_biases))
        if not 0 < self.kappa <= 1:
            raise ValueError(f"kappa must lie in (0, 1], got {self.kappa}")
        if self.beats_per_block < 1:
            raise ValueError("beats_per_block must be at least 1")
        if self.ssm_dim < 2:
            raise ValueError("ssm_dim must be at least 2")
        if not self.tempo_biases or any(not 30 <= b <= 300 for b in self.tempo_biases):
            raise ValueError("tempo_biases must be a non-empty list of BPM values in [30, 300]")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["tempo_biases"] = list(self.tempo_biases)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        kwargs = dict(data)
        if "mfcc" in kwargs and isinstance(kwargs["mfcc"], dict):
            kwargs["mfcc"] = MfccConfig(**kwargs["mfcc"])
        if "beat" in kwargs and isinstance(kwargs["beat"], dict):
            kwargs["beat"] = BeatConfig(**kwargs["beat"])
        if "tempo_biases" in kwargs:
            kwargs["tempo_biases"] = tuple(kwargs["tempo_biases"])
        return cls(**kwargs)

    def analysis_hash(self) -> str:
        """Digest of the settings that shape beats and MFCC grids."""
        keys = ("tempo_biases", "sample_rate", "mfcc", "beat", "hops_per_window")
        payload = {k: v for k, v in self.to_dict().items() if k in keys}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()

    def feature_hash(self) -> str:
        """Digest of every setting that changes extracted features (not kappa)."""
        payload = {"analysis": self.analysis_hash(), "B": self.beats_per_block, "d": self.ssm_dim}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


@dataclass(eq=False)
class BiasAnalysis:
    beats: BeatTrack
    positions: np.ndarray  # beat sample positions snapped to the grid
    grid: MfccGrid


@dataclass(eq=False)
class SongAnalysis:
    biases: dict[float, BiasAnalysis]
    n_samples: int
    sample_rate: int


def analyze_song(signal: AudioSignal, cfg: PipelineConfig | None = None) -> SongAnalysis:
    """Beat tracking and the MFCC hop grid for every tempo bias."""
    cfg = cfg or PipelineConfig()
    signal = resample(signal, cfg.sample_rate)
    env = onset_envelope(signal, cfg.beat.frame_len, cfg.beat.frame_hop, cfg.beat)
    grids: dict[tuple[int, int, int], MfccGrid] = {}
    biases = {}
    for bias in cfg.tempo_biases:
        period, flagged = estimate_tempo(env, bias, cfg.beat)
        beats = track_beats(env, period, bias, cfg.beat.tightness, flagged)
        window, hop = window_geometry(beats.mean_period, signal.sample_rate, cfg.hops_per_window)
        raw = np.round(beats.beat_times * signal.sample_rate).astype(np.int64)
        positions = snap_to_grid(raw, hop, len(signal))
        origin = int(positions[0]) if positions.size else 0
        key = (origin, window, hop)
        if key not in grids:
            grids[key] = mfcc_grid(signal, origin, window, hop, cfg.mfcc)
        biases[bias] = BiasAnalysis(beats, positions, grids[key])
        log.debug("bias %g: period %.3fs, %d beats, W=%d H=%d", bias, period, beats.beat_times.size, window, hop)
    return SongAnalysis(biases, len(signal), signal.sample_rate)


@dataclass(eq=False)
class BiasFeatures:
    beats: BeatTrack
    ssms: np.ndarray  # (n_blocks, d, d) float32
    kept: list[int]
    skipped: list[int]
    n_blocks: int

    @property
    def usable(self) -> bool:
        return self.ssms.shape[0] > 0


@dataclass(eq=False)
class SongFeatures:
    biases: dict[float, BiasFeatures]

    def usable(self) -> list[float]:
        return [b for b, f in self.biases.items() if f.usable]

    @property
    def max_blocks(self) -> int:
        return max((f.ssms.shape[0] for f in self.biases.values()), default=0)


def features_from_analysis(analysis: SongAnalysis, B: int, d: int) -> SongFeatures:
    """Cut ``B``-interval blocks and render their ``d x d`` SSM images for every bias.

    Biases with fewer than ``B`` intervals are kept but marked unusable.
    Biases that tracked identical beats share one image array.
    """
    shared: dict[tuple, BiasFeatures] = {}
    out = {}
    for bias, ba in analysis.biases.items():
        key = (ba.grid.origin, ba.grid.window, ba.grid.hop, ba.positions.tobytes())
        if key in shared:
            src = shared[key]
            out[bias] = BiasFeatures(ba.beats, src.ssms, src.kept, src.skipped, src.n_blocks)
            continue
        if ba.positions.size - 1 < B:
            feats = BiasFeatures(ba.beats, np.zeros((0, d, d), np.float32), [], [], 0)
        else:
            blocks = blocks_from_positions(ba.positions, B)
            clouds = [ba.grid.cloud(b) if b.t2 - b.t1 >= ba.grid.window else None for b in blocks]
            images = block_ssms(clouds, d)
            feats = BiasFeatures(ba.beats, images.images, images.kept, images.skipped, len(blocks))
        shared[key] = feats
        out[bias] = feats
    return SongFeatures(out)


def extract_features(signal: AudioSignal, cfg: PipelineConfig | None = None) -> SongFeatures:
    """Beat-synchronous SSM images for every tempo bias of one song.

    Raises ``SongTooShortError`` when no bias yields a usable block.
    """
    cfg = cfg or PipelineConfig()
    feats = features_from_analysis(analyze_song(signal, cfg), cfg.beats_per_block, cfg.ssm_dim)
    if not feats.usable():
        raise SongTooShortError(
            f"song too short: no tempo bias yields {cfg.beats_per_block} beat intervals with usable blocks"
        )
    return feats


def _combination_csms(a: SongFeatures, b: SongFeatures):
    memo: dict[tuple[int, int], np.ndarray] = {}
    for ba in a.usable():
        for bb in b.usable():
            ia, ib = a.biases[ba].ssms, b.biases[bb].ssms
            key = (id(ia), id(ib))
            if key not in memo:
                memo[key] = compute_csm(ia, ib)
            yield (ba, bb), memo[key]


def _score_csm(csm: np.ndarray, kappa: float, normalize: bool) -> float:
    score = smith_waterman_constrained(binarize_mutual_knn(csm, kappa)).score
    return normalized_score(score, *csm.shape) if normalize else score


def score_combinations(a: SongFeatures, b: SongFeatures, cfg: PipelineConfig | None = None) -> dict[tuple[float, float], float]:
    """Alignment score for every pair of usable tempo biases (up to 9)."""
    cfg = cfg or PipelineConfig()
    scores = {combo: _score_csm(csm, cfg.kappa, cfg.normalize_score) for combo, csm in _combination_csms(a, b)}
    if not scores:
        raise SongTooShortError("no usable tempo bias pair")
    return scores


def score_pair(a: SongFeatures, b: SongFeatures, cfg: PipelineConfig | None = None) -> float:
    """Best score over all tempo-bias combinations."""
    return max(score_combinations(a, b, cfg).values())


def _pair_score_or_zero(a: SongFeatures, b: SongFeatures, cfg: PipelineConfig) -> float:
    if not a.usable() or not b.usable():
        return 0.0
    return score_pair(a, b, cfg)


def validate_truth(truth: Sequence[int], n_a: int, n_b: int) -> list[int]:
    if n_a == 0 or n_b == 0:
        raise ManifestError("empty song set")
    if n_a != n_b:
        raise ManifestError(f"set sizes differ: {n_a} vs {n_b}")
    truth = [int(t) for t in truth]
    if len(truth) != n_a or sorted(truth) != list(range(n_b)):
        raise ManifestError("ground truth must be a bijection between the two sets")
    return truth


@dataclass
class BenchmarkReport:
    scores: np.ndarray
    truth: list[int]
    predicted: list[int] = field(init=False)
    ranks: list[int] = field(init=False)
    tied: list[bool] = field(init=False)

    def __post_init__(self):
        self.predicted, self.ranks, self.tied = [], [], []
        for i, row in enumerate(self.scores):
            # order by score descending, then index ascending
            order = sorted(range(row.size), key=lambda j: (-row[j], j))
            self.predicted.append(order[0])
            self.ranks.append(order.index(self.truth[i]) + 1)
            self.tied.append(bool(np.sum(row == row[order[0]]) > 1))

    @property
    def correct(self) -> int:
        return sum(p == t for p, t in zip(self.predicted, self.truth))

    @property
    def total(self) -> int:
        return len(self.truth)

    @property
    def mean_rank(self) -> float:
        return float(np.mean(self.ranks))

    def to_dict(self) -> dict:
        return {
            "correct": self.correct,
            "total": self.total,
            "mean_rank": self.mean_rank,
            "queries": [
                {
                    "query": i,
                    "predicted": self.predicted[i],
                    "true": self.truth[i],
                    "rank": self.ranks[i],
                    "score": float(self.scores[i, self.predicted[i]]),
                    "true_score": float(self.scores[i, self.truth[i]]),
                    "tie": self.tied[i],
                }
                for i in range(self.total)
            ],
        }


_WORKER_STATE: dict = {}


def _init_worker(features_a, features_b, cfg):
    _WORKER_STATE.update(a=features_a, b=features_b, cfg=cfg)


def _score_row(i: int) -> list[float]:
    a, b, cfg = _WORKER_STATE["a"], _WORKER_STATE["b"], _WORKER_STATE["cfg"]
    return [_pair_score_or_zero(a[i], fb, cfg) for fb in b]


def score_matrix(features_a: Sequence[SongFeatures], features_b: Sequence[SongFeatures], cfg: PipelineConfig, jobs: int = 1) -> np.ndarray:
    """Scores of every song in A against every song in B; songs without usable biases score 0."""
    if jobs > 1:
        with ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=(list(features_a), list(features_b), cfg)) as ex:
            rows = list(ex.map(_score_row, range(len(features_a))))
    else:
        rows = [[_pair_score_or_zero(fa, fb, cfg) for fb in features_b] for fa in features_a]
    return np.array(rows, dtype=np.float64).reshape(len(features_a), len(features_b))


def benchmark(
    features_a: Sequence[SongFeatures],
    features_b: Sequence[SongFeatures],
    truth: Sequence[int],
    cfg: PipelineConfig | None = None,
    jobs: int = 1,
) -> BenchmarkReport:
    """Rank every song of B for each query in A; the top-scoring song is the predicted cover."""
    cfg = cfg or PipelineConfig()
    truth = validate_truth(truth, len(features_a), len(features_b))
    return BenchmarkReport(score_matrix(features_a, features_b, cfg, jobs), truth)


def _analyze_one(args):
    signal, cfg = args
    return analyze_song(signal, cfg)


def analyze_many(signals: Sequence[AudioSignal], cfg: PipelineConfig, jobs: int = 1) -> list[SongAnalysis]:
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            return list(ex.map(_analyze_one, [(s, cfg) for s in signals]))
    return [analyze_song(s, cfg) for s in signals]


def _extract_one(args):
    signal, cfg = args
    return extract_features(signal, cfg)


def extract_many(signals: Sequence[AudioSignal], cfg: PipelineConfig, jobs: int = 1) -> list[SongFeatures]:
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            return list(ex.map(_extract_one, [(s, cfg) for s in signals]))
    return [extract_features(s, cfg) for s in signals]


def parameter_sweep(
    analyses_a: Sequence[SongAnalysis],
    analyses_b: Sequence[SongAnalysis],
    truth: Sequence[int],
    cfg: PipelineConfig | None = None,
    kappas: Sequence[float] = SWEEP_KAPPAS,
    beats: Sequence[int] = SWEEP_BEATS,
    dims: Sequence[int] = SWEEP_DIMS,
) -> dict[tuple[float, int, int], BenchmarkReport]:
    """Benchmark every ``(kappa, B, d)`` grid point.

    Each cross-similarity matrix is computed once per ``(B, d)`` and binarised
    at every ``kappa``.
    """
    cfg = cfg or PipelineConfig()
    truth = validate_truth(truth, len(analyses_a), len(analyses_b))
    results = {}
    for B in beats:
        for d in dims:
            fa = [features_from_analysis(x, B, d) for x in analyses_a]
            fb = [features_from_analysis(x, B, d) for x in analyses_b]
            scores = {k: np.zeros((len(fa), len(fb))) for k in kappas}
            for i, a in enumerate(fa):
                for j, b in enumerate(fb):
                    for _, csm in _combination_csms(a, b):
                        for k in kappas:
                            scores[k][i, j] = max(scores[k][i, j], _score_csm(csm, k, cfg.normalize_score))
            for k in kappas:
                results[(k, B, d)] = BenchmarkReport(scores[k], truth)
            log.info("sweep B=%d d=%d: %s", B, d, {k: results[(k, B, d)].correct for k in kappas})
    return results


def format_sweep_table(results: dict[tuple[float, int, int], BenchmarkReport]) -> str:
    """Correct-count table: one header row per kappa, one row per d, one column per B."""
    kappas = sorted({k for k, _, _ in results})
    beats = sorted({b for _, b, _ in results})
    dims = sorted({d for _, _, d in results})
    lines = []
    for k in kappas:
        lines.append(" | ".join([f"Kappa = {k:g}"] + [f"B = {b}" for b in beats]))
        for d in dims:
            lines.append(" | ".join([f"d = {d}"] + [str(results[(k, b, d)].correct) for b in beats]))
    return "\n".join(lines) + "\n"


CACHE_FORMAT = "timbreshape-features/1"


class FeatureCache:
    """On-disk store of ``SongFeatures`` keyed by audio file digest and feature settings."""

    def __init__(self, directory: str | os.PathLike):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def file_digest(path: str | os.PathLike) -> str:
        h = hashlib.sha256()
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
        return h.hexdigest()

    def path_for(self, audio_path: str | os.PathLike, cfg: PipelineConfig) -> Path:
        return self.directory / f"{self.file_digest(audio_path)[:24]}-{cfg.feature_hash()[:16]}.npz"

    def load(self, audio_path, cfg: PipelineConfig) -> SongFeatures | None:
        path = self.path_for(audio_path, cfg)
        if not path.exists():
            return None
        try:
            return load_features(path, cfg)
        except (ValueError, KeyError, OSError) as exc:
            log.warning("ignoring unreadable cache entry %s: %s", path, exc)
            return None

    def store(self, audio_path, cfg: PipelineConfig, feats: SongFeatures) -> Path:
        path = self.path_for(audio_path, cfg)
        save_features(path, feats, cfg)
        return path


def save_features(path: str | os.PathLike, feats: SongFeatures, cfg: PipelineConfig) -> None:
    arrays = {}
    entries = []
    for n, (bias, bf) in enumerate(feats.biases.items()):
        arrays[f"beats_{n}"] = bf.beats.beat_times
        arrays[f"ssms_{n}"] = bf.ssms
        arrays[f"kept_{n}"] = np.asarray(bf.kept, dtype=np.int64)
        arrays[f"skipped_{n}"] = np.asarray(bf.skipped, dtype=np.int64)
        entries.append(
            {"bias": bias, "period": bf.beats.period, "no_rhythm": bf.beats.no_rhythm, "n_blocks": bf.n_blocks}
        )
    meta = {"format": CACHE_FORMAT, "version": __version__, "config_hash": cfg.feature_hash(), "biases": entries}
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_features(path: str | os.PathLike, cfg: PipelineConfig) -> SongFeatures:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("format") != CACHE_FORMAT:
            raise ValueError(f"unsupported cache format {meta.get('format')!r}")
        if meta.get("config_hash") != cfg.feature_hash():
            raise ValueError("cache entry was built with different settings")
        biases = {}
        for n, entry in enumerate(meta["biases"]):
            beats = BeatTrack(data[f"beats_{n}"], entry["bias"], entry["period"], entry["no_rhythm"])
            biases[float(entry["bias"])] = BiasFeatures(
                beats,
                data[f"ssms_{n}"],
                data[f"kept_{n}"].tolist(),
                data[f"skipped_{n}"].tolist(),
                entry["n_blocks"],
            )
    return SongFeatures(biases)
