"""Command-line front end: ``score``, ``benchmark``, ``synth-corpus`` and ``dump``.

Exit codes: 0 success, 1 usage, 2 audio I/O, 3 degenerate input, 4 manifest.
Machine-readable output goes to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .align import smith_waterman_constrained
from .audio_io import load_audio, write_wav
from .embed import blocks_from_positions, pca3_project
from .errors import AudioError, DegenerateInputError, ManifestError, SongTooShortError
from .pipeline import (
    FeatureCache,
    PipelineConfig,
    SongFeatures,
    analyze_many,
    analyze_song,
    benchmark,
    extract_many,
    features_from_analysis,
    format_sweep_table,
    parameter_sweep,
    score_combinations,
    validate_truth,
)
from .shape import block_ssm
from .simmatch import binarize_mutual_knn, compute_csm
from .synth import make_corpus, render_song

log = logging.getLogger("timbreshape")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DEGENERATE, EXIT_MANIFEST = 0, 1, 2, 3, 4
DUMP_KINDS = ("beats", "pca", "ssm", "csm", "sw")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_shared(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pipeline settings (override --config)")
    g.add_argument("--kappa", type=float, help="mutual nearest-neighbour fraction (default 0.1)")
    g.add_argument("--beats", type=int, help="beat intervals per block, B (default 14)")
    g.add_argument("--dim", type=int, help="SSM image size d (default 200)")
    g.add_argument("--biases", type=str, help="comma-separated tempo biases in BPM (default 60,120,180)")
    g.add_argument("--sample-rate", type=int, help="working sample rate in Hz (default 22050)")
    g.add_argument("--config", type=Path, help="TOML file with pipeline settings")
    g.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    g.add_argument("--cache-dir", type=Path, help="directory for cached song features")
    g.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="timbreshape", description="Cover song scoring from timbral shape sequences.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("score", help="score two recordings")
    p.add_argument("song_a", type=Path)
    p.add_argument("song_b", type=Path)
    _add_shared(p)

    p = sub.add_parser("benchmark", help="rank set B against every query in set A")
    p.add_argument("list_a", type=Path, help="text file with one audio path per line")
    p.add_argument("list_b", type=Path)
    p.add_argument("truth", type=Path, help="JSON list: truth[i] is the index in B of A[i]'s cover")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory (default .)")
    p.add_argument("--sweep", action="store_true", help="run the full kappa x B x d parameter grid")
    _add_shared(p)

    p = sub.add_parser("synth-corpus", help="render a seeded synthetic cover corpus")
    p.add_argument("out", type=Path)
    p.add_argument("--songs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample-rate", type=int, default=22050)

    p = sub.add_parser("dump", help="write diagnostic tables and images")
    p.add_argument("what", choices=DUMP_KINDS)
    p.add_argument("song", type=Path)
    p.add_argument("song_b", type=Path, nargs="?", help="second song (csm and sw)")
    p.add_argument("--block", type=int, help="block index (pca, ssm); ssm dumps every block when omitted")
    p.add_argument("--bias", type=float, help="tempo bias to dump; defaults to the first usable one")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory (default .)")
    _add_shared(p)
    return parser


def _parse_biases(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise UsageError(f"--biases expects comma-separated numbers, got {text!r}") from None


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    """Defaults, then the config file, then command-line flags."""
    data = PipelineConfig().to_dict()
    if args.config is not None:
        try:
            with open(args.config, "rb") as fh:
                loaded = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        for key, value in loaded.items():
            if isinstance(value, dict) and isinstance(data.get(key), dict):
                data[key] = {**data[key], **value}
            else:
                data[key] = value
    flags = {
        "kappa": args.kappa,
        "beats_per_block": args.beats,
        "ssm_dim": args.dim,
        "tempo_biases": _parse_biases(args.biases) if args.biases is not None else None,
        "sample_rate": args.sample_rate,
    }
    data.update({k: v for k, v in flags.items() if v is not None})
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    try:
        return PipelineConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None


def _features(paths: Sequence[Path], cfg: PipelineConfig, jobs: int, cache_dir: Path | None) -> list[SongFeatures]:
    cache = FeatureCache(cache_dir) if cache_dir is not None else None
    feats: list[SongFeatures | None] = [None] * len(paths)
    if cache is not None:
        for i, p in enumerate(paths):
            if Path(p).exists():
                feats[i] = cache.load(p, cfg)
    todo = [i for i, f in enumerate(feats) if f is None]
    signals = [load_audio(paths[i]) for i in todo]
    for i, f in zip(todo, extract_many(signals, cfg, jobs)):
        feats[i] = f
        if cache is not None:
            cache.store(paths[i], cfg, f)
    return feats


def _emit_json(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_score(args, cfg: PipelineConfig) -> int:
    fa, fb = _features([args.song_a, args.song_b], cfg, args.jobs, args.cache_dir)
    combos = score_combinations(fa, fb, cfg)
    _emit_json(
        {
            "scoreAB": max(combos.values()),
            "combinations": [{"bias_a": a, "bias_b": b, "score": s} for (a, b), s in sorted(combos.items())],
            "config": cfg.to_dict(),
        }
    )
    return EXIT_OK


def read_song_list(path: Path) -> list[Path]:
    """Audio paths, one per line, relative to the list file; blank lines and ``#`` comments ignored."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ManifestError(f"cannot read song list {path}: {exc}") from None
    base = Path(path).parent
    entries = [ln.strip() for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]
    return [p if p.is_absolute() else base / p for p in map(Path, entries)]


def read_truth(path: Path) -> list[int]:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ManifestError(f"cannot read ground truth {path}: {exc}") from None
    if isinstance(data, dict):
        data = data.get("truth")
    if not isinstance(data, list) or not all(isinstance(x, int) for x in data):
        raise ManifestError("ground truth must be a JSON list of integers")
    return data


def _write_matrix_csv(path: Path, matrix: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in np.atleast_2d(matrix):
            writer.writerow([repr(float(v)) for v in row])


def cmd_benchmark(args, cfg: PipelineConfig) -> int:
    list_a, list_b = read_song_list(args.list_a), read_song_list(args.list_b)
    truth = validate_truth(read_truth(args.truth), len(list_a), len(list_b))
    args.out.mkdir(parents=True, exist_ok=True)
    if args.sweep:
        signals_a = [load_audio(p) for p in list_a]
        signals_b = [load_audio(p) for p in list_b]
        results = parameter_sweep(analyze_many(signals_a, cfg, args.jobs), analyze_many(signals_b, cfg, args.jobs), truth, cfg)
        cells = [
            {"kappa": k, "B": B, "d": d, "correct": r.correct, "total": r.total, "mean_rank": r.mean_rank}
            for (k, B, d), r in sorted(results.items())
        ]
        (args.out / "sweep.json").write_text(json.dumps({"cells": cells}, indent=2, sort_keys=True) + "\n")
        table = format_sweep_table(results)
        (args.out / "sweep.txt").write_text(table)
        sys.stdout.write(table)
        return EXIT_OK
    fa = _features(list_a, cfg, args.jobs, args.cache_dir)
    fb = _features(list_b, cfg, args.jobs, args.cache_dir)
    report = benchmark(fa, fb, truth, cfg, jobs=args.jobs)
    _write_matrix_csv(args.out / "scores.csv", report.scores)
    payload = report.to_dict()
    payload["config"] = cfg.to_dict()
    (args.out / "report.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    sys.stdout.write(f"{report.correct}/{report.total}\n")
    for q in payload["queries"]:
        if q["tie"]:
            log.warning("query %d: tied top score, picked smaller index %d", q["query"], q["predicted"])
    return EXIT_OK


def cmd_synth_corpus(args) -> int:
    if args.songs < 2:
        raise UsageError("--songs must be at least 2")
    corpus = make_corpus(args.songs, seed=args.seed)
    for sub in ("a", "b"):
        (args.out / sub).mkdir(parents=True, exist_ok=True)
    files_a = [Path("a") / f"song_{i:03d}.wav" for i in range(args.songs)]
    files_b = [Path("b") / f"song_{i:03d}.wav" for i in range(args.songs)]
    for specs, seeds, files in ((corpus.set_a, corpus.seeds_a, files_a), (corpus.set_b, corpus.seeds_b, files_b)):
        for spec, seed, f in zip(specs, seeds, files):
            write_wav(args.out / f, render_song(spec, args.sample_rate, seed))
    (args.out / "set_a.txt").write_text("".join(f"{f.as_posix()}\n" for f in files_a))
    (args.out / "set_b.txt").write_text("".join(f"{f.as_posix()}\n" for f in files_b))
    (args.out / "truth.json").write_text(json.dumps(corpus.truth) + "\n")
    (args.out / "manifest.json").write_text(
        corpus.manifest([f.as_posix() for f in files_a], [f.as_posix() for f in files_b]) + "\n"
    )
    sys.stdout.write(f"{args.songs} pairs written to {args.out}\n")
    return EXIT_OK


def write_pgm(path: Path, image: np.ndarray, value_range: tuple[float, float] | None = None) -> None:
    """Binary greyscale PGM; values map linearly from ``value_range`` (default [min, max]) to [0, 255]."""
    image = np.asarray(image, dtype=np.float64)
    lo, hi = value_range if value_range is not None else (float(image.min()), float(image.max()))
    scaled = np.zeros(image.shape) if hi == lo else (image - lo) / (hi - lo) * 255.0
    pixels = np.clip(np.round(scaled), 0, 255).astype(np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def _pick_bias(feats: SongFeatures, requested: float | None) -> float:
    if requested is not None:
        if requested not in feats.biases:
            raise UsageError(f"--bias {requested:g} is not one of the configured biases")
        if not feats.biases[requested].usable:
            raise SongTooShortError(f"bias {requested:g} has no usable blocks")
        return requested
    return feats.usable()[0]


def cmd_dump(args, cfg: PipelineConfig) -> int:
    two_songs = args.what in ("csm", "sw")
    if two_songs and args.song_b is None:
        raise UsageError(f"dump {args.what} needs two songs")
    if not two_songs and args.song_b is not None:
        raise UsageError(f"dump {args.what} takes one song")
    args.out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    if args.what == "beats":
        signal = load_audio(args.song)
        analysis = analyze_song(signal, cfg)
        path = args.out / "beats.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["bias_bpm", "beat", "time_s"])
            for bias, ba in analysis.biases.items():
                for n, t in enumerate(ba.beats.beat_times):
                    writer.writerow([f"{bias:g}", n, f"{t:.6f}"])
        written.append(path)

    elif args.what in ("pca", "ssm"):
        analysis = analyze_song(load_audio(args.song), cfg)
        feats = features_from_analysis(analysis, cfg.beats_per_block, cfg.ssm_dim)
        if not feats.usable():
            raise SongTooShortError("song too short for a single block")
        bias = _pick_bias(feats, args.bias)
        ba = analysis.biases[bias]
        blocks = blocks_from_positions(ba.positions, cfg.beats_per_block)
        wanted = range(len(blocks)) if args.what == "ssm" and args.block is None else [args.block or 0]
        for b in wanted:
            if not 0 <= b < len(blocks):
                raise UsageError(f"--block {b} out of range (0..{len(blocks) - 1})")
            cloud = ba.grid.cloud(blocks[b])
            if args.what == "pca":
                path = args.out / f"pca_bias{bias:g}_block{b}.csv"
                with open(path, "w", newline="") as fh:
                    writer = csv.writer(fh, lineterminator="\n")
                    writer.writerow(["t_s", "pc1", "pc2", "pc3"])
                    for (start, _), row in zip(cloud.intervals, pca3_project(cloud)):
                        writer.writerow([f"{start / analysis.sample_rate:.6f}"] + [f"{v:.9g}" for v in row])
            else:
                path = args.out / f"ssm_bias{bias:g}_block{b}.pgm"
                write_pgm(path, block_ssm(cloud, cfg.ssm_dim), (0.0, 2.0))
            written.append(path)

    else:
        fa, fb = _features([args.song, args.song_b], cfg, args.jobs, args.cache_dir)
        combos = score_combinations(fa, fb, cfg)
        # the combination that decides the pair score; ties go to the first in sorted order
        bias_a, bias_b = max(sorted(combos), key=lambda c: combos[c])
        csm = compute_csm(fa.biases[bias_a].ssms, fb.biases[bias_b].ssms)
        stem = f"bias{bias_a:g}-{bias_b:g}"
        if args.what == "csm":
            binary = binarize_mutual_knn(csm, cfg.kappa)
            for name, matrix, rng in ((f"csm_{stem}", csm, None), (f"csm_binary_{stem}", binary, (0.0, 1.0))):
                write_pgm(args.out / f"{name}.pgm", matrix, rng)
                _write_matrix_csv(args.out / f"{name}.csv", matrix)
                written += [args.out / f"{name}.pgm", args.out / f"{name}.csv"]
        else:
            result = smith_waterman_constrained(binarize_mutual_knn(csm, cfg.kappa), return_table=True)
            write_pgm(args.out / f"sw_{stem}.pgm", result.table)
            _write_matrix_csv(args.out / f"sw_{stem}.csv", result.table)
            written += [args.out / f"sw_{stem}.pgm", args.out / f"sw_{stem}.csv"]
            sys.stdout.write(f"score: {result.score!r}\n")

    for path in written:
        log.info("wrote %s", path)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        if args.command == "synth-corpus":
            return cmd_synth_corpus(args)
        cfg = resolve_config(args)
        handler = {"score": cmd_score, "benchmark": cmd_benchmark, "dump": cmd_dump}[args.command]
        return handler(args, cfg)
    except UsageError as exc:
        print(f"timbreshape: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AudioError as exc:
        print(f"timbreshape: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DegenerateInputError as exc:
        print(f"timbreshape: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except ManifestError as exc:
        print(f"timbreshape: manifest error: {exc}", file=sys.stderr)
        return EXIT_MANIFEST


if __name__ == "__main__":
    sys.exit(main())
