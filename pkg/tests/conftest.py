from __future__ import annotations

import time
import wave

import numpy as np
import pytest


def write_reference_wav(path, data: np.ndarray, rate: int, sampwidth: int = 2) -> None:
    """Independent PCM writer built on the standard library, for loader oracles.

    ``data`` is ``(n,)`` or ``(n, channels)`` of integer sample values.
    """
    data = np.asarray(data)
    channels = 1 if data.ndim == 1 else data.shape[1]
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(channels)
        wf.setsampwidth(sampwidth)
        wf.setframerate(rate)
        wf.writeframes(data.astype(f"<i{sampwidth}").tobytes())


class CorpusRun:
    """The seeded ten-pair corpus, rendered and analysed once per session."""

    def __init__(self, n_songs: int = 10, seed: int = 1):
        from timbreshape.pipeline import PipelineConfig, analyze_song
        from timbreshape.synth import make_corpus, render_song

        start = time.perf_counter()
        self.cfg = PipelineConfig()
        self.corpus = make_corpus(n_songs, seed=seed)
        c = self.corpus
        self.signals_a = [render_song(s, seed=sd) for s, sd in zip(c.set_a, c.seeds_a)]
        self.signals_b = [render_song(s, seed=sd) for s, sd in zip(c.set_b, c.seeds_b)]
        self.analyses_a = [analyze_song(s, self.cfg) for s in self.signals_a]
        self.analyses_b = [analyze_song(s, self.cfg) for s in self.signals_b]
        self.build_seconds = time.perf_counter() - start


@pytest.fixture(scope="session")
def corpus_run() -> CorpusRun:
    return CorpusRun()


ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, title: str, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
