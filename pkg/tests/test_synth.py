from __future__ import annotations

import numpy as np
import pytest

from timbreshape.synth import (
    DEFAULT_COVER,
    CoverTransform,
    Section,
    SongSpec,
    make_corpus,
    make_cover,
    random_song_spec,
    render_song,
    synth_click_track,
)

FS = 22050


def _spec(tempo=120.0, timbre="sine", beats=(16, 16)):
    sections = (
        Section(beats[0], (220.0, 277.18, 329.63), (True, False, True, False)),
        Section(beats[1], (196.0, 246.94), (True, True, False, False)),
    )
    return SongSpec(sections, tempo, timbre)


@pytest.mark.parametrize("bpm, count", [(120, 20), (60, 10)])
def test_click_count(bpm, count):
    x = synth_click_track(bpm, 10.0, FS).samples
    starts = np.flatnonzero((np.abs(x[1:]) > 0) & (x[:-1] == 0)) + 1
    starts = np.concatenate([[0] if x[0] != 0 else [], starts]).astype(int)
    assert len(starts) == count
    np.testing.assert_allclose(starts / FS, np.arange(count) * 60 / bpm, atol=1 / FS)


def test_click_peaks_within_1ms():
    x = synth_click_track(100, 6.0, FS, seed=2).samples
    for k in range(10):
        t = k * 0.6
        lo = int(round(t * FS))
        seg = np.abs(x[lo : lo + int(0.02 * FS)])
        assert abs(lo + np.argmax(seg) - t * FS) <= 0.001 * FS


def test_click_bpm_range():
    with pytest.raises(ValueError):
        synth_click_track(20, 5.0)


def test_render_is_deterministic_and_normalized():
    spec = _spec()
    a, b = render_song(spec, FS, seed=4), render_song(spec, FS, seed=4)
    np.testing.assert_array_equal(a.samples, b.samples)
    assert np.max(np.abs(a.samples)) == pytest.approx(0.9)
    quiet = render_song(SongSpec(spec.sections, spec.tempo, spec.timbre, 0.5), FS, seed=4)
    assert np.max(np.abs(quiet.samples)) == pytest.approx(0.45)


def test_render_duration():
    spec = _spec(beats=(16, 16))
    assert abs(render_song(spec, FS).duration - 16.0) <= 0.5


def test_sine_section_spectral_peaks_are_the_chord():
    spec = SongSpec(
        (Section(8, (220.0, 330.0, 440.0), (False,)), Section(8, (220.0, 330.0, 440.0), (False,))), 60.0, "sine"
    )
    x = render_song(spec, FS).samples
    n = x.size
    mag = np.abs(np.fft.rfft(x * np.hanning(n)))
    freqs = np.fft.rfftfreq(n, 1 / FS)
    peaks = [i for i in range(1, mag.size - 1) if mag[i] > mag[i - 1] and mag[i] >= mag[i + 1] and mag[i] > 0.2 * mag.max()]
    found = sorted(freqs[peaks])
    assert len(found) == 3
    np.testing.assert_allclose(found, [220, 330, 440], atol=2.0)


def test_cover_identity_and_arithmetic():
    spec = _spec()
    assert make_cover(spec, CoverTransform()) == spec
    cover = make_cover(spec, CoverTransform(tempo_factor=1.25))
    assert cover.tempo == 150.0
    octave = make_cover(spec, CoverTransform(transpose_semitones=12))
    for s0, s1 in zip(spec.sections, octave.sections):
        np.testing.assert_allclose(s1.chord, 2 * np.array(s0.chord))
        assert s1.rhythm == s0.rhythm and s1.beats == s0.beats


def test_cover_intro_and_tempo_range():
    spec = _spec()
    cover = make_cover(spec, CoverTransform(prepend_intro_beats=4))
    assert cover.sections[0].beats == 4 and cover.sections[1:] == spec.sections
    with pytest.raises(ValueError):
        make_cover(_spec(tempo=200.0), CoverTransform(tempo_factor=1.25))


def test_default_cover_transform():
    cover = make_cover(_spec(), DEFAULT_COVER)
    assert cover.timbre == "sawtooth" and cover.gain == 0.5 and cover.tempo == 150.0
    ratio = cover.sections[0].chord[0] / _spec().sections[0].chord[0]
    assert ratio == pytest.approx(2 ** 0.25)


def test_spec_validation_and_round_trip():
    with pytest.raises(ValueError):
        _spec(tempo=250.0)
    with pytest.raises(ValueError):
        SongSpec((_spec().sections[0],), 120.0)
    with pytest.raises(ValueError):
        _spec(timbre="violin")
    spec = _spec(timbre="square")
    assert SongSpec.from_dict(spec.to_dict()) == spec


@pytest.mark.parametrize("timbre", ["sine", "sawtooth", "square", "noise"])
def test_every_timbre_renders(timbre):
    sig = render_song(_spec(timbre=timbre, beats=(4, 4)), FS, seed=1)
    assert np.all(np.isfinite(sig.samples)) and np.max(np.abs(sig.samples)) == pytest.approx(0.9)


def test_corpus_truth_is_a_bijection_to_covers():
    c = make_corpus(8, seed=3)
    assert sorted(c.truth) == list(range(8))
    for i, j in enumerate(c.truth):
        assert c.set_b[j] == make_cover(c.set_a[i], DEFAULT_COVER)
    assert make_corpus(8, seed=3).truth == c.truth
    assert "truth" in c.manifest()


def test_random_specs_are_valid():
    rng = np.random.default_rng(0)
    for _ in range(20):
        spec = random_song_spec(rng)
        assert len(spec.sections) >= 2 and spec.total_beats >= 16
        assert all(any(s.rhythm) for s in spec.sections)
