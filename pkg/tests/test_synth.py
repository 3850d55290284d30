import numpy as np
import pytest

from voiceanon.audio_io import read_wav
from voiceanon.errors import InputError
from voiceanon.pitch import estimate_f0
from voiceanon.protocol import load_manifest
from voiceanon.synth import synthesize_corpus


class TestSynthesizeCorpus:
    def test_counts(self, tmp_path):
        manifest = synthesize_corpus(tmp_path / "c", 8, 4, seed=5)
        assert len(manifest) == 32
        assert len(list((tmp_path / "c").glob("*.wav"))) == 32
        trials = (tmp_path / "c" / "trials.txt").read_text().strip().split("\n")
        assert len(trials) == 8 * 32
        assert sum(1 for t in trials if t.endswith(" target")) == 32
        enroll = load_manifest(tmp_path / "c" / "enroll" / "manifest.tsv")
        assert len(enroll) == 8 * 3

    def test_deterministic(self, tmp_path):
        m1 = synthesize_corpus(tmp_path / "a", 2, 2, seed=9)
        m2 = synthesize_corpus(tmp_path / "b", 2, 2, seed=9)
        for e1, e2 in zip(m1.entries, m2.entries):
            assert e1.wav_path.read_bytes() == e2.wav_path.read_bytes()
            assert e1.transcript == e2.transcript

    def test_seed_changes_audio(self, tmp_path):
        m1 = synthesize_corpus(tmp_path / "a", 2, 2, seed=9)
        m2 = synthesize_corpus(tmp_path / "b", 2, 2, seed=10)
        assert m1.entries[0].wav_path.read_bytes() != \
            m2.entries[0].wav_path.read_bytes()

    def test_single_speaker_rejected(self, tmp_path):
        with pytest.raises(InputError, match="EER"):
            synthesize_corpus(tmp_path / "c", 1, 4, seed=5)

    def test_single_utterance_rejected(self, tmp_path):
        with pytest.raises(InputError):
            synthesize_corpus(tmp_path / "c", 4, 1, seed=5)

    def test_audio_properties(self, tmp_path):
        manifest = synthesize_corpus(tmp_path / "c", 2, 2, seed=6)
        for entry in manifest.entries:
            w = read_wav(entry.wav_path)
            assert w.sample_rate == 16000
            assert np.max(np.abs(w.samples)) <= 0.55
            contour = estimate_f0(w)
            voiced = contour.f0[contour.voiced]
            assert len(voiced) > 40
            assert np.all((voiced >= 50.0) & (voiced <= 600.0))

    def test_transcripts_are_token_ids(self, tmp_path):
        manifest = synthesize_corpus(tmp_path / "c", 2, 2, seed=6)
        for entry in manifest.entries:
            tokens = entry.transcript.split()
            assert 8 <= len(tokens) <= 12
            assert all(t.startswith("TOK") for t in tokens)

    def test_scrambled_keeps_ids_and_durations(self, tmp_path):
        normal = synthesize_corpus(tmp_path / "n", 2, 2, seed=6)
        scrambled = synthesize_corpus(tmp_path / "s", 2, 2, seed=6,
                                      scramble_contours=True)
        for e1, e2 in zip(normal.entries, scrambled.entries):
            assert e1.utterance_id == e2.utterance_id
            assert len(read_wav(e1.wav_path)) == len(read_wav(e2.wav_path))
            assert e1.wav_path.read_bytes() != e2.wav_path.read_bytes()
