import numpy as np
import pytest

from voiceanon.asv import (Embedding, ScoreSet, SimilarityMatrix, Trial,
                           TrialSet, compute_eer, diagonal_dominance,
                           enroll_speaker, extract_embedding,
                           gain_voice_distinctiveness, join_scores,
                           load_score_file, load_trials, run_attack,
                           save_scores, score_trial, similarity_matrix)
from voiceanon.anonymize import AnonymizationConfig
from voiceanon.audio_io import Waveform
from voiceanon.errors import (ConfigError, InputError, MetricUndefinedError,
                              ParameterError, ProtocolError)
from voiceanon.protocol import load_manifest
from voiceanon.synth import synthesize_corpus

from helpers import brute_force_eer, sine, white_noise


def unit(dim, axis):
    v = np.zeros(dim)
    v[axis] = 1.0
    return Embedding(v)


class TestEmbedding:
    def test_deterministic(self):
        w = white_noise(0.5, seed=2)
        a = extract_embedding(w)
        b = extract_embedding(w)
        assert np.array_equal(a.vector, b.vector)
        assert a.dim == 40

    def test_amplitude_scale_invariance(self):
        w = white_noise(0.5, seed=3)
        half = Waveform(0.5 * w.samples, w.sample_rate)
        cos = float(np.dot(extract_embedding(w).vector,
                           extract_embedding(half).vector))
        assert cos > 0.99

    def test_noise_vs_sine_separate(self):
        cos = float(np.dot(extract_embedding(white_noise(0.5, seed=4)).vector,
                           extract_embedding(sine(220, 0.5)).vector))
        assert cos < 0.9

    def test_too_short_rejected(self):
        with pytest.raises(InputError, match="short"):
            extract_embedding(Waveform(np.zeros(1600), 16000))

    def test_unit_norm(self):
        emb = extract_embedding(white_noise(0.3, seed=5))
        assert np.linalg.norm(emb.vector) == pytest.approx(1.0)


class TestEnrollSpeaker:
    def test_single_embedding_identity(self):
        e = extract_embedding(white_noise(0.3, seed=6))
        assert np.allclose(enroll_speaker([e]).vector, e.vector)

    def test_duplicate_embeddings_average_to_same(self):
        e = extract_embedding(white_noise(0.3, seed=7))
        assert np.allclose(enroll_speaker([e, e]).vector, e.vector)

    def test_opposite_embeddings_degenerate(self):
        v = np.ones(8) / np.sqrt(8)
        with pytest.raises(InputError, match="degenerate"):
            enroll_speaker([Embedding(v), Embedding(-v)])

    def test_empty_rejected(self):
        with pytest.raises(InputError):
            enroll_speaker([])

    def test_source_utts_accumulated(self):
        e = extract_embedding(white_noise(0.3, seed=8))
        assert enroll_speaker([e, e, e]).source_utts == 3


class TestScoreTrial:
    def test_identical(self):
        e = unit(8, 0)
        assert score_trial(e, e) == pytest.approx(10.0)

    def test_orthogonal(self):
        assert score_trial(unit(8, 0), unit(8, 1)) == pytest.approx(0.0)

    def test_opposite(self):
        v = np.ones(8)
        assert score_trial(Embedding(v), Embedding(-v)) == pytest.approx(-10.0)

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            score_trial(unit(8, 0), unit(10, 0))

    def test_zero_norm(self):
        with pytest.raises(InputError):
            score_trial(Embedding(np.zeros(4)), unit(4, 0))


class TestComputeEer:
    def test_perfect_separation(self):
        r = compute_eer([2.0, 3.0, 0.0, 1.0], [True, True, False, False])
        assert r.eer == pytest.approx(0.0)

    def test_identical_distributions(self):
        r = compute_eer([0.0, 1.0, 0.0, 1.0], [True, True, False, False])
        assert r.eer == pytest.approx(0.5)

    def test_interleaved_third(self):
        r = compute_eer([1.0, 3.0, 5.0, 0.0, 2.0, 4.0],
                        [True, True, True, False, False, False])
        assert r.eer == pytest.approx(1.0 / 3.0)
        assert r.n_target == 3 and r.n_nontarget == 3

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(9)
        scores = rng.normal(size=60)
        labels = rng.random(60) < 0.4
        labels[0], labels[1] = True, False
        base = compute_eer(scores, labels).eer
        for transform in (lambda x: 3.0 * x + 2.0, np.exp, np.tanh,
                          lambda x: x ** 3):
            assert compute_eer(transform(scores), labels).eer \
                == pytest.approx(base, abs=1e-12)

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(10)
        for _ in range(200):
            n = int(rng.integers(2, 50))
            scores = np.round(rng.normal(size=n), int(rng.integers(0, 3)))
            labels = rng.random(n) < rng.uniform(0.2, 0.8)
            labels[0], labels[1] = True, False
            got = compute_eer(scores, labels).eer
            assert got == pytest.approx(brute_force_eer(scores, labels),
                                        abs=1e-9)

    def test_missing_class_rejected(self):
        with pytest.raises(InputError):
            compute_eer([1.0, 2.0], [True, True])

    def test_eer_in_range(self):
        # anti-discriminating score sets can push the crossing above 0.5,
        # but it always stays a valid rate
        rng = np.random.default_rng(11)
        for _ in range(50):
            scores = rng.normal(size=30)
            labels = rng.random(30) < 0.5
            labels[0], labels[1] = True, False
            assert 0.0 <= compute_eer(scores, labels).eer <= 1.0


class TestTrialFiles:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "trials.txt"
        path.write_text("spk1 utt1 target\nspk1 utt2 nontarget\n")
        trials = load_trials(path)
        assert len(trials) == 2
        assert trials.trials[0].is_target

    def test_bad_label(self, tmp_path):
        path = tmp_path / "trials.txt"
        path.write_text("spk1 utt1 genuine\n")
        with pytest.raises(ProtocolError, match="trials.txt:1"):
            load_trials(path)

    def test_duplicate_pair(self):
        with pytest.raises(ProtocolError, match="duplicate"):
            TrialSet((Trial("s", "u", True), Trial("s", "u", False)))

    def test_scores_round_trip(self, tmp_path):
        trials = TrialSet((Trial("s1", "u1", True), Trial("s1", "u2", False)))
        score_set = ScoreSet(trials, np.array([1.5, -0.25]))
        path = tmp_path / "scores.txt"
        save_scores(score_set, path)
        joined = join_scores(trials, load_score_file(path))
        assert np.allclose(joined.scores, [1.5, -0.25])

    def test_missing_score_rejected(self, tmp_path):
        trials = TrialSet((Trial("s1", "u1", True), Trial("s1", "u2", False)))
        path = tmp_path / "scores.txt"
        path.write_text("s1 u1 2.0\n")
        with pytest.raises(ProtocolError, match="missing"):
            join_scores(trials, load_score_file(path))

    def test_malformed_score_line(self, tmp_path):
        path = tmp_path / "scores.txt"
        path.write_text("s1 u1 not-a-number\n")
        with pytest.raises(ProtocolError):
            load_score_file(path)


class TestSimilarityMatrix:
    def test_all_zero_scores_give_half(self):
        groups = {"a": [unit(4, 0), unit(4, 1)], "b": [unit(4, 2), unit(4, 3)]}
        m = similarity_matrix(groups)
        assert np.allclose(m.values, 0.5)

    def test_identical_within_orthogonal_across(self):
        groups = {"a": [unit(4, 0), unit(4, 0)], "b": [unit(4, 1), unit(4, 1)]}
        m = similarity_matrix(groups)
        sig10 = 1.0 / (1.0 + np.exp(-10.0))
        assert np.diag(m.values) == pytest.approx([sig10, sig10])
        assert m.values[0, 1] == pytest.approx(0.5)
        assert m.values[1, 0] == pytest.approx(0.5)

    def test_symmetric_for_cosine_scorer(self):
        rng = np.random.default_rng(12)
        groups = {f"s{i}": [Embedding(rng.normal(size=6)) for _ in range(3)]
                  for i in range(4)}
        m = similarity_matrix(groups)
        assert np.allclose(m.values, m.values.T)

    def test_diagonal_excludes_self_pairs(self):
        # two orthogonal utterances: non-self pairs all score 0 -> sigmoid 0.5;
        # counting self pairs would pull the diagonal toward sigmoid(5)
        groups = {"a": [unit(4, 0), unit(4, 1)], "b": [unit(4, 2), unit(4, 3)]}
        m = similarity_matrix(groups)
        assert m.values[0, 0] == pytest.approx(0.5)

    def test_diagonal_with_two_utterances_uses_two_ordered_pairs(self):
        # closed form: mean over the 2 ordered non-self pairs is just the
        # single cross score, so M(i,i) = sigmoid(10 * cos(e1, e2))
        e1 = Embedding(np.array([1.0, 0.0, 0.0, 0.0]))
        e2 = Embedding(np.array([0.6, 0.8, 0.0, 0.0]))
        groups = {"a": [e1, e2], "b": [unit(4, 2), unit(4, 3)]}
        m = similarity_matrix(groups)
        assert m.values[0, 0] == pytest.approx(1.0 / (1.0 + np.exp(-6.0)))

    def test_speaker_with_one_utterance_rejected(self):
        with pytest.raises(InputError, match="lonely"):
            similarity_matrix({"lonely": [unit(4, 0)],
                               "ok": [unit(4, 1), unit(4, 2)]})


class TestDiagonalDominance:
    def test_constant_matrix(self):
        m = SimilarityMatrix(("a", "b"), np.full((2, 2), 0.7))
        assert diagonal_dominance(m) == pytest.approx(0.0)

    def test_direct_formula(self):
        m = SimilarityMatrix(("a", "b"), np.array([[0.9, 0.5], [0.5, 0.9]]))
        assert diagonal_dominance(m) == pytest.approx(0.4)

    def test_hand_enumerated_2x2(self):
        m = SimilarityMatrix(("a", "b"), np.array([[0.8, 0.4], [0.6, 0.7]]))
        assert diagonal_dominance(m) == pytest.approx(0.25, abs=1e-12)

    def test_single_speaker_rejected(self):
        with pytest.raises(InputError):
            diagonal_dominance(SimilarityMatrix(("a",), np.array([[0.9]])))


class TestGainVoiceDistinctiveness:
    def make(self, diag, off):
        values = np.full((3, 3), off)
        np.fill_diagonal(values, diag)
        return SimilarityMatrix(("a", "b", "c"), values)

    def test_identical_matrices_zero_db(self):
        m = self.make(0.9, 0.4)
        assert gain_voice_distinctiveness(m, m) == 0.0

    def test_ratio_tenth(self):
        assert gain_voice_distinctiveness(self.make(0.9, 0.4), self.make(0.45, 0.4)) \
            == pytest.approx(-10.0)

    def test_ratio_two(self):
        assert gain_voice_distinctiveness(self.make(0.6, 0.4), self.make(0.8, 0.4)) \
            == pytest.approx(10.0 * np.log10(2.0))

    def test_antisymmetry(self):
        m1, m2 = self.make(0.9, 0.3), self.make(0.7, 0.4)
        assert gain_voice_distinctiveness(m1, m2) == pytest.approx(
            -gain_voice_distinctiveness(m2, m1), abs=1e-12)

    def test_zero_original_dominance_undefined(self):
        with pytest.raises(MetricUndefinedError):
            gain_voice_distinctiveness(self.make(0.5, 0.5), self.make(0.9, 0.4))

    def test_zero_anonymized_dominance_is_neg_inf(self):
        assert gain_voice_distinctiveness(self.make(0.9, 0.4),
                                          self.make(0.5, 0.5)) == float("-inf")


@pytest.fixture(scope="module")
def small_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("attackcorpus")
    trial = synthesize_corpus(root / "c", 4, 2, seed=31)
    enroll = load_manifest(root / "c" / "enroll" / "manifest.tsv")
    trials = load_trials(root / "c" / "trials.txt")
    return root, trial, enroll, trials


class TestRunAttack:
    def test_unknown_scenario(self, small_corpus):
        _, trial, enroll, trials = small_corpus
        with pytest.raises(ParameterError):
            run_attack("ignorant", enroll, trial, trials)

    def test_equal_seeds_rejected(self, small_corpus):
        root, trial, enroll, trials = small_corpus
        cfg = AnonymizationConfig(seed=77)
        with pytest.raises(ConfigError, match="differ"):
            run_attack("semi_informed", enroll, trial, trials, cfg=cfg,
                       attacker_seed=77, work_dir=root / "w0")

    def test_missing_config_rejected(self, small_corpus):
        _, trial, enroll, trials = small_corpus
        with pytest.raises(ConfigError):
            run_attack("semi_informed", enroll, trial, trials)

    def test_unprotected_separates_synthetic_speakers(self, small_corpus):
        _, trial, enroll, trials = small_corpus
        eer, score_set = run_attack("unprotected", enroll, trial, trials)
        assert eer.eer < 0.2
        assert len(score_set.scores) == len(trials)

    def test_semi_informed_deterministic(self, small_corpus):
        root, trial, enroll, trials = small_corpus
        cfg = AnonymizationConfig(seed=77)
        _, first = run_attack("semi_informed", enroll, trial, trials, cfg=cfg,
                              attacker_seed=78, work_dir=root / "w1")
        _, second = run_attack("semi_informed", enroll, trial, trials, cfg=cfg,
                               attacker_seed=78, work_dir=root / "w2")
        assert np.array_equal(first.scores, second.scores)

    def test_unknown_enroll_speaker_rejected(self, small_corpus):
        _, trial, enroll, trials = small_corpus
        bad = TrialSet(trials.trials + (Trial("ghost",
                                              trials.trials[0].trial_utterance_id,
                                              False),))
        with pytest.raises(ProtocolError, match="ghost"):
            run_attack("unprotected", enroll, trial, bad)
