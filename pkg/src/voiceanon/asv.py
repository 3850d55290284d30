"""Speaker-verification scoring, EER and voice-distinctiveness metrics.

The speaker representation is a deliberately small stand-in for a neural
embedding: per-utterance mean and standard deviation of MFCCs (c0
excluded, so amplitude scaling cancels), length-normalized. Verification
scores are calibrated cosines; the scorer is an interface, so externally
produced score files can be evaluated instead of running the built-in
embedding path.

``run_attack`` realizes the two evaluation scenarios: *unprotected*
(raw enrollment vs raw trials) and *semi-informed* (speaker-level
anonymized trials and enrollment under different seeds, with the
attacker's feature normalization statistics recomputed on utterance-level
anonymized training data).
"""

from __future__ import annotations

import tempfile
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.fft

from .anonymize import AnonymizationConfig, anonymize_corpus
from .audio_io import FrameConfig, Waveform, frame_signal, read_wav
from .errors import (ConfigError, InputError, MetricUndefinedError,
                     ParameterError, ProtocolError)
from .protocol import Manifest

CALIBRATION_SCALE = 10.0


@dataclass(frozen=True)
class EmbeddingConfig:
    n_coeffs: int = 20          # cepstral coefficients kept (c1..c20)
    n_mels: int = 26
    frame_ms: float = 25.0
    hop_ms: float = 10.0
    min_duration_s: float = 0.2


@dataclass(frozen=True, eq=False)
class Embedding:
    vector: np.ndarray
    source_utts: int = 1

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=np.float64)
        if vec.ndim != 1 or not np.all(np.isfinite(vec)):
            raise InputError("embedding must be a finite 1-D vector")
        object.__setattr__(self, "vector", vec)

    @property
    def dim(self) -> int:
        return len(self.vector)


def _mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz) / 700.0)


def _mel_inv(mel):
    return 700.0 * (10.0 ** (np.asarray(mel) / 2595.0) - 1.0)


def _mel_filterbank(n_mels: int, nfft: int, sr: int) -> np.ndarray:
    edges = _mel_inv(np.linspace(_mel(0.0), _mel(sr / 2.0), n_mels + 2))
    bins = np.floor((nfft + 1) * edges / sr).astype(int)
    fb = np.zeros((n_mels, nfft // 2 + 1))
    for m in range(1, n_mels + 1):
        left, center, right = bins[m - 1], bins[m], bins[m + 1]
        for k in range(left, center):
            if center > left:
                fb[m - 1, k] = (k - left) / (center - left)
        for k in range(center, right):
            if right > center:
                fb[m - 1, k] = (right - k) / (right - center)
    return fb


def mfcc(w: Waveform, cfg: EmbeddingConfig = EmbeddingConfig()) -> np.ndarray:
    """MFCC matrix (n_frames, n_coeffs), zeroth coefficient excluded."""
    sr = w.sample_rate
    frame_len = int(round(cfg.frame_ms * 1e-3 * sr))
    hop = max(1, int(round(cfg.hop_ms * 1e-3 * sr)))
    nfft = 1 << int(np.ceil(np.log2(frame_len)))
    frames = frame_signal(w, FrameConfig(frame_len, hop, "hann"))
    power = np.abs(np.fft.rfft(frames, nfft, axis=1)) ** 2 / nfft
    fb = _mel_filterbank(cfg.n_mels, nfft, sr)
    energies = np.log(np.maximum(power @ fb.T, 1e-10))
    cepstra = scipy.fft.dct(energies, type=2, norm="ortho", axis=1)
    return cepstra[:, 1:cfg.n_coeffs + 1]


def extract_embedding(w: Waveform,
                      cfg: EmbeddingConfig = EmbeddingConfig()) -> Embedding:
    """Utterance embedding: MFCC mean and std concatenated, length-normalized."""
    if w.duration < cfg.min_duration_s:
        raise InputError(f"audio too short for embedding: {w.duration * 1e3:.0f} ms "
                         f"< {cfg.min_duration_s * 1e3:.0f} ms")
    coeffs = mfcc(w, cfg)
    vec = np.concatenate([coeffs.mean(axis=0), coeffs.std(axis=0)])
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise InputError("degenerate audio: embedding has zero norm")
    return Embedding(vec / norm)


def enroll_speaker(embeddings) -> Embedding:
    """Average enrollment embeddings elementwise, then length-normalize."""
    embeddings = list(embeddings)
    if not embeddings:
        raise InputError("cannot enroll a speaker from zero embeddings")
    dims = {e.dim for e in embeddings}
    if len(dims) != 1:
        raise InputError(f"mixed embedding dimensions: {sorted(dims)}")
    mean = np.mean([e.vector for e in embeddings], axis=0)
    norm = np.linalg.norm(mean)
    if norm == 0:
        raise InputError("degenerate enrollment: embeddings average to zero")
    return Embedding(mean / norm, source_utts=sum(e.source_utts for e in embeddings))


def score_trial(enroll: Embedding, trial: Embedding,
                scale: float = CALIBRATION_SCALE) -> float:
    """Calibrated cosine similarity (LLR-like, monotone in the cosine)."""
    if enroll.dim != trial.dim:
        raise InputError(f"dimension mismatch: {enroll.dim} vs {trial.dim}")
    ne = np.linalg.norm(enroll.vector)
    nt = np.linalg.norm(trial.vector)
    if ne == 0 or nt == 0:
        raise InputError("zero-norm embedding")
    return float(scale * np.dot(enroll.vector, trial.vector) / (ne * nt))


# ---------------------------------------------------------------------------
# Trials, scores, EER
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Trial:
    enroll_speaker_id: str
    trial_utterance_id: str
    is_target: bool


@dataclass(frozen=True)
class TrialSet:
    trials: tuple

    def __post_init__(self):
        trials = tuple(self.trials)
        pairs = set()
        for t in trials:
            key = (t.enroll_speaker_id, t.trial_utterance_id)
            if key in pairs:
                raise ProtocolError(f"duplicate trial {key}")
            pairs.add(key)
        object.__setattr__(self, "trials", trials)

    def __len__(self) -> int:
        return len(self.trials)

    @property
    def labels(self) -> np.ndarray:
        return np.array([t.is_target for t in self.trials], dtype=bool)


@dataclass(frozen=True, eq=False)
class ScoreSet:
    trials: TrialSet
    scores: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.shape != (len(self.trials),):
            raise InputError(f"{len(scores)} scores for {len(self.trials)} trials")
        if not np.all(np.isfinite(scores)):
            raise InputError("non-finite scores")
        object.__setattr__(self, "scores", scores)

    def eer(self) -> "EerResult":
        return compute_eer(self.scores, self.trials.labels)


@dataclass(frozen=True)
class EerResult:
    eer: float
    threshold: float
    n_target: int
    n_nontarget: int


def compute_eer(scores, is_target) -> EerResult:
    """Equal error rate by linear interpolation on the ROC staircase.

    Thresholds are swept over all distinct scores (plus a sentinel above
    the maximum); P_fa is the fraction of nontarget scores >= threshold,
    P_miss the fraction of target scores < threshold; the EER is read off
    at the interpolated P_fa = P_miss crossing.
    """
    scores = np.asarray(scores, dtype=np.float64)
    is_target = np.asarray(is_target, dtype=bool)
    if scores.shape != is_target.shape or scores.ndim != 1:
        raise InputError("scores and labels must be 1-D arrays of equal length")
    if not np.all(np.isfinite(scores)):
        raise InputError("non-finite scores")
    target = np.sort(scores[is_target])
    nontarget = np.sort(scores[~is_target])
    if len(target) == 0 or len(nontarget) == 0:
        raise InputError("EER needs at least one target and one nontarget trial")

    thresholds = np.unique(scores)
    thresholds = np.append(thresholds, np.nextafter(thresholds[-1], np.inf))
    p_fa = (len(nontarget) - np.searchsorted(nontarget, thresholds, "left")) \
        / len(nontarget)
    p_miss = np.searchsorted(target, thresholds, "left") / len(target)
    diff = p_miss - p_fa        # monotone from -1 to +1
    k = int(np.argmax(diff >= 0.0))
    if k == 0:
        return EerResult(float(p_fa[0]), float(thresholds[0]),
                         len(target), len(nontarget))
    d0, d1 = diff[k - 1], diff[k]
    t = 0.0 if d1 == d0 else float(-d0 / (d1 - d0))
    eer = float(p_fa[k - 1] + t * (p_fa[k] - p_fa[k - 1]))
    threshold = float(thresholds[k - 1] + t * (thresholds[k] - thresholds[k - 1]))
    return EerResult(eer, threshold, len(target), len(nontarget))


def load_trials(path) -> TrialSet:
    """Parse `<enroll_speaker_id> <trial_utterance_id> target|nontarget` lines."""
    path = Path(path)
    if not path.exists():
        raise ProtocolError(f"trials file not found: {path}")
    trials = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cols = line.split()
            if len(cols) != 3 or cols[2] not in ("target", "nontarget"):
                raise ProtocolError(f"{path}:{lineno}: expected "
                                    f"'<enroll> <utterance> target|nontarget'")
            trials.append(Trial(cols[0], cols[1], cols[2] == "target"))
    if not trials:
        raise ProtocolError(f"{path}: no trials")
    return TrialSet(tuple(trials))


def load_score_file(path) -> dict:
    """Parse `<enroll_speaker_id> <trial_utterance_id> <score>` lines."""
    path = Path(path)
    if not path.exists():
        raise ProtocolError(f"scores file not found: {path}")
    rows = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cols = line.split()
            try:
                score = float(cols[2]) if len(cols) == 3 else None
            except ValueError:
                score = None
            if score is None:
                raise ProtocolError(f"{path}:{lineno}: expected "
                                    f"'<enroll> <utterance> <score>'")
            rows[(cols[0], cols[1])] = score
    return rows


def join_scores(trials: TrialSet, score_rows: dict) -> ScoreSet:
    """Align a scores mapping against a trial set (missing pairs are errors)."""
    scores = []
    missing = []
    for t in trials.trials:
        key = (t.enroll_speaker_id, t.trial_utterance_id)
        if key not in score_rows:
            missing.append(key)
        else:
            scores.append(score_rows[key])
    if missing:
        raise ProtocolError(f"scores missing for {len(missing)} trial(s), "
                            f"first: {missing[0]}")
    return ScoreSet(trials, np.array(scores))


def save_scores(score_set: ScoreSet, path) -> None:
    with open(Path(path), "w", encoding="utf-8") as fh:
        for t, s in zip(score_set.trials.trials, score_set.scores):
            fh.write(f"{t.enroll_speaker_id} {t.trial_utterance_id} {s:.6f}\n")


# ---------------------------------------------------------------------------
# Voice similarity / distinctiveness
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    speakers: tuple
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        n = len(self.speakers)
        if values.shape != (n, n):
            raise InputError(f"expected {n}x{n} matrix, got {values.shape}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "speakers", tuple(self.speakers))

    @property
    def n_speakers(self) -> int:
        return len(self.speakers)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def similarity_matrix(embeddings_by_speaker: dict,
                      scale: float = CALIBRATION_SCALE) -> SimilarityMatrix:
    """Voice similarity matrix: sigmoid of mean pairwise LLR per speaker pair.

    Diagonal entries average over the ordered non-self utterance pairs,
    which is why every speaker needs at least two utterances.
    """
    speakers = list(embeddings_by_speaker)
    for spk in speakers:
        if len(embeddings_by_speaker[spk]) < 2:
            raise InputError(f"speaker {spk!r} has fewer than 2 utterances; "
                             "diagonal similarity is undefined")
    mats = {}
    for spk in speakers:
        vecs = np.stack([e.vector for e in embeddings_by_speaker[spk]])
        norms = np.linalg.norm(vecs, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise InputError(f"zero-norm embedding for speaker {spk!r}")
        mats[spk] = vecs / norms
    n = len(speakers)
    values = np.zeros((n, n))
    for i, si in enumerate(speakers):
        for j, sj in enumerate(speakers):
            llr = scale * (mats[si] @ mats[sj].T)
            if i == j:
                k = llr.shape[0]
                mean = (llr.sum() - np.trace(llr)) / (k * (k - 1))
            else:
                mean = llr.mean()
            values[i, j] = _sigmoid(mean)
    return SimilarityMatrix(tuple(speakers), values)


def diagonal_dominance(m: SimilarityMatrix) -> float:
    """Absolute difference between mean diagonal and mean off-diagonal entries."""
    n = m.n_speakers
    if n < 2:
        raise InputError(f"diagonal dominance needs >= 2 speakers, got {n}")
    diag = np.trace(m.values) / n
    off = (m.values.sum() - np.trace(m.values)) / (n * (n - 1))
    return float(abs(diag - off))


def gain_voice_distinctiveness(m_oo: SimilarityMatrix,
                               m_aa: SimilarityMatrix) -> float:
    """10 log10 of the diagonal-dominance ratio (anonymized over original).

    0 dB means voice distinctiveness is preserved. Returns -inf when the
    anonymized matrix has zero dominance; raises MetricUndefinedError when
    the original one does.
    """
    d_oo = diagonal_dominance(m_oo)
    d_aa = diagonal_dominance(m_aa)
    if d_oo == 0.0:
        raise MetricUndefinedError("diagonal dominance of the original matrix is 0; "
                                   "gain of voice distinctiveness is undefined")
    if d_aa == 0.0:
        return float("-inf")
    return float(10.0 * np.log10(d_aa / d_oo))


def save_similarity_matrix(m: SimilarityMatrix, path) -> None:
    """CSV dump with a speaker-id header row and column."""
    with open(Path(path), "w", encoding="utf-8") as fh:
        fh.write("speaker," + ",".join(m.speakers) + "\n")
        for spk, row in zip(m.speakers, m.values):
            fh.write(spk + "," + ",".join(f"{v:.6f}" for v in row) + "\n")


# ---------------------------------------------------------------------------
# Attack scenarios
# ---------------------------------------------------------------------------

SCENARIOS = ("unprotected", "semi_informed")


def _utterance_embeddings(manifest: Manifest, cfg: EmbeddingConfig) -> dict:
    return {e.utterance_id: extract_embedding(read_wav(e.wav_path), cfg)
            for e in manifest.entries}


def _enrollment_models(manifest: Manifest, embeddings: dict) -> dict:
    by_speaker: dict[str, list] = {}
    for e in manifest.entries:
        by_speaker.setdefault(e.speaker_id, []).append(embeddings[e.utterance_id])
    return {spk: enroll_speaker(embs) for spk, embs in by_speaker.items()}


def _score_trial_set(trials: TrialSet, enroll_models: dict,
                     trial_embeddings: dict, scale: float) -> ScoreSet:
    scores = np.empty(len(trials))
    for idx, t in enumerate(trials.trials):
        if t.enroll_speaker_id not in enroll_models:
            raise ProtocolError(f"no enrollment data for speaker "
                                f"{t.enroll_speaker_id!r}")
        if t.trial_utterance_id not in trial_embeddings:
            raise ProtocolError(f"no trial audio for utterance "
                                f"{t.trial_utterance_id!r}")
        scores[idx] = score_trial(enroll_models[t.enroll_speaker_id],
                                  trial_embeddings[t.trial_utterance_id], scale)
    return ScoreSet(trials, scores)


def _adapt(embeddings: dict, mean: np.ndarray, std: np.ndarray) -> dict:
    out = {}
    for key, emb in embeddings.items():
        vec = (emb.vector - mean) / std
        norm = np.linalg.norm(vec)
        if norm == 0:
            raise InputError(f"degenerate adapted embedding for {key!r}")
        out[key] = Embedding(vec / norm, emb.source_utts)
    return out


def run_attack(scenario: str, enroll_manifest: Manifest, trial_manifest: Manifest,
               trials: TrialSet, cfg: AnonymizationConfig | None = None,
               attacker_seed: int | None = None,
               train_manifest: Manifest | None = None,
               work_dir=None, trial_pre_anonymized: bool = False,
               threads: int = 1,
               embedding_cfg: EmbeddingConfig = EmbeddingConfig(),
               scale: float = CALIBRATION_SCALE):
    """Score a trial set under an attack scenario; returns (EerResult, ScoreSet).

    unprotected:   raw enrollment vs raw trial audio.
    semi_informed: trial audio anonymized with the user's config (unless
        ``trial_pre_anonymized``), enrollment anonymized at speaker level
        under ``attacker_seed`` (which must differ from the user seed), and
        embedding mean/variance statistics recomputed on an utterance-level
        anonymized copy of ``train_manifest`` (the enrollment data when no
        training manifest is given).
    """
    if scenario not in SCENARIOS:
        raise ParameterError(f"unknown scenario {scenario!r}; choose from {SCENARIOS}")
    if scenario == "unprotected":
        enroll_embs = _utterance_embeddings(enroll_manifest, embedding_cfg)
        trial_embs = _utterance_embeddings(trial_manifest, embedding_cfg)
        models = _enrollment_models(enroll_manifest, enroll_embs)
        score_set = _score_trial_set(trials, models, trial_embs, scale)
        return score_set.eer(), score_set

    if cfg is None:
        raise ConfigError("semi_informed attack needs an anonymization config")
    if attacker_seed is None:
        raise ConfigError("semi_informed attack needs an attacker seed")
    if attacker_seed == cfg.seed:
        raise ConfigError(f"attacker seed must differ from the user seed "
                          f"({cfg.seed}); the attacker does not know the "
                          "user's pseudo-speakers")

    tmp = None
    if work_dir is None:
        tmp = tempfile.TemporaryDirectory(prefix="voiceanon_attack_")
        work_dir = tmp.name
    work_dir = Path(work_dir)
    try:
        if trial_pre_anonymized:
            trial_anon = trial_manifest
        else:
            trial_anon = anonymize_corpus(trial_manifest, cfg,
                                          work_dir / "trial_anon", threads)
        enroll_cfg = replace(cfg, seed=attacker_seed, level="speaker")
        enroll_anon = anonymize_corpus(enroll_manifest, enroll_cfg,
                                       work_dir / "enroll_anon", threads)
        train_cfg = replace(cfg, seed=attacker_seed, level="utterance")
        train_anon = anonymize_corpus(train_manifest or enroll_manifest, train_cfg,
                                      work_dir / "train_anon", threads)

        train_embs = _utterance_embeddings(train_anon, embedding_cfg)
        train_matrix = np.stack([e.vector for e in train_embs.values()])
        mean = train_matrix.mean(axis=0)
        std = np.maximum(train_matrix.std(axis=0), 1e-8)

        enroll_embs = _adapt(_utterance_embeddings(enroll_anon, embedding_cfg),
                             mean, std)
        trial_embs = _adapt(_utterance_embeddings(trial_anon, embedding_cfg),
                            mean, std)
        models = _enrollment_models(enroll_anon, enroll_embs)
        score_set = _score_trial_set(trials, models, trial_embs, scale)
        return score_set.eer(), score_set
    finally:
        if tmp is not None:
            tmp.cleanup()
