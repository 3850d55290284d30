"""Voice anonymization with pseudo-speaker assignment.

Two anonymizers:

* ``mcadams_anonymize`` shifts formants by raising the LPC pole angles to
  a per-pseudo-speaker exponent and re-synthesizing from the original
  residual, so the excitation (and the pitch contour) is untouched.
* ``pitch_shift_anonymize`` resamples the signal and restores its
  duration with phase-vocoder time-scale modification.

Pseudo-speaker parameters are a pure function of (seed, speaker_id) at
speaker level, or (seed, speaker_id, utterance_id) at utterance level,
derived through a keyed hash: corpus processing stays deterministic and
order-independent under any parallel schedule.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dsp
from .audio_io import FrameConfig, Waveform, frame_signal, read_wav, resample, write_wav
from .errors import (CorpusProcessingError, InputError, NumericError,
                     ParameterError, ProtocolError)
from .protocol import Manifest, ManifestEntry

DEFAULT_SEED = 1234

METHODS = ("mcadams", "pitch_shift")
LEVELS = ("speaker", "utterance")


@dataclass(frozen=True)
class AnonymizationConfig:
    method: str = "mcadams"
    level: str = "speaker"
    seed: int = DEFAULT_SEED
    alpha_min: float = 0.75
    alpha_max: float = 0.90
    shift_min: float = -8.0
    shift_max: float = 8.0
    frame_ms: float = 20.0
    hop_ms: float = 10.0
    lpc_order: int = 20

    def __post_init__(self):
        if self.method not in METHODS:
            raise ParameterError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.level not in LEVELS:
            raise ParameterError(f"unknown level {self.level!r}; choose from {LEVELS}")
        if not (0.0 < self.alpha_min < self.alpha_max < 2.0):
            raise ParameterError(
                f"need 0 < alpha_min < alpha_max < 2, got ({self.alpha_min}, {self.alpha_max})")
        if not (-12.0 <= self.shift_min < self.shift_max <= 12.0):
            raise ParameterError(
                f"need -12 <= shift_min < shift_max <= 12, got ({self.shift_min}, {self.shift_max})")
        if not (0 < self.hop_ms <= self.frame_ms):
            raise ParameterError(f"need 0 < hop_ms <= frame_ms")
        if self.lpc_order < 2:
            raise ParameterError(f"lpc_order must be >= 2, got {self.lpc_order}")


@dataclass(frozen=True)
class PseudoSpeakerParams:
    method: str
    alpha: float | None = None
    semitone_shift: float | None = None


def _derive_u64(seed: int, *parts: str) -> int:
    """Keyed-hash 64-bit value; the root of all derived randomness."""
    payload = "\x1f".join([str(int(seed)), *parts]).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "big")


def _derive_uniform(seed: int, *parts: str) -> float:
    """Keyed-hash draw in the open interval (0, 1), stable across runs."""
    return (_derive_u64(seed, *parts) + 0.5) / 2.0 ** 64


def assign_pseudo_speaker(cfg: AnonymizationConfig, speaker_id: str,
                          utterance_id: str) -> PseudoSpeakerParams:
    """Derive the pseudo-speaker parameters for one utterance.

    At speaker level the draw depends only on (seed, speaker_id), so every
    utterance of a speaker maps to the same pseudo-speaker; at utterance
    level the utterance id joins the key.
    """
    if not speaker_id or not utterance_id:
        raise InputError("speaker_id and utterance_id must be non-empty")
    key = (speaker_id,) if cfg.level == "speaker" else (speaker_id, utterance_id)
    if cfg.method == "mcadams":
        u = _derive_uniform(cfg.seed, "alpha", *key)
        return PseudoSpeakerParams("mcadams",
                                   alpha=cfg.alpha_min + u * (cfg.alpha_max - cfg.alpha_min))
    u = _derive_uniform(cfg.seed, "shift", *key)
    return PseudoSpeakerParams("pitch_shift",
                               semitone_shift=cfg.shift_min + u * (cfg.shift_max - cfg.shift_min))


def mcadams_anonymize(w: Waveform, alpha: float,
                      cfg: AnonymizationConfig | None = None) -> Waveform:
    """Formant-shifting anonymization via pole-angle exponentiation.

    Per frame: LPC analysis, pole extraction, angle rotation by ``alpha``,
    polynomial rebuild, and filtering of the original residual through the
    modified model; frames are recombined by weighted overlap-add. Output
    length equals input length. Degenerate (silent) frames pass through.
    """
    if not (0.0 < alpha < 2.0):
        raise ParameterError(f"alpha {alpha} outside (0, 2)")
    cfg = cfg or AnonymizationConfig()
    sr = w.sample_rate
    frame_len = max(int(round(cfg.frame_ms * 1e-3 * sr)), cfg.lpc_order + 1)
    hop = max(1, int(round(cfg.hop_ms * 1e-3 * sr)))
    frames = frame_signal(w, FrameConfig(frame_len, hop, "hann"))

    models = [dsp.lpc_coefficients(frames[i], cfg.lpc_order)
              for i in range(len(frames))]
    active = [i for i, m in enumerate(models) if not m.passthrough]
    out_frames = frames.copy()
    if active:
        coeff_matrix = np.stack([models[i].polynomial for i in active])
        try:
            roots = dsp._roots_batch(coeff_matrix)
        except NumericError as exc:
            row = exc.frame_index if exc.frame_index is not None else 0
            raise NumericError("McAdams root finding failed",
                               frame_index=active[row]) from exc
        for row, i in enumerate(active):
            poles = dsp.PoleSet.from_complex(roots[row])
            rotated = dsp.rotate_poles(poles, alpha)
            radius = np.where(rotated.radius >= dsp.STABLE_RADIUS,
                              dsp.CLAMP_RADIUS, rotated.radius)
            new_model = dsp.poly_from_roots(dsp.PoleSet(radius, rotated.angle),
                                            gain=models[i].gain)
            residual = dsp.inverse_filter(frames[i], models[i])
            out_frames[i] = dsp.synthesis_filter(residual, new_model)
    y = dsp.overlap_add(out_frames, hop, "hann", sr).samples[:len(w)]
    return Waveform(y, sr)


def pitch_shift_anonymize(w: Waveform, semitones: float,
                          cfg: AnonymizationConfig | None = None) -> Waveform:
    """Shift pitch by ``semitones`` via resampling plus time-scale restoration.

    Resampling by 2^(-semitones/12) scales pitch by 2^(semitones/12) and
    duration by the same factor; pv_tsm stretches the duration back, so the
    output length stays within one TSM hop of the input.
    """
    if abs(semitones) > 12.0:
        raise ParameterError(f"semitone shift {semitones} outside [-12, 12]")
    ratio = 2.0 ** (-semitones / 12.0)
    resampled = resample(w, ratio)
    return dsp.pv_tsm(resampled, 1.0 / ratio)


def anonymize_utterance(w: Waveform, params: PseudoSpeakerParams,
                        cfg: AnonymizationConfig) -> Waveform:
    if params.method == "mcadams":
        return mcadams_anonymize(w, params.alpha, cfg)
    return pitch_shift_anonymize(w, params.semitone_shift, cfg)


def anonymize_corpus(manifest: Manifest, cfg: AnonymizationConfig,
                     out_dir, threads: int = 1) -> Manifest:
    """Anonymize every utterance of ``manifest`` into ``out_dir``.

    Deterministic for a fixed (manifest, cfg) under any thread count.
    Per-utterance failures are collected; if any utterance fails, the
    whole operation raises CorpusProcessingError listing all of them.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    missing = [str(e.wav_path) for e in manifest.entries if not e.wav_path.exists()]
    if missing:
        raise ProtocolError(f"unreadable audio paths: {', '.join(missing)}")

    def process(entry: ManifestEntry) -> ManifestEntry:
        w = read_wav(entry.wav_path)
        params = assign_pseudo_speaker(cfg, entry.speaker_id, entry.utterance_id)
        anonymized = anonymize_utterance(w, params, cfg)
        out_path = out_dir / f"{entry.utterance_id}.wav"
        write_wav(anonymized, out_path)
        return ManifestEntry(entry.utterance_id, entry.speaker_id, out_path,
                             entry.transcript)

    results: list[ManifestEntry | None] = [None] * len(manifest.entries)
    failures = []
    if threads <= 1:
        for idx, entry in enumerate(manifest.entries):
            try:
                results[idx] = process(entry)
            except Exception as exc:
                failures.append((entry.utterance_id, exc))
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {pool.submit(process, e): (i, e)
                       for i, e in enumerate(manifest.entries)}
            for fut, (idx, entry) in futures.items():
                try:
                    results[idx] = fut.result()
                except Exception as exc:
                    failures.append((entry.utterance_id, exc))
    if failures:
        failures.sort(key=lambda pair: pair[0])
        raise CorpusProcessingError(failures)
    return Manifest(tuple(results), manifest.dataset_name)
