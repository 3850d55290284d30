"""Synthetic multi-speaker corpora for desk-scale evaluation runs.

Each speaker gets a distinct set of formant resonators (stratified across
speakers so that any seed yields a separable corpus) and a base pitch;
each utterance is a sawtooth excitation following a smoothly modulated F0
contour, shaped by the speaker's all-pole filter, with silence padding
and short unvoiced gaps.

``scramble_contours=True`` keeps speakers, utterance ids and durations
identical but replaces every pitch contour with an independent trend-
dominated random one: paired against the normal corpus it deliberately
breaks pitch correlation while leaving everything else comparable.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.signal

from .anonymize import _derive_u64, _derive_uniform
from .audio_io import DEFAULT_SAMPLE_RATE, Waveform, write_wav
from .errors import InputError
from .protocol import Manifest, ManifestEntry, save_manifest

VOCAB_SIZE = 40
TOKENS = tuple(f"TOK{i:02d}" for i in range(VOCAB_SIZE))


def _permutation(seed: int, tag: str, n: int) -> np.ndarray:
    return np.random.default_rng(_derive_u64(seed, "perm", tag)).permutation(n)


def _speaker_traits(seed: int, n_speakers: int):
    """Speaker identity = low formant positions, stratified for separability.

    Only F1/F2 are speaker traits: they sit in the angle range a
    formant-shifting anonymizer actually moves. F3, formant bandwidths and
    the pitch range vary per utterance instead, so no identity cue
    survives anonymization through pole radii, near-fixed-point angles or
    F0 statistics.
    """
    p1 = _permutation(seed, "f1", n_speakers)
    p2 = _permutation(seed, "f2", n_speakers)
    traits = []
    for s in range(n_speakers):
        u = lambda tag: _derive_uniform(seed, "spk", str(s), tag)
        f1 = 320.0 + (p1[s] + 0.25 + 0.5 * u("f1")) / n_speakers * 550.0
        f2 = 1050.0 + (p2[s] + 0.25 + 0.5 * u("f2")) / n_speakers * 1150.0
        traits.append({"f1": f1, "f2": f2})
    return traits


def _vocal_tract_coeffs(seed: int, spk: int, utt: str, traits: dict,
                        sr: int) -> np.ndarray:
    u = lambda tag: _derive_uniform(seed, "tract", str(spk), utt, tag)
    formants = (traits["f1"], traits["f2"], 2550.0 + 300.0 * u("f3"))
    poles = []
    for k, freq in enumerate(formants):
        # generous bandwidths keep formant ringing short, so anonymized
        # audio stays cleanly periodic for the pitch tracker
        bw = 160.0 + 20.0 * u(f"bw{k}")
        r = np.exp(-np.pi * bw / sr)
        theta = 2.0 * np.pi * freq / sr
        poles.extend([r * np.exp(1j * theta), r * np.exp(-1j * theta)])
    return np.real(np.poly(poles))


def _contour(seed: int, spk: int, utt: str, n: int, sr: int,
             scrambled: bool) -> np.ndarray:
    t = np.arange(n) / sr
    dur = n / sr
    f0_base = 110.0 + 50.0 * _derive_uniform(seed, "base", str(spk), utt)
    if scrambled:
        u = lambda tag: _derive_uniform(seed, "scramble", str(spk), utt, tag)
        # exactly sign-balanced across the corpus so the replaced contours
        # cannot correlate with the originals on average
        sign = 1.0 if (spk + sum(map(ord, utt))) % 2 == 0 else -1.0
        slope = 0.2 + 0.15 * u("slope")
        rate = 0.8 + 2.2 * u("rate")
        phase = 2.0 * np.pi * u("phase")
        octaves = sign * (slope * (2.0 * t / dur - 1.0)
                          + 0.1 * np.sin(2.0 * np.pi * rate * t + phase))
    else:
        u = lambda tag: _derive_uniform(seed, "utt", str(spk), utt, tag)
        r1 = 0.4 + 0.5 * u("r1")
        r2 = 1.2 + 1.2 * u("r2")
        octaves = 0.14 * np.sin(2.0 * np.pi * r1 * t + 2.0 * np.pi * u("p1")) \
            + 0.1 * np.sin(2.0 * np.pi * r2 * t + 2.0 * np.pi * u("p2"))
    return np.clip(f0_base * np.exp2(octaves), 80.0, 420.0)


def _envelope(n: int, sr: int, rng: np.random.Generator) -> np.ndarray:
    pad = int(0.1 * sr)
    fade = int(0.06 * sr)
    env = np.zeros(n)
    env[pad:n - pad] = 1.0
    ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(fade) / fade)
    env[pad:pad + fade] = np.minimum(env[pad:pad + fade], ramp)
    env[n - pad - fade:n - pad] = np.minimum(env[n - pad - fade:n - pad], ramp[::-1])
    for _ in range(int(rng.integers(1, 3))):
        gap_len = int((0.06 + 0.06 * rng.random()) * sr)
        start = int(rng.integers(pad + fade, max(n - pad - fade - gap_len, pad + fade + 1)))
        notch = np.ones(gap_len + 2 * fade)
        notch[:fade] = 1.0 - ramp
        notch[fade:fade + gap_len] = 0.0
        notch[fade + gap_len:] = ramp
        stop = min(start + len(notch), n)
        env[start:stop] *= notch[:stop - start]
    return env


def synthesize_utterance(seed: int, spk: int, utt: str, traits: dict,
                         sr: int, scrambled: bool = False) -> Waveform:
    dur = 1.5 + 0.4 * _derive_uniform(seed, "dur", str(spk), utt)
    n = int(dur * sr)
    f0 = _contour(seed, spk, utt, n, sr, scrambled)
    phase = np.cumsum(f0 / sr)
    saw = 2.0 * np.mod(phase, 1.0) - 1.0
    # leaky integration tilts the sawtooth toward its fundamental, which
    # keeps pitch tracking unambiguous after formant shifting
    excitation = scipy.signal.lfilter([1.0], [1.0, -0.95], saw)
    excitation /= np.max(np.abs(excitation))
    rng = np.random.default_rng(_derive_u64(seed, "noise", str(spk), utt))
    env = _envelope(n, sr, rng)
    shaped = scipy.signal.lfilter([1.0], _vocal_tract_coeffs(seed, spk, utt,
                                                             traits, sr),
                                  excitation * env)
    shaped += 0.004 * rng.standard_normal(n) * (0.25 + 0.75 * env)
    peak = np.max(np.abs(shaped))
    return Waveform(0.5 * shaped / peak if peak > 0 else shaped, sr)


def write_trials_file(manifest: Manifest, path) -> None:
    """All (enroll speaker, trial utterance) pairs with target/nontarget labels."""
    with open(Path(path), "w", encoding="utf-8") as fh:
        for spk in manifest.speakers():
            for e in manifest.entries:
                label = "target" if e.speaker_id == spk else "nontarget"
                fh.write(f"{spk} {e.utterance_id} {label}\n")


def write_transcripts_file(manifest: Manifest, path) -> None:
    with open(Path(path), "w", encoding="utf-8") as fh:
        for e in manifest.entries:
            fh.write(f"{e.utterance_id}\t{e.transcript or ''}\n")


def _make_entries(out_dir: Path, seed: int, traits, speaker_range, utt_tags,
                  sample_rate: int, scrambled: bool) -> list:
    entries = []
    for s in speaker_range:
        speaker_id = f"spk{s:02d}"
        for tag in utt_tags:
            utterance_id = f"{speaker_id}-{tag}"
            wav_path = out_dir / f"{utterance_id}.wav"
            write_wav(synthesize_utterance(seed, s, tag, traits[s], sample_rate,
                                           scrambled), wav_path)
            token_rng = np.random.default_rng(
                _derive_u64(seed, "tokens", str(s), tag))
            n_tokens = int(token_rng.integers(8, 13))
            text = " ".join(TOKENS[i] for i in
                            token_rng.integers(0, VOCAB_SIZE, n_tokens))
            entries.append(ManifestEntry(utterance_id, speaker_id, wav_path, text))
    return entries


def synthesize_corpus(out_dir, n_speakers: int, utts_per_speaker: int,
                      seed: int, sample_rate: int = DEFAULT_SAMPLE_RATE,
                      scramble_contours: bool = False,
                      dataset_name: str = "synth",
                      enroll_utts_per_speaker: int = 3) -> Manifest:
    """Generate a trial corpus plus a disjoint enrollment subset.

    The trial corpus (``utts_per_speaker`` WAVs per speaker, manifest.tsv,
    trials.txt, transcripts.tsv) lands in ``out_dir``; separate enrollment
    recordings (``enroll_utts_per_speaker`` per speaker, as in the
    enrollment/trial splits of real verification protocols) land in
    ``out_dir``/enroll with their own manifest. Byte-identical for a fixed
    (seed, sizes, sample_rate).

    Needs at least 2 speakers (EER is undefined otherwise) and 2 trial
    utterances per speaker (speaker-similarity diagonals need pairs).
    """
    if n_speakers < 2:
        raise InputError(f"need >= 2 speakers (EER undefined), got {n_speakers}")
    if utts_per_speaker < 2:
        raise InputError(f"need >= 2 utterances per speaker, got {utts_per_speaker}")
    if enroll_utts_per_speaker < 1:
        raise InputError(f"need >= 1 enrollment utterance per speaker, "
                         f"got {enroll_utts_per_speaker}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    traits = _speaker_traits(seed, n_speakers)

    trial_tags = [f"utt{u:02d}" for u in range(utts_per_speaker)]
    entries = _make_entries(out_dir, seed, traits, range(n_speakers), trial_tags,
                            sample_rate, scramble_contours)
    manifest = Manifest(tuple(entries), dataset_name)
    save_manifest(manifest, out_dir / "manifest.tsv")
    write_trials_file(manifest, out_dir / "trials.txt")
    write_transcripts_file(manifest, out_dir / "transcripts.tsv")

    enroll_dir = out_dir / "enroll"
    enroll_dir.mkdir(exist_ok=True)
    enroll_tags = [f"enr{u:02d}" for u in range(enroll_utts_per_speaker)]
    enroll_entries = _make_entries(enroll_dir, seed, traits, range(n_speakers),
                                   enroll_tags, sample_rate, scramble_contours)
    save_manifest(Manifest(tuple(enroll_entries), dataset_name + "-enroll"),
                  enroll_dir / "manifest.tsv")
    return manifest
