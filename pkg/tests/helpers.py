"""Shared test utilities: signal builders and independent oracles."""

import numpy as np

from voiceanon.audio_io import Waveform


def sine(freq: float, duration: float = 1.0, sr: int = 16000,
         amplitude: float = 0.5) -> Waveform:
    t = np.arange(int(duration * sr)) / sr
    return Waveform(amplitude * np.sin(2 * np.pi * freq * t), sr)


def sawtooth(freq: float, duration: float = 1.0, sr: int = 16000,
             amplitude: float = 0.4) -> Waveform:
    phase = np.cumsum(np.full(int(duration * sr), freq / sr))
    return Waveform(amplitude * (2 * np.mod(phase, 1.0) - 1.0), sr)


def white_noise(duration: float = 1.0, sr: int = 16000, seed: int = 0,
                amplitude: float = 0.3) -> Waveform:
    rng = np.random.default_rng(seed)
    return Waveform(amplitude * rng.standard_normal(int(duration * sr)), sr)


def dominant_frequency(w: Waveform) -> float:
    """FFT-peak oracle: frequency of the strongest spectral bin."""
    spectrum = np.abs(np.fft.rfft(w.samples))
    return float(np.argmax(spectrum) * w.sample_rate / len(w.samples))


def brute_force_eer(scores, is_target):
    """Threshold-scan oracle for the EER.

    Scans candidate thresholds at midpoints of consecutive distinct
    scores plus sentinels beyond both ends, collects the (P_fa, P_miss)
    staircase vertices, and interpolates linearly at the crossing.
    """
    scores = np.asarray(scores, dtype=float)
    is_target = np.asarray(is_target, dtype=bool)
    tgt = scores[is_target]
    non = scores[~is_target]
    distinct = sorted(set(scores.tolist()))
    candidates = [distinct[0] - 1.0]
    candidates += [0.5 * (a + b) for a, b in zip(distinct, distinct[1:])]
    candidates += [distinct[-1] + 1.0]
    vertices = []
    for theta in candidates:
        p_fa = float(np.sum(non >= theta)) / len(non)
        p_miss = float(np.sum(tgt < theta)) / len(tgt)
        vertices.append((p_fa, p_miss))
    for (fa0, ms0), (fa1, ms1) in zip(vertices, vertices[1:]):
        d0, d1 = ms0 - fa0, ms1 - fa1
        if d0 < 0 <= d1:
            t = 0.0 if d1 == d0 else -d0 / (d1 - d0)
            return fa0 + t * (fa1 - fa0)
    fa0, ms0 = vertices[0]
    return fa0 if ms0 - fa0 >= 0 else vertices[-1][0]


def recursive_edit_distance(ref, hyp, _cache=None):
    """Exhaustive-recursion Levenshtein distance (memoized)."""
    if _cache is None:
        _cache = {}
    key = (ref, hyp)
    if key in _cache:
        return _cache[key]
    if not ref:
        result = len(hyp)
    elif not hyp:
        result = len(ref)
    else:
        result = min(
            recursive_edit_distance(ref[1:], hyp[1:], _cache) + (ref[0] != hyp[0]),
            recursive_edit_distance(ref[1:], hyp, _cache) + 1,
            recursive_edit_distance(ref, hyp[1:], _cache) + 1)
    _cache[key] = result
    return result


def monotone_warp_indices(n_out: int, n_in: int, rng) -> np.ndarray:
    """Random monotone non-decreasing index map covering both endpoints."""
    anchors = np.sort(rng.uniform(0.15, 0.85, 3))
    xs = np.concatenate([[0.0], anchors, [1.0]])
    ys = np.sort(rng.uniform(0.0, 1.0, 5))
    ys[0], ys[-1] = 0.0, 1.0
    positions = np.interp(np.linspace(0, 1, n_out), xs, ys) * (n_in - 1)
    return np.clip(np.round(positions).astype(int), 0, n_in - 1)


def nonlinear_warp_positions(n_out: int, rng) -> np.ndarray:
    """Monotone warp of [0, 1] with alternating compress/stretch segments.

    Decisively non-linear (a linear lag shift cannot undo it), with
    bounded slopes so the warped samples still resolve the signal.
    """
    n_seg = int(rng.integers(3, 6))
    bounds = np.concatenate([[0.0], np.sort(rng.uniform(0.15, 0.85, n_seg - 1)),
                             [1.0]])
    slow_first = rng.random() < 0.5
    slopes = [rng.uniform(0.35, 0.6) if (k % 2 == 0) == slow_first
              else rng.uniform(1.7, 2.8) for k in range(n_seg)]
    knots = [0.0]
    for k in range(n_seg):
        knots.append(knots[-1] + slopes[k] * (bounds[k + 1] - bounds[k]))
    knots = np.array(knots) / knots[-1]
    return np.interp(np.linspace(0.0, 1.0, n_out), bounds, knots)
