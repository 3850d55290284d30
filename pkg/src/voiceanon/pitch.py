"""F0 estimation, pitch-correlation metric and DTW pitch realignment.

The extractor is YIN-style: cumulative-mean-normalized difference
function per 10 ms frame, absolute threshold, parabolic refinement of
the selected lag. A frame is voiced iff a lag dips below the threshold
and the frame has enough energy.

The correlation metric interpolates the shorter contour to the longer
one, searches integer lags within +-10% of the length, and takes the
maximum Pearson correlation over frames voiced in both contours; it is
undefined (None) when fewer than 5 jointly-voiced frames exist at every
lag. DTW realignment warps the anonymized contour onto the original one
(which stays untouched) using squared log-f0 costs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import Waveform, read_wav
from .errors import InputError, ProtocolError
from .protocol import Manifest

F0_MIN = 50.0
F0_MAX = 600.0
YIN_THRESHOLD = 0.15
ENERGY_FLOOR_DB = -60.0
DEFAULT_HOP_MS = 10.0
MIN_JOINT_VOICED = 5
LAG_FRACTION = 0.1
UNVOICED_PENALTY = 1.0


@dataclass(frozen=True, eq=False)
class PitchContour:
    """Framewise F0 in Hz (0 where unvoiced) with voicing flags."""

    f0: np.ndarray
    voiced: np.ndarray
    hop_ms: float

    def __post_init__(self):
        f0 = np.asarray(self.f0, dtype=np.float64)
        voiced = np.asarray(self.voiced, dtype=bool)
        if f0.shape != voiced.shape or f0.ndim != 1:
            raise InputError("f0 and voiced must be 1-D arrays of equal length")
        if np.any((f0 > 0) != voiced):
            raise InputError("f0 > 0 must hold exactly on voiced frames")
        object.__setattr__(self, "f0", f0)
        object.__setattr__(self, "voiced", voiced)

    def __len__(self) -> int:
        return len(self.f0)

    @property
    def n_voiced(self) -> int:
        return int(np.sum(self.voiced))


@dataclass(frozen=True)
class WarpPath:
    """Monotone DTW alignment; steps in {(1,0),(0,1),(1,1)}."""

    pairs: tuple

    def __post_init__(self):
        pairs = tuple((int(i), int(j)) for i, j in self.pairs)
        if not pairs or pairs[0] != (0, 0):
            raise InputError("warp path must start at (0, 0)")
        for (i0, j0), (i1, j1) in zip(pairs, pairs[1:]):
            if (i1 - i0, j1 - j0) not in ((1, 0), (0, 1), (1, 1)):
                raise InputError(f"illegal warp step ({i0},{j0}) -> ({i1},{j1})")
        object.__setattr__(self, "pairs", pairs)

    def __len__(self) -> int:
        return len(self.pairs)


def estimate_f0(w: Waveform, hop_ms: float = DEFAULT_HOP_MS,
                threshold: float = YIN_THRESHOLD) -> PitchContour:
    """YIN-style pitch track with one frame per ``hop_ms`` milliseconds."""
    sr = w.sample_rate
    if sr < 8000:
        raise InputError(f"sample rate {sr} too low for pitch analysis (need >= 8000)")
    hop = max(1, int(round(hop_ms * 1e-3 * sr)))
    tau_max = int(sr / F0_MIN)
    tau_min = max(2, int(np.floor(sr / F0_MAX)))
    window = tau_max
    frame_len = window + tau_max

    x = w.samples
    n_frames = max(1, int(np.ceil(max(len(x) - frame_len, 0) / hop)) + 1)
    total = (n_frames - 1) * hop + frame_len
    padded = np.zeros(total)
    padded[:len(x)] = x
    idx = np.arange(frame_len)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = padded[idx]

    # difference function d(tau) via cumulative energies + FFT cross-terms
    sq = np.concatenate([np.zeros((n_frames, 1)), np.cumsum(frames ** 2, axis=1)],
                        axis=1)
    taus = np.arange(tau_max + 1)
    energy_tau = sq[:, taus + window] - sq[:, taus]
    energy0 = energy_tau[:, 0:1]
    nfft = 1 << int(np.ceil(np.log2(frame_len + window)))
    spec_full = np.fft.rfft(frames, nfft)
    spec_win = np.fft.rfft(frames[:, :window], nfft)
    cross = np.fft.irfft(spec_full * np.conj(spec_win), nfft)[:, :tau_max + 1]
    diff = np.maximum(energy0 + energy_tau - 2.0 * cross, 0.0)

    cum = np.cumsum(diff[:, 1:], axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cmndf = np.where(cum > 0, diff[:, 1:] * taus[1:] / cum, 1.0)
    cmndf = np.concatenate([np.ones((n_frames, 1)), cmndf], axis=1)

    rms = np.sqrt(energy0[:, 0] / window)
    energy_floor = 10.0 ** (ENERGY_FLOOR_DB / 20.0)

    f0 = np.zeros(n_frames)
    voiced = np.zeros(n_frames, dtype=bool)
    for t in range(n_frames):
        row = cmndf[t]
        segment = row[tau_min:tau_max + 1]
        below = np.nonzero(segment < threshold)[0]
        if below.size:
            tau = int(below[0]) + tau_min
            while tau + 1 <= tau_max and row[tau + 1] < row[tau]:
                tau += 1
        else:
            tau = int(np.argmin(segment)) + tau_min
        is_voiced = below.size > 0 and rms[t] > energy_floor
        if not is_voiced:
            continue
        lag = float(tau)
        if 1 <= tau < tau_max:
            y1, y2, y3 = row[tau - 1], row[tau], row[tau + 1]
            denom = y1 - 2.0 * y2 + y3
            if denom > 0:
                lag += float(np.clip(0.5 * (y1 - y3) / denom, -0.5, 0.5))
        f0[t] = float(np.clip(sr / lag, F0_MIN, F0_MAX))
        voiced[t] = True
    return PitchContour(f0, voiced, hop_ms)


def _stretch_to(contour: PitchContour, length: int):
    """Linearly interpolate f0 (nearest-neighbor the mask) to ``length``."""
    n = len(contour)
    if n == length:
        return contour.f0, contour.voiced
    xi = np.linspace(0.0, n - 1.0, length)
    f0 = np.interp(xi, np.arange(n), contour.f0)
    voiced = contour.voiced[np.clip(np.round(xi).astype(int), 0, n - 1)]
    return f0, voiced


def _pearson(a: np.ndarray, b: np.ndarray) -> float | None:
    am = a - a.mean()
    bm = b - b.mean()
    denom = np.sqrt(np.dot(am, am) * np.dot(bm, bm))
    if denom == 0:
        return None
    return float(np.clip(np.dot(am, bm) / denom, -1.0, 1.0))


def joint_voiced_count(orig: PitchContour, anon: PitchContour) -> int:
    """Jointly-voiced frames at lag 0 after length interpolation."""
    length = max(len(orig), len(anon))
    _, v1 = _stretch_to(orig, length)
    _, v2 = _stretch_to(anon, length)
    return int(np.sum(v1 & v2))


def pitch_correlation(orig: PitchContour, anon: PitchContour) -> float | None:
    """Lag-maximized Pearson correlation over jointly-voiced frames.

    Returns None (undefined) when fewer than MIN_JOINT_VOICED frames are
    jointly voiced at every candidate lag: such utterances are excluded
    from corpus averages rather than scored.
    """
    if len(orig) == 0 or len(anon) == 0:
        raise InputError("empty pitch contour")
    length = max(len(orig), len(anon))
    x, vx = _stretch_to(orig, length)
    y, vy = _stretch_to(anon, length)
    max_lag = max(1, int(round(LAG_FRACTION * length)))
    best = None
    for lag in range(-max_lag, max_lag + 1):
        lo = max(0, lag)
        hi = min(length, length + lag)
        if hi - lo < MIN_JOINT_VOICED:
            continue
        ix = np.arange(lo, hi)
        iy = ix - lag
        joint = vx[ix] & vy[iy]
        if int(np.sum(joint)) < MIN_JOINT_VOICED:
            continue
        r = _pearson(x[ix[joint]], y[iy[joint]])
        if r is not None and (best is None or r > best):
            best = r
    return best


def dtw_align(anon: PitchContour, orig: PitchContour):
    """Warp ``anon`` onto the time axis of ``orig`` (which stays untouched).

    DTW over squared log-f0 distances for jointly-voiced frame pairs,
    a fixed penalty for voiced/unvoiced mismatches and zero cost for
    jointly-unvoiced pairs. Returns (WarpPath, warped contour) where the
    warped contour has the original's length and each original frame
    takes the mean f0 of the voiced anonymized frames mapped onto it.
    """
    n, m = len(anon), len(orig)
    if anon.n_voiced < 2 or orig.n_voiced < 2:
        raise InputError("degenerate contour: need >= 2 voiced frames for alignment")
    log_a = np.where(anon.voiced, np.log(np.maximum(anon.f0, 1e-12)), 0.0)
    log_o = np.where(orig.voiced, np.log(np.maximum(orig.f0, 1e-12)), 0.0)
    delta = log_a[:, None] - log_o[None, :]
    both = anon.voiced[:, None] & orig.voiced[None, :]
    neither = (~anon.voiced[:, None]) & (~orig.voiced[None, :])
    cost = np.where(both, delta * delta,
                    np.where(neither, 0.0, UNVOICED_PENALTY))

    inf = float("inf")
    cost_rows = cost.tolist()
    prev = [inf] * (m + 1)
    prev[0] = 0.0
    acc = [prev]
    for i in range(1, n + 1):
        row_cost = cost_rows[i - 1]
        cur = [inf] * (m + 1)
        for j in range(1, m + 1):
            best = prev[j]
            if prev[j - 1] < best:
                best = prev[j - 1]
            if cur[j - 1] < best:
                best = cur[j - 1]
            if best < inf:
                cur[j] = row_cost[j - 1] + best
        acc.append(cur)
        prev = cur

    # backtrace, preferring diagonal, then anon-advance, then orig-advance
    pairs = []
    i, j = n, m
    while i > 1 or j > 1:
        pairs.append((i - 1, j - 1))
        if i > 1 and j > 1 and acc[i - 1][j - 1] <= acc[i - 1][j] \
                and acc[i - 1][j - 1] <= acc[i][j - 1]:
            i, j = i - 1, j - 1
        elif i > 1 and acc[i - 1][j] <= acc[i][j - 1]:
            i -= 1
        else:
            j -= 1
    pairs.append((0, 0))
    path = WarpPath(tuple(reversed(pairs)))

    f0_w = np.zeros(m)
    voiced_w = np.zeros(m, dtype=bool)
    sums = np.zeros(m)
    counts = np.zeros(m)
    for ai, oj in path.pairs:
        if anon.voiced[ai]:
            sums[oj] += anon.f0[ai]
            counts[oj] += 1
    voiced_w = counts > 0
    f0_w[voiced_w] = sums[voiced_w] / counts[voiced_w]
    return path, PitchContour(f0_w, voiced_w, orig.hop_ms)


@dataclass(frozen=True)
class UtterancePitch:
    utterance_id: str
    rho: float | None
    rho_dtw: float | None
    n_voiced: int


@dataclass(frozen=True)
class CorpusPitchResult:
    mean_rho: float | None
    mean_rho_dtw: float | None
    n_undefined: int
    utterances: tuple


def corpus_pitch_correlation(orig_manifest: Manifest, anon_manifest: Manifest,
                             with_dtw: bool = False) -> CorpusPitchResult:
    """Mean pitch correlation over a corpus, pairing by utterance_id."""
    orig_by_id = orig_manifest.by_utterance()
    anon_by_id = anon_manifest.by_utterance()
    if not set(orig_by_id) & set(anon_by_id):
        raise ProtocolError("manifests share no utterance ids")
    unpaired = set(orig_by_id) ^ set(anon_by_id)
    if unpaired:
        raise ProtocolError(f"unpaired utterances: {', '.join(sorted(unpaired))}")

    rows = []
    for entry in orig_manifest.entries:
        contour_o = estimate_f0(read_wav(entry.wav_path))
        contour_a = estimate_f0(read_wav(anon_by_id[entry.utterance_id].wav_path))
        rho = pitch_correlation(contour_o, contour_a)
        rho_dtw = None
        if with_dtw:
            try:
                _, warped = dtw_align(contour_a, contour_o)
                rho_dtw = pitch_correlation(contour_o, warped)
            except InputError:
                rho_dtw = None
        rows.append(UtterancePitch(entry.utterance_id, rho, rho_dtw,
                                   joint_voiced_count(contour_o, contour_a)))

    defined = [r.rho for r in rows if r.rho is not None]
    defined_dtw = [r.rho_dtw for r in rows if r.rho_dtw is not None]
    return CorpusPitchResult(
        mean_rho=sum(defined) / len(defined) if defined else None,
        mean_rho_dtw=sum(defined_dtw) / len(defined_dtw) if defined_dtw else None,
        n_undefined=len(rows) - len(defined),
        utterances=tuple(rows))


def write_pitch_csv(result: CorpusPitchResult, path) -> None:
    """Per-utterance sidecar: utterance_id, rho, rho_dtw, n_voiced."""
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["utterance_id", "rho", "rho_dtw", "n_voiced"])
        for row in result.utterances:
            writer.writerow([
                row.utterance_id,
                "" if row.rho is None else f"{row.rho:.6f}",
                "" if row.rho_dtw is None else f"{row.rho_dtw:.6f}",
                row.n_voiced,
            ])
