"""PCM audio I/O, framing and resampling.

Everything downstream works on :class:`Waveform`: mono float samples in
[-1, 1] plus a sample rate. Files are plain RIFF/WAVE, 16-bit PCM, one
channel; anything else is rejected.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InputError, ParameterError

DEFAULT_SAMPLE_RATE = 16000

_PCM_SCALE = 32768.0


@dataclass(frozen=True)
class Waveform:
    """Mono audio: ``samples`` in [-1, 1] (float64) at ``sample_rate`` Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise InputError(f"waveform must be mono (1-D), got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise InputError("waveform contains non-finite samples")
        if int(self.sample_rate) <= 0:
            raise InputError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class FrameConfig:
    """Analysis framing: lengths in samples, window in {rectangular, hann}."""

    frame_len: int
    hop: int
    window: str = "hann"

    def __post_init__(self):
        if not (0 < self.hop <= self.frame_len):
            raise ParameterError(
                f"need 0 < hop <= frame_len, got hop={self.hop} frame_len={self.frame_len}")
        if self.window not in ("rectangular", "hann"):
            raise ParameterError(f"unknown window {self.window!r}")


def window_values(window: str, n: int) -> np.ndarray:
    """Window samples for a frame of length ``n`` (hann is periodic)."""
    if window == "rectangular":
        return np.ones(n)
    if window == "hann":
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
    raise ParameterError(f"unknown window {window!r}")


def read_wav(path) -> Waveform:
    """Read a 16-bit PCM mono WAV file.

    Raises FormatError for anything that is not RIFF/WAVE PCM, 16-bit,
    single channel. Samples are scaled to [-1, 1] by dividing by 32768.
    """
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wf:
            n_channels = wf.getnchannels()
            sampwidth = wf.getsampwidth()
            comptype = wf.getcomptype()
            sample_rate = wf.getframerate()
            n_frames = wf.getnframes()
            raw = wf.readframes(n_frames)
    except FileNotFoundError:
        raise
    except (wave.Error, EOFError) as exc:
        raise FormatError(f"{path}: malformed WAV file: {exc}") from exc
    if comptype != "NONE":
        raise FormatError(f"{path}: compressed WAV ({comptype}) not supported")
    if n_channels != 1:
        raise FormatError(f"{path}: expected mono, got {n_channels} channels")
    if sampwidth != 2:
        raise FormatError(f"{path}: expected 16-bit PCM, got {8 * sampwidth}-bit")
    data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / _PCM_SCALE
    return Waveform(data, sample_rate)


def write_wav(w: Waveform, path) -> None:
    """Write ``w`` as 16-bit PCM mono. Amplitudes outside [-1, 1] are clipped."""
    scaled = np.clip(w.samples, -1.0, 1.0) * _PCM_SCALE
    pcm = np.clip(np.round(scaled), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(w.sample_rate)
        wf.writeframes(pcm.tobytes())


def frame_signal(w: Waveform, cfg: FrameConfig) -> np.ndarray:
    """Slice ``w`` into windowed frames, shape (n_frames, frame_len).

    Frame k covers samples [k*hop, k*hop + frame_len); the tail is
    zero-padded. A signal shorter than one frame yields a single
    zero-padded frame.
    """
    x = w.samples
    n = len(x)
    if n <= cfg.frame_len:
        n_frames = 1
    else:
        n_frames = int(np.ceil((n - cfg.frame_len) / cfg.hop)) + 1
    total = (n_frames - 1) * cfg.hop + cfg.frame_len
    padded = np.zeros(total)
    padded[:n] = x
    idx = np.arange(cfg.frame_len)[None, :] + cfg.hop * np.arange(n_frames)[:, None]
    return padded[idx] * window_values(cfg.window, cfg.frame_len)[None, :]


_SINC_TAPS = 32   # taps per side
_KAISER_BETA = 8.0


def resample(w: Waveform, ratio: float) -> Waveform:
    """Windowed-sinc resampling; output length = round(len * ratio).

    ``ratio`` is a playback-rate change: the sample rate field is kept,
    so the pitch of the content scales by 1/ratio. Kaiser window
    (beta 8), 32 taps per side, cutoff lowered when decimating.
    """
    if not (0.25 <= ratio <= 4.0):
        raise ParameterError(f"resample ratio {ratio} outside [0.25, 4]")
    x = w.samples
    n_out = int(round(len(x) * ratio))
    if n_out == 0 or len(x) == 0:
        return Waveform(np.zeros(0), w.sample_rate)

    t = np.arange(n_out) / ratio
    base = np.floor(t).astype(np.intp)
    frac = t - base

    cutoff = min(1.0, ratio)
    k = np.arange(-_SINC_TAPS + 1, _SINC_TAPS + 1)          # 64 taps
    u = frac[:, None] - k[None, :]                          # (n_out, 64)
    kernel = cutoff * np.sinc(cutoff * u)
    arg = 1.0 - (u / _SINC_TAPS) ** 2
    kernel *= np.where(arg > 0, np.i0(_KAISER_BETA * np.sqrt(np.maximum(arg, 0.0))), 0.0)
    kernel /= np.i0(_KAISER_BETA)

    pad = _SINC_TAPS
    xp = np.concatenate([np.zeros(pad), x, np.zeros(pad + 1)])
    gather = xp[base[:, None] + k[None, :] + pad]
    return Waveform(np.sum(gather * kernel, axis=1), w.sample_rate)
