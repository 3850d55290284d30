import wave

import numpy as np
import pytest

from voiceanon.audio_io import (FrameConfig, Waveform, frame_signal, read_wav,
                                resample, window_values, write_wav)
from voiceanon.errors import FormatError, InputError, ParameterError

from helpers import dominant_frequency, sine, white_noise


class TestWaveform:
    def test_rejects_nonfinite(self):
        with pytest.raises(InputError):
            Waveform(np.array([0.0, np.nan]), 16000)

    def test_rejects_multichannel(self):
        with pytest.raises(InputError):
            Waveform(np.zeros((10, 2)), 16000)

    def test_rejects_bad_rate(self):
        with pytest.raises(InputError):
            Waveform(np.zeros(10), 0)


class TestWavIO:
    def test_zero_file(self, tmp_path):
        path = tmp_path / "z.wav"
        write_wav(Waveform(np.zeros(160), 16000), path)
        w = read_wav(path)
        assert len(w) == 160
        assert w.sample_rate == 16000
        assert np.all(w.samples == 0.0)

    def test_fullscale_sample_scaling(self, tmp_path):
        path = tmp_path / "f.wav"
        with wave.open(str(path), "wb") as wf:
            wf.setnchannels(1)
            wf.setsampwidth(2)
            wf.setframerate(16000)
            wf.writeframes(np.array([32767], dtype="<i2").tobytes())
        w = read_wav(path)
        assert w.samples[0] == pytest.approx(32767 / 32768)

    def test_round_trip_quantization(self, tmp_path):
        rng = np.random.default_rng(3)
        for trial in range(5):
            x = rng.uniform(-0.99, 0.99, 1000)
            path = tmp_path / f"r{trial}.wav"
            write_wav(Waveform(x, 16000), path)
            back = read_wav(path)
            assert len(back) == 1000
            assert np.max(np.abs(back.samples - x)) <= 1.0 / 32768

    def test_write_read_idempotent(self, tmp_path):
        x = white_noise(0.1, seed=5)
        p1, p2 = tmp_path / "a.wav", tmp_path / "b.wav"
        write_wav(x, p1)
        first = read_wav(p1)
        write_wav(first, p2)
        assert np.array_equal(read_wav(p2).samples, first.samples)

    def test_two_sample_file(self, tmp_path):
        path = tmp_path / "two.wav"
        write_wav(Waveform(np.zeros(2), 16000), path)
        assert len(read_wav(path)) == 2

    def test_clipping(self, tmp_path):
        path = tmp_path / "c.wav"
        write_wav(Waveform(np.array([2.0, -2.0]), 16000), path)
        w = read_wav(path)
        assert w.samples[0] == pytest.approx(32767 / 32768)
        assert w.samples[1] == pytest.approx(-1.0)

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "bad.wav"
        path.write_bytes(b"RIFF\x10\x00\x00\x00JUNKjunkjunk")
        with pytest.raises(FormatError):
            read_wav(path)

    def test_rejects_stereo(self, tmp_path):
        path = tmp_path / "st.wav"
        with wave.open(str(path), "wb") as wf:
            wf.setnchannels(2)
            wf.setsampwidth(2)
            wf.setframerate(16000)
            wf.writeframes(np.zeros(40, dtype="<i2").tobytes())
        with pytest.raises(FormatError, match="mono"):
            read_wav(path)

    def test_rejects_8bit(self, tmp_path):
        path = tmp_path / "b8.wav"
        with wave.open(str(path), "wb") as wf:
            wf.setnchannels(1)
            wf.setsampwidth(1)
            wf.setframerate(16000)
            wf.writeframes(bytes(100))
        with pytest.raises(FormatError, match="16-bit"):
            read_wav(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_wav(tmp_path / "nope.wav")


class TestFrameSignal:
    def test_frame_count(self):
        # ceil((100 - 40) / 20) + 1 = 4 frames
        w = Waveform(np.arange(100) / 100.0, 16000)
        frames = frame_signal(w, FrameConfig(40, 20, "rectangular"))
        assert frames.shape == (4, 40)

    def test_tail_zero_padded(self):
        w = Waveform(np.ones(101), 16000)
        frames = frame_signal(w, FrameConfig(40, 20, "rectangular"))
        assert frames.shape == (5, 40)
        assert np.all(frames[4, 21:] == 0.0)
        assert np.all(frames[4, :21] == 1.0)

    def test_partition_identity(self):
        x = white_noise(0.02, seed=1)
        frames = frame_signal(x, FrameConfig(64, 64, "rectangular"))
        rebuilt = frames.reshape(-1)[:len(x)]
        assert np.array_equal(rebuilt, x.samples)

    def test_hann_on_ones(self):
        w = Waveform(np.ones(64), 16000)
        frames = frame_signal(w, FrameConfig(64, 64, "hann"))
        assert np.allclose(frames[0], window_values("hann", 64))

    def test_short_signal_single_padded_frame(self):
        w = Waveform(np.ones(10), 16000)
        frames = frame_signal(w, FrameConfig(32, 16, "rectangular"))
        assert frames.shape == (1, 32)
        assert np.all(frames[0, 10:] == 0.0)

    def test_bad_config(self):
        with pytest.raises(ParameterError):
            FrameConfig(32, 0)
        with pytest.raises(ParameterError):
            FrameConfig(32, 40)
        with pytest.raises(ParameterError):
            FrameConfig(32, 16, "hamming")


class TestResample:
    def test_identity_ratio(self):
        w = sine(220, 0.5)
        out = resample(w, 1.0)
        assert len(out) == len(w)
        assert np.max(np.abs(out.samples - w.samples)) < 1e-6

    def test_half_ratio_doubles_pitch(self):
        out = resample(sine(220, 1.0), 0.5)
        assert abs(dominant_frequency(out) - 440.0) < 2.0

    def test_length_rule(self):
        out = resample(sine(100, 1.0), 2.0)
        assert len(out) == 32000

    def test_ratio_bounds(self):
        w = sine(220, 0.1)
        with pytest.raises(ParameterError):
            resample(w, 0.2)
        with pytest.raises(ParameterError):
            resample(w, 4.5)

    def test_round_trip_correlation(self):
        w = sine(440, 0.5)
        for ratio in (0.5, 0.75, 1.5, 2.0):
            back = resample(resample(w, ratio), 1.0 / ratio)
            n = min(len(back), len(w))
            r = np.corrcoef(back.samples[:n], w.samples[:n])[0, 1]
            assert r > 0.999, f"ratio {ratio}: correlation {r}"

    def test_sample_rate_unchanged(self):
        out = resample(sine(220, 0.25), 0.5)
        assert out.sample_rate == 16000
