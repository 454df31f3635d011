import io
import math
import struct
import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sceneloop.audio import (
    SAMPLE_RATE,
    AudioBuffer,
    MalformedContainer,
    UnsupportedEncoding,
    WindowOutOfRange,
    decode_wav,
    encode_wav,
    rms_power,
)


def stdlib_wav(samples: np.ndarray, rate: int, channels: int) -> bytes:
    """Independent 16-bit encoder via the stdlib wave module."""
    ints = np.clip(np.rint(samples * 32768.0), -32768, 32767).astype("<i2")
    bio = io.BytesIO()
    with wave.open(bio, "wb") as wf:
        wf.setnchannels(channels)
        wf.setsampwidth(2)
        wf.setframerate(rate)
        wf.writeframes(ints.tobytes())
    return bio.getvalue()


def float32_wav(samples: np.ndarray, rate: int, channels: int) -> bytes:
    payload = samples.astype("<f4").tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, 3, channels, rate, rate * 4 * channels, 4 * channels, 32,
        b"data", len(payload),
    )
    return header + payload


class TestDecode:
    def test_silence_roundtrip(self):
        data = stdlib_wav(np.zeros(SAMPLE_RATE * 2), SAMPLE_RATE, 2)
        buf = decode_wav(data)
        assert buf.length == SAMPLE_RATE
        assert buf.sample_rate == SAMPLE_RATE
        assert np.all(buf.data == 0.0)

    def test_mono_impulse_duplicated(self):
        samples = np.zeros(100)
        samples[0] = 1.0
        buf = decode_wav(stdlib_wav(samples, SAMPLE_RATE, 1))
        assert buf.data[0, 0] == pytest.approx(32767 / 32768, abs=1e-9)
        assert buf.data[0, 0] == buf.data[0, 1]
        assert np.all(buf.data[1:] == 0.0)

    def test_resample_22050_sine_preserves_rms(self):
        # oracle: dense evaluation of the source sine
        rate = 22050
        t = np.arange(2 * rate) / rate
        sine = 0.8 * np.sin(2 * np.pi * 440.0 * t)
        src_rms = math.sqrt(float(np.mean(np.square(sine))))
        buf = decode_wav(stdlib_wav(sine, rate, 1))
        assert buf.length == 2 * SAMPLE_RATE
        got = rms_power(buf, 0, buf.length).rms
        assert abs(got - src_rms) / src_rms < 0.01

    def test_float32_decode_clamps(self):
        samples = np.array([[0.5, -0.5], [2.0, -2.0], [np.nan, np.inf]])
        buf = decode_wav(float32_wav(samples, SAMPLE_RATE, 2))
        assert np.all(np.isfinite(buf.data))
        assert buf.data[1, 0] == 1.0 and buf.data[1, 1] == -1.0
        assert buf.data[2, 0] == 0.0 and buf.data[2, 1] == 1.0

    def test_bad_magic(self):
        with pytest.raises(MalformedContainer):
            decode_wav(b"OGGS" + b"\x00" * 100)

    def test_truncated_chunk(self):
        good = stdlib_wav(np.zeros(64), SAMPLE_RATE, 2)
        with pytest.raises(MalformedContainer):
            decode_wav(good[:50])

    def test_missing_data_chunk(self):
        header = struct.pack(
            "<4sI4s4sIHHIIHH",
            b"RIFF", 28, b"WAVE", b"fmt ", 16, 1, 2, SAMPLE_RATE, SAMPLE_RATE * 4, 4, 16,
        )
        with pytest.raises(MalformedContainer):
            decode_wav(header)

    def test_compressed_format_rejected(self):
        payload = b"\x00" * 8
        data = struct.pack(
            "<4sI4s4sIHHIIHH4sI",
            b"RIFF", 36 + len(payload), b"WAVE",
            b"fmt ", 16, 85, 2, SAMPLE_RATE, SAMPLE_RATE * 4, 4, 16,  # 85 = MP3
            b"data", len(payload),
        ) + payload
        with pytest.raises(UnsupportedEncoding):
            decode_wav(data)

    def test_three_channels_rejected(self):
        payload = b"\x00" * 12
        data = struct.pack(
            "<4sI4s4sIHHIIHH4sI",
            b"RIFF", 36 + len(payload), b"WAVE",
            b"fmt ", 16, 1, 3, SAMPLE_RATE, SAMPLE_RATE * 6, 6, 16,
            b"data", len(payload),
        ) + payload
        with pytest.raises(UnsupportedEncoding):
            decode_wav(data)


class TestEncode:
    def test_empty_buffer_header_only(self):
        data = encode_wav(AudioBuffer.silence(0))
        assert len(data) == 44
        assert data[0:4] == b"RIFF" and data[8:12] == b"WAVE"
        assert struct.unpack_from("<I", data, 40)[0] == 0

    def test_full_scale_pair_quantization(self):
        buf = AudioBuffer(np.array([[1.0, -1.0]]))
        data = encode_wav(buf)
        assert data[44:48] == bytes([0xFF, 0x7F, 0x00, 0x80])

    def test_roundtrip_quantization_bound(self):
        rng = np.random.default_rng(1234)
        for _ in range(50):
            buf = AudioBuffer(rng.uniform(-1.0, 1.0, size=(400, 2)))
            back = decode_wav(encode_wav(buf))
            assert back.length == buf.length
            assert np.max(np.abs(back.data - buf.data)) <= 2.0 ** -15

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=1, max_value=200), st.integers(min_value=0, max_value=2**31))
    def test_roundtrip_property(self, length, seed):
        rng = np.random.default_rng(seed)
        buf = AudioBuffer(rng.uniform(-1.0, 1.0, size=(length, 2)))
        back = decode_wav(encode_wav(buf))
        assert np.max(np.abs(back.data - buf.data)) <= 2.0 ** -15


class TestRmsPower:
    def test_silence(self):
        m = rms_power(AudioBuffer.silence(1000), 0, 1000)
        assert m.rms == 0.0
        assert m.rms_db == float("-inf")

    def test_constant_half(self):
        buf = AudioBuffer(np.full((1000, 2), 0.5))
        m = rms_power(buf, 0, 1000)
        assert m.rms == pytest.approx(0.5, abs=1e-12)
        assert m.rms_db == pytest.approx(20 * math.log10(0.5), abs=1e-9)

    def test_full_scale_sine_whole_periods(self):
        # 100 whole periods of a 441 Hz sine: analytic RMS is 1/sqrt(2)
        n = 100 * 100
        t = np.arange(n) / SAMPLE_RATE
        sine = np.sin(2 * np.pi * 441.0 * t)
        m = rms_power(AudioBuffer.from_mono(sine), 0, n)
        assert m.rms == pytest.approx(1 / math.sqrt(2), rel=1e-6)

    def test_window_checks(self):
        buf = AudioBuffer.silence(100)
        with pytest.raises(WindowOutOfRange):
            rms_power(buf, 50, 51)
        with pytest.raises(WindowOutOfRange):
            rms_power(buf, -1, 10)
        with pytest.raises(WindowOutOfRange):
            rms_power(buf, 0, 0)

    @settings(max_examples=30, deadline=None)
    @given(
        st.floats(min_value=0.01, max_value=1.0),
        st.integers(min_value=0, max_value=2**31),
    )
    def test_scale_equivariance(self, scale, seed):
        rng = np.random.default_rng(seed)
        base = rng.uniform(-1.0, 1.0, size=(256, 2))
        a = rms_power(AudioBuffer(base), 0, 256).rms
        b = rms_power(AudioBuffer(base * scale), 0, 256).rms
        assert b == pytest.approx(scale * a, rel=1e-9)


class TestBufferInvariants:
    def test_rejects_nan(self):
        data = np.zeros((4, 2))
        data[1, 0] = np.nan
        with pytest.raises(ValueError):
            AudioBuffer(data)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            AudioBuffer(np.full((4, 2), 1.5))

    def test_immutable(self):
        buf = AudioBuffer.silence(8)
        with pytest.raises(ValueError):
            buf.data[0, 0] = 1.0
