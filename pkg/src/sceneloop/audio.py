"""Stereo audio buffers, RIFF/WAVE codec, and RMS power metrics.

Everything downstream of decode works on immutable stereo 44.1 kHz buffers
with float samples in [-1, 1]. Interchange is 16-bit PCM WAV; mono input is
duplicated and foreign sample rates are brought to 44100 Hz by linear
interpolation (adequate at desk scale; swap-in point for a better resampler).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

SAMPLE_RATE = 44100

_PCM_SCALE = 32768.0  # encode: round(s * 32768) clipped to int16 range


class MalformedContainer(ValueError):
    """Bytes are not a well-formed RIFF/WAVE container."""


class UnsupportedEncoding(ValueError):
    """Container is valid but the audio encoding is not PCM16/float32 mono/stereo."""


class WindowOutOfRange(IndexError):
    """Requested analysis window falls outside the buffer."""


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    """Immutable stereo buffer: ``data`` has shape (length, 2), samples in [-1, 1]."""

    data: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError(f"expected shape (n, 2), got {arr.shape}")
        if arr.size and not np.all(np.isfinite(arr)):
            raise ValueError("samples must be finite")
        if arr.size and (arr.max(initial=0.0) > 1.0 or arr.min(initial=0.0) < -1.0):
            raise ValueError("samples must lie in [-1, 1]")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def length(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return 2

    @property
    def duration(self) -> float:
        return self.length / self.sample_rate

    @staticmethod
    def silence(length: int) -> "AudioBuffer":
        return AudioBuffer(np.zeros((length, 2)))

    @staticmethod
    def from_mono(samples: np.ndarray) -> "AudioBuffer":
        samples = np.asarray(samples, dtype=np.float64)
        return AudioBuffer(np.column_stack([samples, samples]))


@dataclass(frozen=True)
class PowerMeasure:
    """Joint-channel RMS over a window; ``rms_db`` is -inf for silence."""

    window_start: int
    window_len: int
    rms: float
    rms_db: float


def rms_power(buf: AudioBuffer, start: int, length: int) -> PowerMeasure:
    """RMS over both channels of ``buf`` in [start, start+length)."""
    if start < 0 or length < 1 or start + length > buf.length:
        raise WindowOutOfRange(
            f"window [{start}, {start + length}) outside buffer of {buf.length}"
        )
    window = buf.data[start : start + length]
    rms = float(np.sqrt(np.mean(np.square(window))))
    rms_db = float("-inf") if rms == 0.0 else 20.0 * math.log10(rms)
    return PowerMeasure(window_start=start, window_len=length, rms=rms, rms_db=rms_db)


def resample_linear(samples: np.ndarray, src_rate: int, dst_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Linear-interpolation resample of an (n, ch) array, duration preserving."""
    if src_rate == dst_rate:
        return samples
    n = samples.shape[0]
    if n == 0:
        return samples
    out_n = max(1, round(n * dst_rate / src_rate))
    src_t = np.arange(n) / src_rate
    dst_t = np.arange(out_n) / dst_rate
    out = np.empty((out_n, samples.shape[1]))
    for ch in range(samples.shape[1]):
        out[:, ch] = np.interp(dst_t, src_t, samples[:, ch])
    return out


def _parse_chunks(data: bytes):
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedContainer("missing RIFF/WAVE magic")
    chunks = {}
    offset = 12
    while offset + 8 <= len(data):
        cid = data[offset : offset + 4]
        (size,) = struct.unpack_from("<I", data, offset + 4)
        payload_end = offset + 8 + size
        if payload_end > len(data):
            raise MalformedContainer(f"chunk {cid!r} overruns container")
        if cid not in chunks:  # first occurrence wins
            chunks[cid] = data[offset + 8 : payload_end]
        offset = payload_end + (size & 1)  # chunks are word aligned
    return chunks


def decode_wav(data: bytes) -> AudioBuffer:
    """Decode PCM16 / IEEE-float32 WAV bytes into a stereo 44.1 kHz buffer.

    Mono is duplicated to both channels; other sample rates are linearly
    resampled; float samples are clamped to [-1, 1] and non-finite values
    zeroed, so the result always satisfies the AudioBuffer invariants.
    """
    chunks = _parse_chunks(data)
    if b"fmt " not in chunks or b"data" not in chunks:
        raise MalformedContainer("missing fmt or data chunk")
    fmt = chunks[b"fmt "]
    if len(fmt) < 16:
        raise MalformedContainer("fmt chunk too short")
    audio_format, channels, sample_rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if channels not in (1, 2):
        raise UnsupportedEncoding(f"{channels} channels unsupported")
    if sample_rate <= 0:
        raise MalformedContainer("bad sample rate")
    payload = chunks[b"data"]

    if audio_format == 1 and bits == 16:
        frame = 2 * channels
        if len(payload) % frame:
            raise MalformedContainer("data chunk not a whole number of frames")
        raw = np.frombuffer(payload, dtype="<i2").astype(np.float64) / _PCM_SCALE
    elif audio_format == 3 and bits == 32:
        frame = 4 * channels
        if len(payload) % frame:
            raise MalformedContainer("data chunk not a whole number of frames")
        raw = np.frombuffer(payload, dtype="<f4").astype(np.float64)
        raw = np.nan_to_num(raw, nan=0.0, posinf=1.0, neginf=-1.0)
        raw = np.clip(raw, -1.0, 1.0)
    else:
        raise UnsupportedEncoding(f"format {audio_format} / {bits}-bit unsupported")

    samples = raw.reshape(-1, channels)
    if channels == 1:
        samples = np.repeat(samples, 2, axis=1)
    samples = resample_linear(samples, sample_rate)
    return AudioBuffer(np.clip(samples, -1.0, 1.0))


def encode_wav(buf: AudioBuffer) -> bytes:
    """Encode a buffer as stereo 16-bit PCM little-endian WAV bytes."""
    ints = np.clip(np.rint(buf.data * _PCM_SCALE), -32768, 32767).astype("<i2")
    payload = ints.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(payload),
        b"WAVE",
        b"fmt ",
        16,
        1,  # PCM
        2,
        SAMPLE_RATE,
        SAMPLE_RATE * 4,  # byte rate: 2 channels * 2 bytes
        4,  # block align
        16,
        b"data",
        len(payload),
    )
    return header + payload
