"""Text-to-music backend abstraction with a deterministic mock synthesizer.

Every section is requested as a 15 s stereo 44.1 kHz clip; the backend
returns WAV bytes that are decoded and contract-checked before anything
reaches the scheduler. The mock synthesizer is a pure function of the
prompt text and tempo hint, tempo-locked so bar-alignment properties are
testable end to end.
"""

from __future__ import annotations

import hashlib
import re
import time
from dataclasses import dataclass

import numpy as np
import requests
from scipy.signal import lfilter

from .audio import SAMPLE_RATE, AudioBuffer, decode_wav, encode_wav
from .captions import BackendUnavailable
from .prompts import INSTRUMENTS

CLIP_SECONDS = 15.0
CLIP_SAMPLES = round(CLIP_SECONDS * SAMPLE_RATE)
DURATION_TOLERANCE = 0.01  # +-1% of the contract length

CLICK_AMPLITUDE = 0.8
NOISE_BED_DB = -30.0
MOODY_GAIN_DB = -6.0


class ContractViolation(ValueError):
    """Decoded audio does not meet the fixed generation contract."""


class GenerationTimeout(RuntimeError):
    """Backend did not answer within the configured window."""


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    bpm_hint: float
    duration_seconds: float = CLIP_SECONDS
    sample_rate: int = SAMPLE_RATE
    channels: int = 2
    seed: int | None = None

    def __post_init__(self):
        # generation parameters are held constant for every section
        if self.duration_seconds != CLIP_SECONDS:
            raise ValueError(f"duration is fixed at {CLIP_SECONDS}s")
        if self.sample_rate != SAMPLE_RATE or self.channels != 2:
            raise ValueError("output contract is stereo 44100 Hz")
        if self.bpm_hint <= 0:
            raise ValueError("bpm_hint must be positive")


@dataclass(frozen=True)
class GenerationResult:
    audio: AudioBuffer
    request: GenerationRequest
    backend_latency: float
    cost_units: float


_WORD_RE = re.compile(r"[a-z]+")


def _prompt_words(prompt: str) -> set[str]:
    return set(_WORD_RE.findall(prompt.lower()))


def _rng_for(req: GenerationRequest) -> np.random.Generator:
    key = f"{req.prompt}|{req.bpm_hint:.6f}|{req.seed}"
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def _click_track(bpm: float, n: int) -> np.ndarray:
    out = np.zeros(n)
    beat = 60.0 / bpm
    click = CLICK_AMPLITUDE * np.exp(-np.arange(64) / 12.0)
    i = 0
    while True:
        pos = round(i * beat * SAMPLE_RATE)
        if pos >= n:
            break
        span = min(64, n - pos)
        out[pos : pos + span] = np.maximum(out[pos : pos + span], click[:span])
        i += 1
    return out


def _gated_bass(bpm: float, n: int) -> np.ndarray:
    t = np.arange(n) / SAMPLE_RATE
    tone = 0.35 * np.sin(2 * np.pi * 55.0 * t)
    bar = 240.0 / bpm
    phase = np.mod(t, bar)
    gate = (phase < bar / 2).astype(np.float64)
    ramp = round(0.005 * SAMPLE_RATE)
    if ramp > 1:
        kernel = np.ones(ramp) / ramp
        gate = np.convolve(gate, kernel, mode="same")
    return tone * gate


def _key_pad(n: int) -> np.ndarray:
    t = np.arange(n) / SAMPLE_RATE
    stack = sum(0.12 * np.sin(2 * np.pi * f * t) for f in (220.0, 275.0, 330.0))
    attack = np.minimum(1.0, t / 0.1)
    return stack * attack


def _guitar_pattern(bpm: float, n: int) -> np.ndarray:
    t = np.arange(n) / SAMPLE_RATE
    saw = 2.0 * np.mod(110.0 * t, 1.0) - 1.0
    a = 1.0 - np.exp(-2 * np.pi * 1200.0 / SAMPLE_RATE)
    filtered = lfilter([a], [1.0, -(1.0 - a)], saw)
    eighth = 30.0 / bpm
    env = np.exp(-np.mod(t, eighth) / 0.12)
    return 0.25 * filtered * env


def mock_synthesize(req: GenerationRequest) -> AudioBuffer:
    """Deterministic stand-in for the generative model.

    Percussion clicks on the beat grid, bass is a bar-gated 55 Hz sine,
    keys a sustained sine stack with a 0.1 s attack, guitar a filtered saw
    pattern. A "moody" prompt drops the level 6 dB; no instruments at all
    yields a -30 dBFS noise bed.
    """
    n = CLIP_SAMPLES
    words = _prompt_words(req.prompt)
    instruments = [name for name in INSTRUMENTS if name in words]

    if not instruments:
        rng = _rng_for(req)
        noise = rng.standard_normal(n)
        noise *= 10 ** (NOISE_BED_DB / 20.0) / np.sqrt(np.mean(np.square(noise)))
        mix = noise
    else:
        mix = np.zeros(n)
        if "percussion" in instruments:
            mix = mix + _click_track(req.bpm_hint, n)
        if "bass" in instruments:
            mix = mix + _gated_bass(req.bpm_hint, n)
        if "keys" in instruments:
            mix = mix + _key_pad(n)
        if "guitar" in instruments:
            mix = mix + _guitar_pattern(req.bpm_hint, n)

    if "moody" in words:
        mix = mix * 10 ** (MOODY_GAIN_DB / 20.0)

    mix = np.clip(mix, -1.0, 1.0)
    return AudioBuffer(np.column_stack([mix, mix]))


class MockGenerationBackend:
    """Pure in-process backend: synthesize then encode, no I/O."""

    def generate_wav(self, req: GenerationRequest, timeout: float) -> bytes:
        return encode_wav(mock_synthesize(req))


class HttpGenerationBackend:
    """Provider HTTP adapter: JSON request in, WAV bytes out."""

    def __init__(self, url: str, api_key: str = ""):
        self.url = url
        self.api_key = api_key

    def generate_wav(self, req: GenerationRequest, timeout: float) -> bytes:
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        body = {
            "prompt": req.prompt,
            "duration_seconds": req.duration_seconds,
            "sample_rate": req.sample_rate,
            "channels": req.channels,
            "seed": req.seed,
        }
        try:
            resp = requests.post(self.url, json=body, headers=headers, timeout=timeout)
            resp.raise_for_status()
        except requests.Timeout as exc:
            raise GenerationTimeout(f"generation timed out after {timeout}s") from exc
        except requests.RequestException as exc:
            raise BackendUnavailable(f"generation backend failed: {exc}") from exc
        return resp.content


def generate(
    req: GenerationRequest,
    backend,
    timeout: float = 30.0,
    cost_units: float = 1.0,
) -> GenerationResult:
    """Run one generation, retrying once on a transient backend failure."""
    started = time.monotonic()
    try:
        wav = backend.generate_wav(req, timeout)
    except BackendUnavailable:
        wav = backend.generate_wav(req, timeout)
    audio = decode_wav(wav)

    expected = round(req.duration_seconds * SAMPLE_RATE)
    if abs(audio.length - expected) > DURATION_TOLERANCE * expected:
        raise ContractViolation(
            f"duration {audio.duration:.2f}s outside +-1% of {req.duration_seconds}s"
        )
    return GenerationResult(
        audio=audio,
        request=req,
        backend_latency=time.monotonic() - started,
        cost_units=cost_units,
    )
