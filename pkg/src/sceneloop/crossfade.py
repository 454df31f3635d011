"""Crossfade envelopes, splice mixing, and cost-based envelope selection.

Two envelope families are supported: the equal-power cos/sin pair (the
default, constant instantaneous power) and a power-law pair for sparser
material. A splice between two sources is scored by a loudness-mismatch
objective plus a weighted transient penalty, and the best family/parameter
is picked over a small candidate grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .audio import SAMPLE_RATE, AudioBuffer, PowerMeasure, rms_power

EQUAL_POWER_TAG = "equal_power"
POWER_LAW_TAG = "power_law"

DEFAULT_ALPHA = 2.5
ALPHA_GRID = (1.5, 2.0, 2.5, 3.0)
DEFAULT_TAU = 0.05
DEFAULT_GUARD = 256


class IndexOutOfWindow(IndexError):
    """Gain requested outside [0, N]."""


class WindowExceedsBuffer(ValueError):
    """Splice window is longer than one of the inputs."""


@dataclass(frozen=True)
class EnvelopeFamily:
    """Envelope family tag plus the power-law exponent (ignored for equal-power)."""

    tag: str
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if self.tag not in (EQUAL_POWER_TAG, POWER_LAW_TAG):
            raise ValueError(f"unknown envelope family {self.tag!r}")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")

    @staticmethod
    def equal_power() -> "EnvelopeFamily":
        return EnvelopeFamily(EQUAL_POWER_TAG)

    @staticmethod
    def power_law(alpha: float = DEFAULT_ALPHA) -> "EnvelopeFamily":
        return EnvelopeFamily(POWER_LAW_TAG, alpha)


@dataclass(frozen=True)
class CrossfadePlan:
    """Chosen family plus the splice window in samples and seconds."""

    family: EnvelopeFamily
    window_len_samples: int
    window_len_seconds: float

    def __post_init__(self):
        expected = max(1, round(self.window_len_seconds * SAMPLE_RATE))
        if self.window_len_samples != expected:
            raise ValueError(
                f"window_len_samples {self.window_len_samples} != "
                f"round({self.window_len_seconds} * {SAMPLE_RATE})"
            )

    @staticmethod
    def from_seconds(family: EnvelopeFamily, seconds: float) -> "CrossfadePlan":
        return CrossfadePlan(family, max(1, round(seconds * SAMPLE_RATE)), seconds)


@dataclass(frozen=True)
class SpliceContext:
    """Context for envelope selection at one splice."""

    delta_p_db: float
    section_role: str
    p_target: PowerMeasure
    transient_weight: float = 1.0

    def __post_init__(self):
        if self.transient_weight < 0:
            raise ValueError("transient_weight must be nonnegative")


@dataclass(frozen=True)
class SpliceCost:
    loudness_mismatch: float
    transient_cost: float
    transient_weight: float
    total: float


def envelope_gains(family: EnvelopeFamily, n: int, window: int) -> tuple[float, float]:
    """(g_out, g_in) at sample n of an n in [0, window] crossfade."""
    if window < 1:
        raise IndexOutOfWindow("window must be >= 1")
    if n < 0 or n > window:
        raise IndexOutOfWindow(f"n={n} outside [0, {window}]")
    u = n / window
    if family.tag == EQUAL_POWER_TAG:
        return math.cos(math.pi * u / 2.0), math.sin(math.pi * u / 2.0)
    return (1.0 - u) ** family.alpha, u ** family.alpha


def envelope_curves(family: EnvelopeFamily, window: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized gains for n = 0 .. window-1 (the overlap region)."""
    u = np.arange(window) / window
    if family.tag == EQUAL_POWER_TAG:
        return np.cos(np.pi * u / 2.0), np.sin(np.pi * u / 2.0)
    return (1.0 - u) ** family.alpha, u ** family.alpha


def splice(outgoing: AudioBuffer, incoming: AudioBuffer, plan: CrossfadePlan) -> AudioBuffer:
    """Mix the last N samples of ``outgoing`` into the first N of ``incoming``.

    Returns the N-sample overlap region, clamped to [-1, 1] after mixing.
    """
    n = plan.window_len_samples
    if outgoing.length < n or incoming.length < n:
        raise WindowExceedsBuffer(
            f"window {n} exceeds inputs ({outgoing.length}, {incoming.length})"
        )
    g_out, g_in = envelope_curves(plan.family, n)
    tail = outgoing.data[outgoing.length - n :]
    head = incoming.data[:n]
    mixed = tail * g_out[:, None] + head * g_in[:, None]
    return AudioBuffer(np.clip(mixed, -1.0, 1.0))


def transient_cost(z: np.ndarray, tau: float = DEFAULT_TAU) -> float:
    """Thresholded squared first-difference energy of a mono signal.

    ``z`` should cover the overlap plus any guard context on each side so
    that pre/post-splice clicks are caught.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.size < 2:
        return 0.0
    deltas = np.abs(np.diff(z))
    excess = np.maximum(0.0, deltas - tau)
    return float(np.sum(np.square(excess)))


def _mono(data: np.ndarray) -> np.ndarray:
    return data.mean(axis=1)


def build_splice_context(
    outgoing: AudioBuffer,
    incoming: AudioBuffer,
    window: int,
    section_role: str,
    transient_weight: float = 1.0,
) -> SpliceContext:
    """Measure the power relationship between the two splice windows."""
    if outgoing.length < window or incoming.length < window:
        raise WindowExceedsBuffer("window exceeds splice inputs")
    out_power = rms_power(outgoing, outgoing.length - window, window)
    in_power = rms_power(incoming, 0, window)
    delta_p_db = in_power.rms_db - out_power.rms_db  # may be +-inf on silence
    if math.isnan(delta_p_db):  # both silent
        delta_p_db = 0.0
    return SpliceContext(
        delta_p_db=delta_p_db,
        section_role=section_role,
        p_target=out_power,
        transient_weight=transient_weight,
    )


def _evaluate_candidate(
    family: EnvelopeFamily,
    mono_out: np.ndarray,
    mono_in: np.ndarray,
    window: int,
    transient_weight: float,
    tau: float,
    guard: int,
) -> SpliceCost:
    overlap_out = mono_out[len(mono_out) - window :]
    overlap_in = mono_in[:window]
    pre = mono_out[max(0, len(mono_out) - window - guard) : len(mono_out) - window]
    post = mono_in[window : window + guard]

    p_out = float(np.mean(np.square(overlap_out)))
    p_in = float(np.mean(np.square(overlap_in)))
    p_target = p_out

    g_out, g_in = envelope_curves(family, window)
    # loudness scored on the envelope power model against the running target
    # (the outgoing window's power); for the equal-power family the identity
    # g_out^2 + g_in^2 = 1 reduces the deviation to g_in^2 * (p_in - p_out),
    # exactly zero on matched windows
    g_in_sq = np.square(g_in)
    if family.tag == EQUAL_POWER_TAG:
        deviation = g_in_sq * (p_in - p_target)
    else:
        deviation = np.square(g_out) * p_out + g_in_sq * p_in - p_target
    loudness = float(np.sum(np.square(deviation)))

    mixed = g_out * overlap_out + g_in * overlap_in
    trans = transient_cost(np.concatenate([pre, mixed, post]), tau)
    return SpliceCost(
        loudness_mismatch=loudness,
        transient_cost=trans,
        transient_weight=transient_weight,
        total=loudness + transient_weight * trans,
    )


def candidate_families(alpha_grid: tuple[float, ...] = ALPHA_GRID) -> list[EnvelopeFamily]:
    """Selection candidates in tie-break order: equal-power first, then rising alpha."""
    return [EnvelopeFamily.equal_power()] + [
        EnvelopeFamily.power_law(a) for a in sorted(alpha_grid)
    ]


def select_envelope(
    ctx: SpliceContext,
    outgoing: AudioBuffer,
    incoming: AudioBuffer,
    window: int,
    alpha_grid: tuple[float, ...] = ALPHA_GRID,
    tau: float = DEFAULT_TAU,
    guard: int = DEFAULT_GUARD,
) -> tuple[EnvelopeFamily, SpliceCost]:
    """Pick the candidate with the lowest total splice cost.

    ``outgoing`` supplies the overlap tail (its last ``window`` samples) plus
    any preceding guard context; ``incoming`` supplies the overlap head plus
    trailing guard context. Ties break toward equal-power, then smaller alpha.
    """
    if outgoing.length < window or incoming.length < window:
        raise WindowExceedsBuffer("window exceeds splice inputs")
    mono_out = _mono(outgoing.data)
    mono_in = _mono(incoming.data)

    best: tuple[EnvelopeFamily, SpliceCost] | None = None
    for family in candidate_families(alpha_grid):
        cost = _evaluate_candidate(
            family, mono_out, mono_in, window, ctx.transient_weight, tau, guard
        )
        if best is None or cost.total < best[1].total:
            best = (family, cost)
    assert best is not None
    return best
