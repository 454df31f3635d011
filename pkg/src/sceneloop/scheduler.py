"""Session timeline: tempo math, bar quantization, splice scheduling, hot-swap.

The timeline is the single authority for when things sound. Splice starts
follow the tempo-adaptive recurrence t_{k+1} = t_k + L_k - T_cf on a nominal
chain that is never re-anchored; each committed downbeat is the nominal
start quantized to the nearest bar boundary (ties round up, so in-flight
audio is never truncated early). A section plays phase-locked to its
committed downbeat and the crossfade occupies the final T_cf before it; the
incoming source pre-rolls its wrap during the fade so its downbeat lands at
full gain exactly on the bar line. With no successor the last section loops
at its own period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .audio import SAMPLE_RATE, AudioBuffer
from .crossfade import (
    CrossfadePlan,
    EnvelopeFamily,
    SpliceCost,
    build_splice_context,
    envelope_curves,
    select_envelope,
)
from .prompts import PromptRecord

MIN_BPM = 40.0
MAX_BPM = 240.0
MIN_CROSSFADE_SECONDS = 0.3
DEFAULT_LOOK_AHEAD = 0.25

_EPS = 1e-9


class TempoOutOfRange(ValueError):
    """BPM outside the accepted [40, 240] range."""


class ClipShorterThanBar(ValueError):
    """Clip too short to occupy even one bar."""


class CrossfadeLongerThanSection(ValueError):
    """Crossfade window would consume the entire section."""


class SwapSupersededError(RuntimeError):
    """A newer hot-swap request with the same reason arrived before commit."""


@dataclass(frozen=True)
class SessionClock:
    """Tempo and derived beat/bar durations; 4/4 meter throughout."""

    bpm: float

    def __post_init__(self):
        if not (MIN_BPM <= self.bpm <= MAX_BPM):
            raise TempoOutOfRange(f"bpm {self.bpm} outside [{MIN_BPM}, {MAX_BPM}]")

    @property
    def t_beat(self) -> float:
        return 60.0 / self.bpm

    @property
    def t_bar(self) -> float:
        return 4.0 * self.t_beat


def crossfade_window(bpm: float) -> float:
    """Tempo-adaptive crossfade length: max(120/bpm, 0.3) seconds."""
    if not (MIN_BPM <= bpm <= MAX_BPM):
        raise TempoOutOfRange(f"bpm {bpm} outside [{MIN_BPM}, {MAX_BPM}]")
    return max(120.0 / bpm, MIN_CROSSFADE_SECONDS)


def fit_bars(clip_seconds: float, clock: SessionClock) -> int:
    """Whole bars a clip can fill; the remainder is truncated for looping."""
    if clip_seconds < clock.t_bar - _EPS:
        raise ClipShorterThanBar(
            f"clip {clip_seconds:.3f}s shorter than one bar ({clock.t_bar:.3f}s)"
        )
    return max(1, int(clip_seconds / clock.t_bar + _EPS))


def quantize_to_bar(t: float, clock: SessionClock) -> float:
    """Nearest bar boundary (ties round up), snapped to whole samples."""
    return quantize_to_bar_samples(t, clock) / SAMPLE_RATE


def quantize_to_bar_samples(t: float, clock: SessionClock) -> int:
    index = math.floor(t / clock.t_bar + 0.5)  # half-up: never truncates in-flight audio
    return round(index * clock.t_bar * SAMPLE_RATE)


def next_bar_boundary_samples(t: float, clock: SessionClock) -> int:
    """First bar boundary at or after ``t``, in samples."""
    index = math.ceil(t / clock.t_bar - _EPS)
    return round(max(0, index) * clock.t_bar * SAMPLE_RATE)


@dataclass(frozen=True)
class SpliceTiming:
    """Nominal (recurrence) start and the committed, bar-aligned downbeat."""

    nominal_start: float
    downbeat: float
    downbeat_samples: int


@dataclass
class ScheduledSection:
    index: int
    bar_count: int
    length_seconds: float
    start_time: float  # committed downbeat, bar-aligned
    buffer: AudioBuffer  # truncated to whole bars
    role: str
    crossfade: CrossfadePlan
    nominal_start: float = 0.0
    start_samples: int = 0
    length_samples: int = 0
    splice_cost: SpliceCost | None = None
    prompt: PromptRecord | None = None


def schedule_next(prev: ScheduledSection, clock: SessionClock, t_cf: float) -> SpliceTiming:
    """Timing for the section after ``prev``: Eq-style recurrence then quantize."""
    if t_cf >= prev.length_seconds:
        raise CrossfadeLongerThanSection(
            f"crossfade {t_cf}s >= section length {prev.length_seconds}s"
        )
    nominal = prev.nominal_start + (prev.length_seconds - t_cf)
    downbeat_samples = quantize_to_bar_samples(nominal, clock)
    return SpliceTiming(nominal, downbeat_samples / SAMPLE_RATE, downbeat_samples)


@dataclass(frozen=True)
class HotSwapRequest:
    replacement: AudioBuffer
    earliest_time: float
    reason: str  # preview_mix | master | manual

    def __post_init__(self):
        if self.replacement.sample_rate != SAMPLE_RATE:
            raise ValueError("replacement must be 44100 Hz")


@dataclass
class SwapHandle:
    request: HotSwapRequest
    boundary_samples: int
    status: str = "pending"  # pending | committed | superseded

    @property
    def boundary(self) -> float:
        return self.boundary_samples / SAMPLE_RATE

    def result(self) -> float:
        """Committed boundary time; raises once superseded by a newer request."""
        if self.status == "superseded":
            raise SwapSupersededError(
                f"{self.request.reason} swap superseded before commit"
            )
        return self.boundary


@dataclass
class _Entry:
    start: int  # samples
    data: np.ndarray  # (L, 2) read-only
    anchor: int  # sample index where source position is 0
    fade_mode: str  # "before" (sections) | "after" (swaps)
    plan: CrossfadePlan
    seq: int


class LoopTimeline:
    """Owns the section list, pending hot-swaps, and the offline render."""

    def __init__(
        self,
        clock: SessionClock,
        t_cf: float | None = None,
        look_ahead: float = DEFAULT_LOOK_AHEAD,
        transient_weight: float = 1.0,
        transient_tau: float = 0.05,
        transient_guard: int = 256,
    ):
        self.clock = clock
        self.t_cf = crossfade_window(clock.bpm) if t_cf is None else t_cf
        self.look_ahead = look_ahead
        self.transient_weight = transient_weight
        self.transient_tau = transient_tau
        self.transient_guard = transient_guard
        self.sections: list[ScheduledSection] = []
        self.pending_swaps: list[SwapHandle] = []
        self.committed_swaps: list[SwapHandle] = []
        self.underruns = 0  # render path never waits on jobs; stays 0
        self._seq = 0

    # -- sections ---------------------------------------------------------

    def add_section(
        self,
        buffer: AudioBuffer,
        role: str,
        prompt: PromptRecord | None = None,
        family_override: EnvelopeFamily | None = None,
    ) -> ScheduledSection:
        bars = fit_bars(buffer.duration, self.clock)
        length_seconds = bars * self.clock.t_bar
        if self.t_cf >= length_seconds:
            raise CrossfadeLongerThanSection(
                f"crossfade {self.t_cf}s >= section length {length_seconds}s"
            )
        length_samples = min(round(length_seconds * SAMPLE_RATE), buffer.length)
        truncated = AudioBuffer(buffer.data[:length_samples])

        window = max(1, round(self.t_cf * SAMPLE_RATE))
        if not self.sections:
            timing = SpliceTiming(0.0, 0.0, 0)
            plan = CrossfadePlan.from_seconds(EnvelopeFamily.equal_power(), self.t_cf)
            cost = None
        else:
            prev = self.sections[-1]
            timing = schedule_next(prev, self.clock, self.t_cf)
            family, cost = self._choose_envelope(
                prev, truncated, timing.downbeat_samples, window, family_override
            )
            plan = CrossfadePlan.from_seconds(family, self.t_cf)

        section = ScheduledSection(
            index=len(self.sections),
            bar_count=bars,
            length_seconds=length_seconds,
            start_time=timing.downbeat,
            buffer=truncated,
            role=role,
            crossfade=plan,
            nominal_start=timing.nominal_start,
            start_samples=timing.downbeat_samples,
            length_samples=length_samples,
            splice_cost=cost,
            prompt=prompt,
        )
        self.sections.append(section)
        return section

    def _choose_envelope(
        self,
        prev: ScheduledSection,
        incoming: AudioBuffer,
        downbeat_samples: int,
        window: int,
        family_override: EnvelopeFamily | None,
    ) -> tuple[EnvelopeFamily, SpliceCost | None]:
        # the fade mixes the outgoing material right before the new downbeat
        # against the incoming source's wrap (its tail), plus guard context
        occupancy = downbeat_samples - prev.start_samples
        effective = min(window, occupancy, prev.length_samples, incoming.length)
        if effective < 1:
            return family_override or EnvelopeFamily.equal_power(), None
        out_end = min(occupancy, prev.length_samples)
        out_start = max(0, out_end - effective - self.transient_guard)
        out_slice = AudioBuffer(prev.buffer.data[out_start:out_end])
        in_data = np.concatenate(
            [
                incoming.data[incoming.length - effective :],
                incoming.data[: self.transient_guard],
            ]
        )
        in_slice = AudioBuffer(in_data)
        ctx = build_splice_context(
            out_slice, in_slice, effective, "", self.transient_weight
        )
        if family_override is not None:
            return family_override, None
        family, cost = select_envelope(
            ctx,
            out_slice,
            in_slice,
            effective,
            tau=self.transient_tau,
            guard=self.transient_guard,
        )
        return family, cost

    # -- hot swaps --------------------------------------------------------

    def request_hot_swap(self, req: HotSwapRequest) -> SwapHandle:
        """Register a swap for the first bar boundary past earliest + look-ahead.

        A newer request with the same reason supersedes any pending one; the
        superseded handle raises SwapSupersededError when resolved.
        """
        boundary = next_bar_boundary_samples(
            req.earliest_time + self.look_ahead, self.clock
        )
        for handle in self.pending_swaps:
            if handle.request.reason == req.reason:
                handle.status = "superseded"
        self.pending_swaps = [h for h in self.pending_swaps if h.status == "pending"]
        handle = SwapHandle(request=req, boundary_samples=boundary)
        self.pending_swaps.append(handle)
        return handle

    def commit_due_swaps(self, now: float) -> list[SwapHandle]:
        """Commit pending swaps whose boundary has been reached."""
        due = [h for h in self.pending_swaps if h.boundary <= now + _EPS]
        for handle in sorted(due, key=lambda h: h.boundary_samples):
            handle.status = "committed"
            self.committed_swaps.append(handle)
            self.pending_swaps.remove(handle)
        return due

    # -- render -----------------------------------------------------------

    @property
    def end_samples(self) -> int:
        if not self.sections:
            return 0
        last = self.sections[-1]
        return last.start_samples + last.length_samples

    @property
    def session_length_seconds(self) -> float:
        return self.end_samples / SAMPLE_RATE

    def _entries(self, include_swaps: bool) -> list[_Entry]:
        entries = []
        seq = 0
        for s in self.sections:
            entries.append(
                _Entry(
                    start=s.start_samples,
                    data=s.buffer.data,
                    anchor=s.start_samples,
                    fade_mode="before",
                    plan=s.crossfade,
                    seq=seq,
                )
            )
            seq += 1
        if include_swaps:
            default_plan = CrossfadePlan.from_seconds(
                EnvelopeFamily.equal_power(), self.t_cf
            )
            for handle in self.committed_swaps:
                entries.append(
                    _Entry(
                        start=handle.boundary_samples,
                        data=handle.request.replacement.data,
                        anchor=0,  # session-origin phase: position = t mod len
                        fade_mode="after",
                        plan=default_plan,
                        seq=seq,
                    )
                )
                seq += 1
        entries.sort(key=lambda e: (e.start, e.seq))
        return entries

    @staticmethod
    def _gather(entry: _Entry, a: int, b: int) -> np.ndarray:
        pos = (np.arange(a, b) - entry.anchor) % entry.data.shape[0]
        return entry.data[pos]

    @staticmethod
    def _same_source(prev: _Entry, entry: _Entry) -> bool:
        # identical material at identical phase: the switch is the identity,
        # so no fade is rendered (hot-swap idempotence / self-loop seam)
        if prev.data.shape != entry.data.shape:
            return False
        if (entry.anchor - prev.anchor) % entry.data.shape[0] != 0:
            return False
        return np.array_equal(prev.data, entry.data)

    def render(
        self, length_samples: int | None = None, include_swaps: bool = True
    ) -> AudioBuffer:
        """Deterministic offline render of the committed timeline."""
        if not self.sections:
            return AudioBuffer.silence(0)
        length = self.end_samples if length_samples is None else length_samples
        entries = self._entries(include_swaps)
        out = np.zeros((length, 2))

        starts = [e.start for e in entries] + [length]
        for i, entry in enumerate(entries):
            a = max(0, min(entry.start, length))
            b = max(a, min(starts[i + 1], length))
            if i == 0:
                a = 0
            if b > a:
                out[a:b] = self._gather(entry, a, b)

        for i in range(1, len(entries)):
            entry, prev = entries[i], entries[i - 1]
            if self._same_source(prev, entry):
                continue
            n = entry.plan.window_len_samples
            if entry.fade_mode == "before":
                lo, hi = entry.start - n, entry.start
            else:
                lo, hi = entry.start, entry.start + n
            a = max(lo, prev.start, 0)
            b = min(hi, starts[i + 1], length)
            if b <= a:
                continue
            g_out, g_in = envelope_curves(entry.plan.family, n)
            offset = a - lo
            g_out = g_out[offset : offset + (b - a)]
            g_in = g_in[offset : offset + (b - a)]
            mixed = (
                self._gather(prev, a, b) * g_out[:, None]
                + self._gather(entry, a, b) * g_in[:, None]
            )
            out[a:b] = np.clip(mixed, -1.0, 1.0)

        return AudioBuffer(np.clip(out, -1.0, 1.0))
