"""Session orchestrator: capture -> caption -> prompt -> generate -> schedule -> mix.

One session owns one ordered event queue on a virtual clock; every other
module is a producer. Captures are pipelined (at most two pending), results
are re-ordered by capture index so sections always land in capture order,
and the first caption locks tempo and genre for the rest of the session.
The append-only event log serializes to JSON lines and replays against the
mock backends to a bit-identical render.
"""

from __future__ import annotations

import heapq
import itertools
import json
import logging
import math
import uuid
from dataclasses import dataclass

from .audio import rms_power
from .captions import (
    BackendUnavailable,
    CaptureFrame,
    MalformedCaption,
    MockCaptionBackend,
    SceneCaption,
    caption as run_caption,
    clamp_bpm,
    parse_caption_json,
)
from .config import EngineConfig
from .crossfade import EnvelopeFamily
from .device import CAPTURE_INDEX, DisplayState, led_bit
from .generation import (
    ContractViolation,
    GenerationRequest,
    GenerationTimeout,
    MockGenerationBackend,
    generate,
)
from .mixing import (
    MASTER,
    PREVIEW_MIX,
    JobFailed,
    MixJob,
    MockMixBackend,
    TooFewSections,
    UploadFailed,
    poll_delays,
    poll_or_receive,
    submit_master,
    submit_preview_mix,
)
from .prompts import InstrumentSelection, PromptRecord, SessionLock, build_prompt
from .scheduler import HotSwapRequest, LoopTimeline, SessionClock

logger = logging.getLogger(__name__)

EVENT_KINDS = (
    "capture",
    "caption_ready",
    "generation_ready",
    "section_scheduled",
    "mix_submitted",
    "swap_committed",
    "error",
    "control",
)

MAX_PENDING_CAPTURES = 2

LOG_VERSION = 1

_FAILED = object()  # pipeline-stage failure marker for the ordering buffers


class SessionNotActive(RuntimeError):
    """Session was closed; no further captures accepted."""


class CaptureBacklogFull(RuntimeError):
    """Two captures are already in flight (generation back-pressure)."""


@dataclass(frozen=True)
class SessionEvent:
    seq: int
    kind: str
    at: float
    payload: dict

    def as_record(self) -> dict:
        return {"seq": self.seq, "kind": self.kind, "at": self.at, "payload": self.payload}


@dataclass
class _PendingCapture:
    index: int
    frame: CaptureFrame | None
    frame_hash: str
    selection: InstrumentSelection
    captured_at: float
    caption_done_at: float | None = None
    caption: SceneCaption | None = None
    prompt: PromptRecord | None = None
    generated_at: float | None = None


class Session:
    """Single-owner state machine over an ordered virtual-time event queue."""

    def __init__(
        self,
        config: EngineConfig | None = None,
        caption_backend=None,
        generation_backend=None,
        mix_backend=None,
        session_id: str | None = None,
    ):
        self.config = config or EngineConfig()
        self.id = session_id or uuid.uuid4().hex[:12]
        self.caption_backend = caption_backend or MockCaptionBackend()
        self.generation_backend = generation_backend or MockGenerationBackend()
        self.mix_backend = mix_backend or MockMixBackend(
            preview_latency=self.config.mix_preview_latency,
            master_latency=self.config.master_latency,
        )

        self.now = 0.0
        self.active = True
        self.auto_mix = self.config.auto_mix
        self.instrument_state: InstrumentSelection | None = None

        self.clock: SessionClock | None = None
        self.genre: str | None = None
        self.timeline: LoopTimeline | None = None

        self.events: list[SessionEvent] = []
        self.cost_log: list[dict] = []
        self.active_jobs: dict[str, MixJob] = {}
        self.all_jobs: list[MixJob] = []
        self._event_listeners: list = []

        self._queue: list = []
        self._order = itertools.count()
        self._capture_count = 0
        self._pending: dict[int, _PendingCapture] = {}
        self._caption_results: dict[int, object] = {}
        self._generation_results: dict[int, object] = {}
        self._next_caption = 0
        self._next_schedule = 0
        self._prompt_count = 0
        self._latencies: list[dict] = []
        self._playback_origin: float | None = None
        # test hook: per-capture generation latency (simulates out-of-order
        # completions); falls back to the configured latency
        self.generation_latency_overrides: dict[int, float] = {}

    # -- event queue -------------------------------------------------------

    def _at(self, when: float, fn) -> None:
        heapq.heappush(self._queue, (when, next(self._order), fn))

    def advance(self, until: float) -> None:
        """Run all queued work due at or before ``until``; clock ends there."""
        while self._queue and self._queue[0][0] <= until + 1e-12:
            when, _, fn = heapq.heappop(self._queue)
            self.now = max(self.now, when)
            fn()
        self.now = max(self.now, until)

    def advance_next(self) -> bool:
        """Run the single earliest queued item; False when idle."""
        if not self._queue:
            return False
        when, _, fn = heapq.heappop(self._queue)
        self.now = max(self.now, when)
        fn()
        return True

    def run_until_idle(self, max_events: int = 100_000) -> None:
        for _ in range(max_events):
            if not self.advance_next():
                return
        raise RuntimeError("event queue did not drain")

    @property
    def queue_empty(self) -> bool:
        return not self._queue

    # -- events ------------------------------------------------------------

    def _emit(self, kind: str, payload: dict) -> SessionEvent:
        assert kind in EVENT_KINDS
        event = SessionEvent(seq=len(self.events), kind=kind, at=self.now, payload=payload)
        self.events.append(event)
        for listener in list(self._event_listeners):
            listener(event)
        return event

    def add_listener(self, listener) -> None:
        self._event_listeners.append(listener)

    def remove_listener(self, listener) -> None:
        if listener in self._event_listeners:
            self._event_listeners.remove(listener)

    def _error(self, stage: str, message: str, index: int | None = None) -> None:
        logger.warning("pipeline error at %s: %s", stage, message)
        payload = {"stage": stage, "message": message}
        if index is not None:
            payload["index"] = index
        self._emit("error", payload)

    def _cost(self, kind: str, amount: float) -> None:
        self.cost_log.append({"kind": kind, "amount": amount, "at": self.now})

    # -- capture pipeline ---------------------------------------------------

    def handle_capture(
        self,
        frame: CaptureFrame | None,
        sel: InstrumentSelection,
        frame_hash: str | None = None,
    ) -> int:
        """Accept a capture; caption/generation run asynchronously after it."""
        if not self.active:
            raise SessionNotActive("session is closed")
        if len(self._pending) >= MAX_PENDING_CAPTURES:
            raise CaptureBacklogFull(
                f"{MAX_PENDING_CAPTURES} captures already in flight"
            )
        if frame is None and frame_hash is None:
            raise ValueError("need a frame or a frame hash")
        index = self._capture_count
        self._capture_count += 1
        record = _PendingCapture(
            index=index,
            frame=frame,
            frame_hash=frame_hash or frame.sha256,
            selection=sel,
            captured_at=self.now,
        )
        self._pending[index] = record
        self.instrument_state = sel
        self._emit(
            "capture",
            {
                "index": index,
                "frame_hash": record.frame_hash,
                "instruments": list(sel.instruments),
                "width": frame.width if frame else 0,
                "height": frame.height if frame else 0,
            },
        )
        self._at(self.now + self.config.caption_latency, lambda: self._caption_stage(index))
        return index

    def _caption_stage(self, index: int) -> None:
        record = self._pending[index]
        try:
            result = run_caption(
                record.frame, self.caption_backend, frame_hash=record.frame_hash
            )
        except (BackendUnavailable, MalformedCaption) as exc:
            self._caption_results[index] = _FAILED
            self._pending.pop(index, None)
            self._error("caption", str(exc), index)
        else:
            record.caption_done_at = self.now
            self._caption_results[index] = result
        self._drain_captions()

    def _drain_captions(self) -> None:
        while self._next_caption in self._caption_results:
            index = self._next_caption
            result = self._caption_results.pop(index)
            self._next_caption += 1
            if result is _FAILED:
                self._skip_generation(index)
                continue
            self._process_caption(index, result)

    def _skip_generation(self, index: int) -> None:
        self._generation_results[index] = _FAILED
        self._drain_generations()

    def _process_caption(self, index: int, cap: SceneCaption) -> None:
        record = self._pending[index]
        record.caption = cap
        self._cost("caption", self.config.caption_cost)

        if self.clock is None:
            bpm = clamp_bpm(cap.bpm) if cap.bpm is not None else 100.0
            self.clock = SessionClock(bpm)
            self.genre = cap.genre
            self.timeline = LoopTimeline(
                self.clock,
                look_ahead=self.config.look_ahead,
                transient_weight=self.config.transient_weight,
                transient_tau=self.config.transient_tau,
                transient_guard=self.config.transient_guard,
            )

        lock = SessionLock(genre=self.genre, bpm=self.clock.bpm)
        section_index = self._prompt_count
        try:
            record.prompt = build_prompt(cap, record.selection, section_index, lock)
        except ValueError as exc:
            self._pending.pop(index, None)
            self._generation_results[index] = _FAILED
            self._error("prompt", str(exc), index)
            self._drain_generations()
            return
        self._prompt_count += 1

        self._emit(
            "caption_ready",
            {
                "index": index,
                "caption": cap.as_dict(),
                "prompt": record.prompt.text,
                "latency": self.now - record.captured_at,
            },
        )
        delay = self.generation_latency_overrides.get(
            index, self.config.generation_latency
        )
        self._at(self.now + delay, lambda: self._generation_stage(index))

    def _generation_stage(self, index: int) -> None:
        record = self._pending[index]
        req = GenerationRequest(prompt=record.prompt.text, bpm_hint=self.clock.bpm)
        try:
            result = generate(
                req, self.generation_backend, timeout=self.config.generation_timeout
            )
        except (BackendUnavailable, ContractViolation, GenerationTimeout) as exc:
            self._generation_results[index] = _FAILED
            self._pending.pop(index, None)
            self._error("generation", str(exc), index)
        else:
            record.generated_at = self.now
            self._generation_results[index] = result
            self._cost("generation", self.config.generation_cost)
        self._drain_generations()

    def _drain_generations(self) -> None:
        while self._next_schedule in self._generation_results:
            index = self._next_schedule
            result = self._generation_results.pop(index)
            self._next_schedule += 1
            if result is _FAILED:
                continue
            self._schedule_section(index, result)

    def _schedule_section(self, index: int, result) -> None:
        record = self._pending.pop(index)
        override = None
        if self.config.force_power_law_moods and set(record.caption.mood) & set(
            self.config.force_power_law_moods
        ):
            override = EnvelopeFamily.power_law()
        try:
            section = self.timeline.add_section(
                result.audio,
                record.caption.section_role,
                prompt=record.prompt,
                family_override=override,
            )
        except ValueError as exc:
            self._error("schedule", str(exc), index)
            return
        if self._playback_origin is None:
            self._playback_origin = self.now
        self._emit(
            "generation_ready",
            {
                "index": index,
                "latency": self.now - record.caption_done_at,
                "duration": result.audio.duration,
            },
        )
        self._emit(
            "section_scheduled",
            {
                "index": section.index,
                "capture_index": index,
                "start_time": section.start_time,
                "nominal_start": section.nominal_start,
                "bar_count": section.bar_count,
                "length_seconds": section.length_seconds,
                "role": section.role,
                "family": section.crossfade.family.tag,
                "alpha": section.crossfade.family.alpha,
            },
        )
        self._latencies.append(
            {
                "index": section.index,
                "caption_latency": record.caption_done_at - record.captured_at,
                "generation_latency": self.now - record.caption_done_at,
                "schedule_latency": 0.0,
                "end_to_end": self.now - record.captured_at,
            }
        )
        if self.auto_mix and len(self.timeline.sections) >= 2:
            self._submit_preview_mix()

    # -- mixing ------------------------------------------------------------

    def _submit_preview_mix(self) -> None:
        try:
            job = submit_preview_mix(
                self.timeline.sections, self.genre, self.mix_backend, self.now
            )
        except (TooFewSections, UploadFailed) as exc:
            self._error("mix", str(exc))
            return
        self._register_job(job)

    def request_master(self) -> MixJob:
        """Submit an export-quality master of the current session."""
        if self.timeline is None or not self.timeline.sections:
            raise TooFewSections("no sections to master")
        job = submit_master(self.timeline, self.genre, self.mix_backend, self.now)
        self._register_job(job)
        return job

    def _register_job(self, job: MixJob) -> None:
        # newest job per kind wins; the old result is never delivered
        self.active_jobs[job.kind] = job
        self.all_jobs.append(job)
        self._cost(
            "master" if job.kind == MASTER else "mix_stems",
            self.config.master_cost
            if job.kind == MASTER
            else self.config.mix_stem_cost * len(job.stems),
        )
        self._emit(
            "mix_submitted",
            {"task_id": job.task_id, "kind": job.kind, "stems": len(job.stems)},
        )
        delays = poll_delays(self.config.poll_backoff_base, self.config.poll_backoff_cap)
        self._at(self.now + next(delays), lambda: self._poll_job(job, delays))

    def _poll_job(self, job: MixJob, delays) -> None:
        try:
            status = poll_or_receive(job, self.mix_backend, self.now)
        except JobFailed as exc:
            self._error("mix", str(exc))
            return
        if status == "ready":
            self._deliver_job(job)
        else:
            self._at(self.now + next(delays), lambda: self._poll_job(job, delays))

    def webhook_mix_ready(self, task_id: str) -> None:
        """Webhook path: completion pushed by the service instead of polled."""
        for job in self.all_jobs:
            if job.task_id == task_id and job.status == "processing":
                try:
                    if poll_or_receive(job, self.mix_backend, self.now) == "ready":
                        self._deliver_job(job)
                except JobFailed as exc:
                    self._error("mix", str(exc))
                return

    def _deliver_job(self, job: MixJob) -> None:
        if job.delivered:
            return
        if self.active_jobs.get(job.kind) is not job:
            return  # superseded: a newer job of this kind owns delivery
        job.delivered = True
        reason = "mastered" if job.kind == MASTER else "preview_mix"
        handle = self.timeline.request_hot_swap(
            HotSwapRequest(replacement=job.result, earliest_time=self.now, reason=reason)
        )
        self._at(handle.boundary, lambda: self._commit_swaps(job, handle))

    def _commit_swaps(self, job: MixJob, handle) -> None:
        committed = self.timeline.commit_due_swaps(self.now)
        for h in committed:
            reason = h.request.reason
            self._emit(
                "swap_committed",
                {
                    "reason": reason,
                    "boundary": h.boundary,
                    "task_id": job.task_id if h is handle else "",
                },
            )

    # -- controls ------------------------------------------------------------

    def toggle_auto_mix(self, enabled: bool | None = None) -> bool:
        self.auto_mix = (not self.auto_mix) if enabled is None else enabled
        self._emit("control", {"op": "toggle_auto_mix", "auto_mix": self.auto_mix})
        if self.auto_mix and self.timeline is not None and len(self.timeline.sections) >= 2:
            self._submit_preview_mix()
        return self.auto_mix

    def select_instruments(self, sel: InstrumentSelection) -> None:
        self.instrument_state = sel
        self._emit("control", {"op": "select_instruments", "instruments": list(sel.instruments)})

    def close(self) -> None:
        self.active = False

    # -- reporting -----------------------------------------------------------

    def cost_total(self) -> float:
        return sum(entry["amount"] for entry in self.cost_log)

    def latency_report(self) -> dict:
        """Per-stage latency summary and cost totals for completed sections."""
        if not self._latencies:
            raise ValueError("no completed sections to report on")
        stages = {}
        for stage in ("caption_latency", "generation_latency", "schedule_latency", "end_to_end"):
            values = [entry[stage] for entry in self._latencies]
            stages[stage] = {
                "min": min(values),
                "mean": sum(values) / len(values),
                "max": max(values),
            }
        return {
            "sections": list(self._latencies),
            "stages": stages,
            "cost_total": self.cost_total(),
            "costs": list(self.cost_log),
        }

    @property
    def playhead(self) -> float:
        if self.timeline is None or not self.timeline.sections or self._playback_origin is None:
            return 0.0
        length = self.timeline.session_length_seconds
        if length <= 0:
            return 0.0
        return (self.now - self._playback_origin) % length

    def display_state(self) -> DisplayState:
        """Display parity with the physical controller."""
        role = "verse"
        level = 0
        if self.timeline is not None and self.timeline.sections:
            last = self.timeline.sections[-1]
            role = last.role
            db = rms_power(last.buffer, 0, last.buffer.length).rms_db
            if math.isfinite(db):
                level = max(0, min(15, 15 + round(db / 3.0)))
        mask = 0
        if self.instrument_state is not None:
            for name in self.instrument_state.instruments:
                mask |= led_bit(name)
        if self._pending:
            mask |= 1 << CAPTURE_INDEX
        return DisplayState(
            tempo=self.clock.bpm if self.clock else 0,
            genre=self.genre or "",
            section_role=role,
            audio_level=level,
            led_mask=mask,
        )

    def state_snapshot(self) -> dict:
        """Consistent point-in-time view for the service layer."""
        sections = []
        if self.timeline is not None:
            for s in self.timeline.sections:
                sections.append(
                    {
                        "index": s.index,
                        "role": s.role,
                        "start_time": s.start_time,
                        "nominal_start": s.nominal_start,
                        "length_seconds": s.length_seconds,
                        "bar_count": s.bar_count,
                        "prompt": s.prompt.text if s.prompt else "",
                        "family": s.crossfade.family.tag,
                    }
                )
        display = self.display_state()
        return {
            "session": {
                "id": self.id,
                "bpm": self.clock.bpm if self.clock else None,
                "genre": self.genre,
                "auto_mix": self.auto_mix,
                "t_bar": self.clock.t_bar if self.clock else None,
                "crossfade_seconds": self.timeline.t_cf if self.timeline else None,
            },
            "sections": sections,
            "jobs": [
                {"task_id": j.task_id, "kind": j.kind, "status": j.status}
                for j in self.all_jobs
            ],
            "display": {
                "tempo": display.tempo,
                "genre": display.genre,
                "section_role": display.section_role,
                "audio_level": display.audio_level,
                "led_mask": display.led_mask,
            },
            "playhead": self.playhead,
            "pending_captures": len(self._pending),
            "events_seq": len(self.events),
            "underruns": self.timeline.underruns if self.timeline else 0,
        }

    def render(self, length_samples: int | None = None, include_swaps: bool = True):
        if self.timeline is None:
            raise ValueError("nothing scheduled yet")
        return self.timeline.render(length_samples, include_swaps=include_swaps)

    # -- event log / replay ----------------------------------------------------

    def _config_record(self) -> dict:
        cfg = {
            key: (list(value) if isinstance(value, tuple) else value)
            for key, value in vars(self.config).items()
        }
        return {"kind": "session_config", "version": LOG_VERSION, "id": self.id, "config": cfg}

    def event_log_lines(self) -> list[str]:
        lines = [json.dumps(self._config_record())]
        lines += [json.dumps(event.as_record()) for event in self.events]
        return lines

    def write_event_log(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for line in self.event_log_lines():
                fh.write(line + "\n")

    @classmethod
    def replay(cls, lines: list[str]) -> "Session":
        """Re-execute a recorded session's inputs against the mock backends."""
        records = [json.loads(line) for line in lines if line.strip()]
        header = records[0]
        if header.get("kind") != "session_config":
            raise ValueError("log must start with a session_config record")
        if header.get("version") != LOG_VERSION:
            raise ValueError(f"unsupported log version {header.get('version')}")
        cfg_data = dict(header["config"])
        config = EngineConfig(
            **{
                key: tuple(value) if isinstance(value, list) else value
                for key, value in cfg_data.items()
            }
        )

        captions_by_hash: dict[str, dict] = {}
        hash_by_index: dict[int, str] = {}
        for record in records[1:]:
            payload = record.get("payload", {})
            if record.get("kind") == "capture":
                hash_by_index[payload["index"]] = payload["frame_hash"]
            elif record.get("kind") == "caption_ready":
                frame_hash = hash_by_index.get(payload["index"])
                if frame_hash is not None:
                    captions_by_hash[frame_hash] = payload["caption"]

        session = cls(
            config=config,
            caption_backend=_ReplayCaptionBackend(captions_by_hash),
            session_id=header.get("id"),
        )
        # inputs must land at their recorded position in the total event
        # order (the clock alone cannot break ties), so regenerate derived
        # events up to each input's sequence number, then apply it
        inputs = [r for r in records[1:] if r.get("kind") in ("capture", "control")]
        for record in inputs:
            target_seq = record["seq"]
            while len(session.events) < target_seq:
                if not session.advance_next():
                    raise ValueError(
                        f"replay diverged: queue idle before seq {target_seq}"
                    )
            if len(session.events) != target_seq:
                raise ValueError(
                    f"replay diverged: expected seq {target_seq}, "
                    f"got {len(session.events)}"
                )
            session.now = max(session.now, record.get("at", 0.0))
            payload = record.get("payload", {})
            if record["kind"] == "capture":
                sel = InstrumentSelection(tuple(payload["instruments"]))
                session.handle_capture(None, sel, frame_hash=payload["frame_hash"])
            elif payload.get("op") == "toggle_auto_mix":
                session.toggle_auto_mix(payload["auto_mix"])
            elif payload.get("op") == "select_instruments":
                session.select_instruments(InstrumentSelection(tuple(payload["instruments"])))
        session.run_until_idle()
        return session


class _ReplayCaptionBackend:
    """Serves the captions recorded in an event log, keyed by frame hash."""

    def __init__(self, captions_by_hash: dict[str, dict]):
        self.captions_by_hash = captions_by_hash

    def request_caption(self, frame, frame_hash: str, instruction: str) -> str:
        if frame_hash not in self.captions_by_hash:
            raise BackendUnavailable(f"no recorded caption for frame {frame_hash[:12]}")
        return json.dumps(self.captions_by_hash[frame_hash])
