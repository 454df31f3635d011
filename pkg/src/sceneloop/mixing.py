"""Asynchronous preview-mix and mastering jobs with stem upload and polling.

Jobs never touch the render path: submission uploads stems and returns a
task record, completion is detected by webhook or polling with exponential
backoff, and results come back as decoded buffers ready to hot-swap at the
next bar boundary. The mock backend runs in-process on the session's
virtual clock with injectable latency.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import requests

from .audio import AudioBuffer, decode_wav, encode_wav, rms_power

PREVIEW_MIX = "preview_mix"
MASTER = "master"

STATUS_ORDER = ("pending", "uploading", "processing", "ready", "failed")
_TRANSITIONS = {
    "pending": {"uploading"},
    "uploading": {"processing", "failed"},
    "processing": {"ready", "failed"},
    "ready": set(),
    "failed": set(),
}

MASTER_TARGET_DB = -14.0
HEADROOM_DB = -3.0
_PAN_GAINS = {"center": (1.0, 1.0), "left": (1.0, 0.5), "right": (0.5, 1.0)}

DEFAULT_STEM_PRESENCE = "normal"
DEFAULT_STEM_PAN = "center"
DEFAULT_STEM_REVERB = "room"


class TooFewSections(ValueError):
    """Preview mixing needs at least two sections."""


class UploadFailed(RuntimeError):
    """Stem upload or job submission failed."""


class JobFailed(RuntimeError):
    """The mixing service reported a failure for this job."""


@dataclass(frozen=True)
class StemMetadata:
    instrument_group: str = "full_section"
    presence_setting: str = DEFAULT_STEM_PRESENCE
    pan_preference: str = DEFAULT_STEM_PAN
    reverb_preference: str = DEFAULT_STEM_REVERB
    musical_style: str = ""


@dataclass
class MixJob:
    task_id: str
    kind: str  # preview_mix | master
    stems: list[tuple[bytes, StemMetadata]]
    status: str = "pending"
    result: AudioBuffer | None = None
    submitted_at: float = 0.0
    completed_at: float | None = None
    quality: str = "preview"
    failure_reason: str = ""
    delivered: bool = False  # result handed to the hot-swap path exactly once

    def advance(self, status: str) -> None:
        if status not in _TRANSITIONS[self.status]:
            raise ValueError(f"illegal transition {self.status} -> {status}")
        self.status = status


def poll_delays(base: float = 1.0, cap: float = 16.0):
    """Exponential backoff schedule: base, 2x, 4x ... capped."""
    delay = base
    while True:
        yield delay
        delay = min(delay * 2.0, cap)


class MockMixBackend:
    """In-process mixing service on a virtual clock with injectable latency."""

    def __init__(self, preview_latency: float = 5.2, master_latency: float = 8.6):
        self.preview_latency = preview_latency
        self.master_latency = master_latency
        self.jobs: dict[str, dict] = {}
        self.fail_next = False
        self._counter = 0

    def submit(self, kind: str, stems: list[tuple[bytes, StemMetadata]], now: float) -> str:
        self._counter += 1
        task_id = f"{kind}-{self._counter:04d}"
        latency = self.preview_latency if kind == PREVIEW_MIX else self.master_latency
        self.jobs[task_id] = {
            "kind": kind,
            "stems": stems,
            "ready_at": now + latency,
            "fail": self.fail_next,
        }
        self.fail_next = False
        return task_id

    def status(self, task_id: str, now: float) -> str:
        job = self.jobs[task_id]
        if now + 1e-9 < job["ready_at"]:
            return "processing"
        return "failed" if job["fail"] else "ready"

    def result_wav(self, task_id: str) -> bytes:
        job = self.jobs[task_id]
        if job["kind"] == PREVIEW_MIX:
            return encode_wav(_mock_preview_mix(job["stems"]))
        return encode_wav(_mock_master(job["stems"]))

    def failure_reason(self, task_id: str) -> str:
        return "injected failure" if self.jobs[task_id]["fail"] else ""


def _mock_preview_mix(stems: list[tuple[bytes, StemMetadata]]) -> AudioBuffer:
    # sum with headroom and honor the pan preference; enough to exercise
    # the job lifecycle and the hot-swap path
    decoded = [(decode_wav(wav), meta) for wav, meta in stems]
    length = max(buf.length for buf, _ in decoded)
    acc = np.zeros((length, 2))
    headroom = 10 ** (HEADROOM_DB / 20.0)
    for buf, meta in decoded:
        gains = _PAN_GAINS.get(meta.pan_preference, _PAN_GAINS["center"])
        acc[: buf.length] += buf.data * np.asarray(gains) * headroom
    return AudioBuffer(np.clip(acc, -1.0, 1.0))


def _mock_master(stems: list[tuple[bytes, StemMetadata]]) -> AudioBuffer:
    buf = decode_wav(stems[0][0])
    measure = rms_power(buf, 0, buf.length)
    if measure.rms == 0.0:
        return buf
    gain = 10 ** (MASTER_TARGET_DB / 20.0) / measure.rms
    return AudioBuffer(np.clip(buf.data * gain, -1.0, 1.0))


class HttpMixBackend:
    """Provider HTTP adapter: multipart stem upload plus a JSON job API."""

    def __init__(self, url: str, api_key: str = "", timeout: float = 30.0):
        self.url = url.rstrip("/")
        self.api_key = api_key
        self.timeout = timeout

    def _headers(self):
        return {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}

    def submit(self, kind: str, stems: list[tuple[bytes, StemMetadata]], now: float) -> str:
        files = [
            ("stems", (f"stem{i}.wav", wav, "audio/wav")) for i, (wav, _) in enumerate(stems)
        ]
        metadata = [
            {
                "instrumentGroup": meta.instrument_group,
                "presenceSetting": meta.presence_setting,
                "panPreference": meta.pan_preference,
                "reverbPreference": meta.reverb_preference,
                "musicalStyle": meta.musical_style,
            }
            for _, meta in stems
        ]
        try:
            resp = requests.post(
                f"{self.url}/{kind}",
                files=files,
                data={"metadata": json.dumps(metadata)},
                headers=self._headers(),
                timeout=self.timeout,
            )
            resp.raise_for_status()
        except requests.RequestException as exc:
            raise UploadFailed(f"mix submission failed: {exc}") from exc
        return resp.json()["task_id"]

    def status(self, task_id: str, now: float) -> str:
        resp = requests.get(
            f"{self.url}/jobs/{task_id}", headers=self._headers(), timeout=self.timeout
        )
        resp.raise_for_status()
        return resp.json()["status"]

    def result_wav(self, task_id: str) -> bytes:
        resp = requests.get(
            f"{self.url}/jobs/{task_id}/result",
            headers=self._headers(),
            timeout=self.timeout,
        )
        resp.raise_for_status()
        return resp.content

    def failure_reason(self, task_id: str) -> str:
        return "backend failure"


def stem_metadata_for_section(style: str) -> StemMetadata:
    return StemMetadata(musical_style=style)


def submit_preview_mix(sections, style: str, backend, now: float) -> MixJob:
    """Upload one stem per section and start an asynchronous preview mix."""
    if len(sections) < 2:
        raise TooFewSections(f"preview mix needs >= 2 sections, got {len(sections)}")
    stems = [
        (encode_wav(section.buffer), stem_metadata_for_section(style))
        for section in sections
    ]
    return _submit(PREVIEW_MIX, stems, backend, now)


def submit_master(timeline, style: str, backend, now: float) -> MixJob:
    """Concatenate the session (actual crossfades rendered) and master it."""
    if not timeline.sections:
        raise TooFewSections("mastering needs at least one section")
    rendered = timeline.render(include_swaps=False)
    stems = [(encode_wav(rendered), stem_metadata_for_section(style))]
    return _submit(MASTER, stems, backend, now)


def _submit(kind: str, stems, backend, now: float) -> MixJob:
    job = MixJob(task_id="", kind=kind, stems=stems, submitted_at=now)
    job.advance("uploading")
    try:
        job.task_id = backend.submit(kind, stems, now)
    except UploadFailed:
        job.advance("failed")
        raise
    job.advance("processing")
    return job


def poll_or_receive(job: MixJob, backend, now: float) -> str:
    """Refresh job status; on ready, download and decode the result."""
    if job.status in ("ready", "failed"):
        return job.status
    status = backend.status(job.task_id, now)
    if status == "ready":
        job.result = decode_wav(backend.result_wav(job.task_id))
        job.completed_at = now
        job.advance("ready")
    elif status == "failed":
        job.failure_reason = backend.failure_reason(job.task_id)
        job.completed_at = now
        job.advance("failed")
        raise JobFailed(job.failure_reason)
    return job.status
