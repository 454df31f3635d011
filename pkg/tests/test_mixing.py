import itertools
import math

import numpy as np
import pytest

from sceneloop.audio import SAMPLE_RATE, AudioBuffer, rms_power
from sceneloop.mixing import (
    JobFailed,
    MixJob,
    MockMixBackend,
    StemMetadata,
    TooFewSections,
    poll_delays,
    poll_or_receive,
    submit_master,
    submit_preview_mix,
)
from sceneloop.scheduler import LoopTimeline, SessionClock


def build_timeline(n_sections=2, bpm=120, seed=0):
    rng = np.random.default_rng(seed)
    tl = LoopTimeline(SessionClock(bpm))
    for i in range(n_sections):
        data = np.clip(rng.standard_normal((15 * SAMPLE_RATE, 2)) * 0.2, -1, 1)
        tl.add_section(AudioBuffer(data), "verse")
    return tl


class TestStatusMachine:
    def test_legal_path(self):
        job = MixJob(task_id="t", kind="preview_mix", stems=[])
        job.advance("uploading")
        job.advance("processing")
        job.advance("ready")
        assert job.status == "ready"

    def test_illegal_transitions_rejected(self):
        legal = {
            ("pending", "uploading"),
            ("uploading", "processing"),
            ("uploading", "failed"),
            ("processing", "ready"),
            ("processing", "failed"),
        }
        states = ("pending", "uploading", "processing", "ready", "failed")
        for a, b in itertools.product(states, states):
            job = MixJob(task_id="t", kind="master", stems=[])
            job.status = a
            if (a, b) in legal:
                job.advance(b)
            else:
                with pytest.raises(ValueError):
                    job.advance(b)

    def test_random_interleavings_never_violate_order(self):
        # fire poll/webhook-ish updates in random orders; the machine must
        # only ever move forward along the declared path
        rng = np.random.default_rng(3)
        order = {s: i for i, s in enumerate(("pending", "uploading", "processing", "ready", "failed"))}
        for _ in range(50):
            job = MixJob(task_id="t", kind="preview_mix", stems=[])
            seen = [job.status]
            for target in rng.permutation(["uploading", "processing", "ready", "failed", "ready"]):
                try:
                    job.advance(str(target))
                    seen.append(job.status)
                except ValueError:
                    pass
            assert all(order[a] < order[b] for a, b in zip(seen, seen[1:]))


class TestPreviewMix:
    def test_two_sections_two_stems(self):
        tl = build_timeline(2)
        job = submit_preview_mix(tl.sections, "ambient chill", MockMixBackend(), now=0.0)
        assert len(job.stems) == 2
        assert all(meta.musical_style == "ambient chill" for _, meta in job.stems)
        assert all(meta.instrument_group == "full_section" for _, meta in job.stems)
        assert all(
            (meta.presence_setting, meta.pan_preference, meta.reverb_preference)
            == ("normal", "center", "room")
            for _, meta in job.stems
        )
        assert job.status == "processing"

    def test_one_section_rejected(self):
        tl = build_timeline(1)
        with pytest.raises(TooFewSections):
            submit_preview_mix(tl.sections, "ambient", MockMixBackend(), now=0.0)

    def test_ready_after_configured_latency(self):
        tl = build_timeline(2)
        backend = MockMixBackend(preview_latency=5.2)
        job = submit_preview_mix(tl.sections, "ambient", backend, now=0.0)
        assert poll_or_receive(job, backend, now=5.0) == "processing"
        assert poll_or_receive(job, backend, now=5.2) == "ready"
        assert job.result is not None
        assert job.completed_at == 5.2

    def test_headroom_applied(self):
        tl = build_timeline(2)
        backend = MockMixBackend(preview_latency=0.0)
        job = submit_preview_mix(tl.sections, "ambient", backend, now=0.0)
        poll_or_receive(job, backend, now=0.0)
        assert job.result.length == max(s.buffer.length for s in tl.sections)


class TestMaster:
    def test_concat_length_matches_session(self):
        tl = build_timeline(3)
        assert tl.session_length_seconds == 40.0
        backend = MockMixBackend(master_latency=0.0)
        job = submit_master(tl, "ambient", backend, now=0.0)
        poll_or_receive(job, backend, now=0.0)
        assert job.result.duration == 40.0

    def test_normalized_to_minus_14_dbfs(self):
        tl = build_timeline(2)
        backend = MockMixBackend(master_latency=0.0)
        job = submit_master(tl, "ambient", backend, now=0.0)
        poll_or_receive(job, backend, now=0.0)
        db = rms_power(job.result, 0, job.result.length).rms_db
        assert db == pytest.approx(-14.0, abs=0.05)

    def test_mastering_idempotent(self):
        tl = build_timeline(2)
        backend = MockMixBackend(master_latency=0.0)
        first = submit_master(tl, "ambient", backend, now=0.0)
        poll_or_receive(first, backend, now=0.0)
        # master the already-normalized result again
        from sceneloop.audio import encode_wav
        from sceneloop.mixing import stem_metadata_for_section, _submit

        second = _submit(
            "master", [(encode_wav(first.result), stem_metadata_for_section("ambient"))],
            backend, now=0.0,
        )
        poll_or_receive(second, backend, now=0.0)
        a = rms_power(first.result, 0, first.result.length).rms_db
        b = rms_power(second.result, 0, second.result.length).rms_db
        assert abs(a - b) < 0.1

    def test_zero_sections_rejected(self):
        tl = LoopTimeline(SessionClock(120))
        with pytest.raises(TooFewSections):
            submit_master(tl, "ambient", MockMixBackend(), now=0.0)


class TestPolling:
    def test_backoff_schedule(self):
        gen = poll_delays(1.0, 16.0)
        assert [next(gen) for _ in range(7)] == [1.0, 2.0, 4.0, 8.0, 16.0, 16.0, 16.0]

    def test_polling_reaches_ready(self):
        tl = build_timeline(2)
        backend = MockMixBackend(preview_latency=5.2)
        job = submit_preview_mix(tl.sections, "ambient", backend, now=0.0)
        now, delays = 0.0, poll_delays()
        polls = 0
        while job.status == "processing":
            now += next(delays)
            poll_or_receive(job, backend, now=now)
            polls += 1
        assert job.status == "ready"
        assert now == 7.0  # polls at 1, 3, 7
        assert polls == 3

    def test_failure_raises_job_failed(self):
        tl = build_timeline(2)
        backend = MockMixBackend(preview_latency=0.0)
        backend.fail_next = True
        job = submit_preview_mix(tl.sections, "ambient", backend, now=0.0)
        with pytest.raises(JobFailed):
            poll_or_receive(job, backend, now=1.0)
        assert job.status == "failed"


class TestStemMetadata:
    def test_defaults(self):
        meta = StemMetadata(musical_style="dub")
        assert meta.instrument_group == "full_section"
        assert meta.presence_setting == "normal"
        assert meta.pan_preference == "center"
        assert meta.reverb_preference == "room"
