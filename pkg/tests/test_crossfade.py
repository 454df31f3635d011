import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sceneloop.audio import AudioBuffer, rms_power
from sceneloop.crossfade import (
    ALPHA_GRID,
    CrossfadePlan,
    EnvelopeFamily,
    IndexOutOfWindow,
    SpliceContext,
    WindowExceedsBuffer,
    build_splice_context,
    candidate_families,
    envelope_curves,
    envelope_gains,
    select_envelope,
    splice,
    transient_cost,
)

EQ = EnvelopeFamily.equal_power()


def oracle_cost(family, out_buf, in_buf, window, lam, tau=0.05, guard=256):
    """Brute-force re-statement of the splice objective, written independently.

    Loudness: per-sample envelope power model against the outgoing window's
    mean-square target. Transients: thresholded squared first differences of
    the actual mixed mono signal including guard context.
    """
    mono_out = (out_buf.data[:, 0] + out_buf.data[:, 1]) / 2.0
    mono_in = (in_buf.data[:, 0] + in_buf.data[:, 1]) / 2.0
    tail = mono_out[len(mono_out) - window:]
    head = mono_in[:window]
    p_out = sum(s * s for s in tail) / window
    p_in = sum(s * s for s in head) / window

    loud = 0.0
    mixed = []
    for n in range(window):
        u = n / window
        if family.tag == "equal_power":
            g_o, g_i = math.cos(math.pi * u / 2), math.sin(math.pi * u / 2)
        else:
            g_o, g_i = (1 - u) ** family.alpha, u ** family.alpha
        loud += (g_o * g_o * p_out + g_i * g_i * p_in - p_out) ** 2
        mixed.append(g_o * tail[n] + g_i * head[n])

    pre = list(mono_out[max(0, len(mono_out) - window - guard): len(mono_out) - window])
    post = list(mono_in[window: window + guard])
    z = pre + mixed + post
    trans = 0.0
    for a, b in zip(z, z[1:]):
        excess = abs(b - a) - tau
        if excess > 0:
            trans += excess * excess
    return loud + lam * trans


def oracle_select(out_buf, in_buf, window, lam):
    best = None
    for family in [EQ] + [EnvelopeFamily.power_law(a) for a in sorted(ALPHA_GRID)]:
        total = oracle_cost(family, out_buf, in_buf, window, lam)
        if best is None or total < best[1]:
            best = (family, total)
    return best[0]


class TestEnvelopeGains:
    def test_window_start(self):
        assert envelope_gains(EQ, 0, 128) == (1.0, 0.0)
        assert envelope_gains(EnvelopeFamily.power_law(2.5), 0, 128) == (1.0, 0.0)

    def test_window_end(self):
        g_out, g_in = envelope_gains(EQ, 128, 128)
        assert g_out == pytest.approx(0.0, abs=1e-15)
        assert g_in == 1.0
        assert envelope_gains(EnvelopeFamily.power_law(2.5), 128, 128) == (0.0, 1.0)

    def test_equal_power_midpoint(self):
        g_out, g_in = envelope_gains(EQ, 64, 128)
        assert g_out == pytest.approx(math.sqrt(2) / 2, abs=1e-12)
        assert g_in == pytest.approx(math.sqrt(2) / 2, abs=1e-12)

    def test_power_law_midpoint(self):
        g_out, g_in = envelope_gains(EnvelopeFamily.power_law(2.5), 64, 128)
        assert g_out == pytest.approx(0.5 ** 2.5, abs=1e-12)
        assert g_in == pytest.approx(0.5 ** 2.5, abs=1e-12)

    def test_out_of_window(self):
        with pytest.raises(IndexOutOfWindow):
            envelope_gains(EQ, -1, 10)
        with pytest.raises(IndexOutOfWindow):
            envelope_gains(EQ, 11, 10)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(min_value=1, max_value=50000), st.data())
    def test_equal_power_identity(self, window, data):
        n = data.draw(st.integers(min_value=0, max_value=window))
        g_out, g_in = envelope_gains(EQ, n, window)
        assert abs(g_out * g_out + g_in * g_in - 1.0) < 1e-9

    @pytest.mark.parametrize("family", candidate_families())
    def test_monotonic_and_boundary_exact(self, family):
        window = 733
        values = [envelope_gains(family, n, window) for n in range(window + 1)]
        outs = [v[0] for v in values]
        ins = [v[1] for v in values]
        assert outs[0] == 1.0 and ins[0] == 0.0
        assert outs[-1] == pytest.approx(0.0, abs=1e-15) and ins[-1] == 1.0
        assert all(a >= b - 1e-15 for a, b in zip(outs, outs[1:]))
        assert all(a <= b + 1e-15 for a, b in zip(ins, ins[1:]))

    def test_invalid_family(self):
        with pytest.raises(ValueError):
            EnvelopeFamily("triangle")
        with pytest.raises(ValueError):
            EnvelopeFamily.power_law(0.0)


class TestSplice:
    def plan(self, n, family=EQ):
        return CrossfadePlan(family, n, n / 44100)

    def test_zero_in_zero_out(self):
        out = splice(AudioBuffer.silence(500), AudioBuffer.silence(500), self.plan(500))
        assert np.all(out.data == 0.0)

    def test_constant_halves_closed_form(self):
        n = 400
        buf = AudioBuffer(np.full((n, 2), 0.5))
        out = splice(buf, buf, self.plan(n))
        u = np.arange(n) / n
        expected = 0.5 * (np.cos(np.pi * u / 2) + np.sin(np.pi * u / 2))
        assert np.allclose(out.data[:, 0], expected, atol=1e-12)
        assert out.data[n // 2, 0] == pytest.approx(math.sqrt(2) / 2, abs=1e-9)

    def test_uncorrelated_noise_rms_within_1db(self):
        rng = np.random.default_rng(7)
        n = 44100
        a = AudioBuffer(np.clip(rng.standard_normal((n, 2)) * 0.2, -1, 1))
        b = AudioBuffer(np.clip(rng.standard_normal((n, 2)) * 0.2, -1, 1))
        mixed = splice(a, b, self.plan(n))
        in_db = rms_power(a, 0, n).rms_db
        out_db = rms_power(mixed, 0, n).rms_db
        assert abs(out_db - in_db) < 1.0

    def test_window_exceeds_buffer(self):
        with pytest.raises(WindowExceedsBuffer):
            splice(AudioBuffer.silence(10), AudioBuffer.silence(500), self.plan(100))

    def test_plan_validates_sample_count(self):
        with pytest.raises(ValueError):
            CrossfadePlan(EQ, 100, 1.0)  # 1.0 s is 44100 samples


class TestTransientCost:
    def test_constant_signal(self):
        assert transient_cost(np.full(1000, 0.4)) == 0.0

    def test_full_scale_step(self):
        z = np.concatenate([np.zeros(100), np.ones(100)])
        assert transient_cost(z, tau=0.05) == pytest.approx((1.0 - 0.05) ** 2, abs=1e-12)

    def test_smooth_sine_under_threshold(self):
        t = np.arange(4410) / 44100
        z = 0.7 * np.sin(2 * np.pi * 440.0 * t)
        assert transient_cost(z, tau=0.05) == 0.0


def dc_buffer(n, value):
    return AudioBuffer.from_mono(np.full(n, value))


def click_buffer(n, click, spacing, floor):
    x = np.full(n, floor)
    for p in range(0, n, spacing):
        x[p] = click
    return AudioBuffer.from_mono(x)


class TestSelectEnvelope:
    def test_matched_steady_state_equal_power_zero_mismatch(self):
        n = 4000
        out = dc_buffer(n + 256, 0.3)
        inc = dc_buffer(n + 256, 0.3)
        ctx = build_splice_context(out, inc, n, "verse", 1.0)
        family, cost = select_envelope(ctx, out, inc, n)
        assert family == EQ
        assert cost.loudness_mismatch == 0.0
        assert cost.total == 0.0

    def test_sparse_pair_prefers_power_law_2_5(self):
        # quiet sustained outgoing against sparse loud clicks: the mid-alpha
        # envelope balances loudness tracking against click suppression
        n = 4000
        out = dc_buffer(n + 256, 0.2)
        inc = click_buffer(n + 256, 0.8, 400, 0.02)
        ctx = build_splice_context(out, inc, n, "verse", 1.0)
        family, cost = select_envelope(ctx, out, inc, n)
        assert family == EnvelopeFamily.power_law(2.5)
        assert family == oracle_select(out, inc, n, 1.0)

    def test_silence_tie_breaks_to_equal_power(self):
        n = 2000
        out = AudioBuffer.silence(n)
        inc = AudioBuffer.silence(n)
        ctx = SpliceContext(
            delta_p_db=0.0,
            section_role="verse",
            p_target=rms_power(out, 0, n),
            transient_weight=0.0,
        )
        family, cost = select_envelope(ctx, out, inc, n)
        assert family == EQ
        assert cost.total == 0.0

    def test_total_is_sum_of_parts(self):
        n = 3000
        rng = np.random.default_rng(11)
        out = AudioBuffer.from_mono(np.clip(rng.standard_normal(n) * 0.3, -1, 1))
        inc = AudioBuffer.from_mono(np.clip(rng.standard_normal(n) * 0.1, -1, 1))
        ctx = build_splice_context(out, inc, n, "verse", 2.0)
        _, cost = select_envelope(ctx, out, inc, n)
        assert cost.total == cost.loudness_mismatch + cost.transient_weight * cost.transient_cost

    def test_oracle_equivalence_randomized(self):
        rng = np.random.default_rng(99)
        for _ in range(25):
            n = int(rng.integers(500, 3000))
            lam = float(rng.uniform(0.0, 3.0))
            kind = rng.integers(0, 3)
            def noise(scale):
                return AudioBuffer.from_mono(
                    np.clip(rng.standard_normal(n + 256) * scale, -1, 1)
                )
            if kind == 0:
                out, inc = noise(rng.uniform(0.05, 0.5)), noise(rng.uniform(0.05, 0.5))
            elif kind == 1:
                out = dc_buffer(n + 256, rng.uniform(0.05, 0.5))
                inc = click_buffer(n + 256, rng.uniform(0.3, 0.9), int(rng.integers(200, 900)), rng.uniform(0.0, 0.1))
            else:
                t = np.arange(n + 256) / 44100
                out = AudioBuffer.from_mono(rng.uniform(0.1, 0.6) * np.sin(2 * np.pi * 220 * t))
                inc = noise(rng.uniform(0.05, 0.4))
            ctx = build_splice_context(out, inc, n, "verse", lam)
            family, _ = select_envelope(ctx, out, inc, n)
            assert family == oracle_select(out, inc, n, lam)

    def test_delta_p_measures_level_difference(self):
        n = 2000
        out = dc_buffer(n, 0.4)
        inc = dc_buffer(n, 0.2)
        ctx = build_splice_context(out, inc, n, "verse", 1.0)
        assert ctx.delta_p_db == pytest.approx(20 * math.log10(0.5), abs=1e-9)
        assert ctx.p_target.rms == pytest.approx(0.4, abs=1e-12)

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            SpliceContext(0.0, "verse", rms_power(AudioBuffer.silence(10), 0, 10), -1.0)
