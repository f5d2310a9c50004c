import tracemalloc

import numpy as np
import pytest

from avtse import engine as E
from avtse import kernels as K
from avtse.errors import DataError, ShapeError
from avtse.frontend import HOP, AudioBuffer


def make_inputs(rng, n_hops, scale=0.1):
    audio = AudioBuffer(rng.standard_normal(n_hops * HOP).astype(np.float32) * scale)
    lips = rng.random(((n_hops + 3) // 4, 32, 32)).astype(np.float32)
    return audio, lips


class TestProcessFrame:
    def test_silence_in_near_silence_out(self, ws):
        engine = E.StreamingEngine(ws, visual=False)
        outs = [engine.process_frame(np.zeros(HOP, dtype=np.float32))
                for _ in range(40)]
        tail = np.concatenate(outs[10:])
        assert np.sqrt(np.mean(tail ** 2)) < 1e-4

    def test_stream_equals_offline(self, ws, rng):
        audio, lips = make_inputs(rng, 60)
        offline = E.enhance_offline(ws, audio, lips)
        streamed, _ = E.stream_file(ws, audio, lips)
        n = 59 * HOP
        assert np.abs(streamed.samples[HOP:] - offline.samples[:n]).max() < 1e-5

    def test_stream_equals_offline_audio_only(self, ws, rng):
        audio, _ = make_inputs(rng, 40)
        offline = E.enhance_offline(ws, audio, None)
        streamed, _ = E.stream_file(ws, audio, None)
        n = 39 * HOP
        assert np.abs(streamed.samples[HOP:] - offline.samples[:n]).max() < 1e-5

    def test_lip_phase_enforced(self, ws, rng):
        engine = E.StreamingEngine(ws, visual=True)
        lip = rng.random((32, 32)).astype(np.float32)
        with pytest.raises(DataError, match="missing"):
            engine.process_frame(np.zeros(HOP, dtype=np.float32), None)
        engine.reset()
        engine.process_frame(np.zeros(HOP, dtype=np.float32), lip)
        with pytest.raises(DataError, match="off-phase"):
            engine.process_frame(np.zeros(HOP, dtype=np.float32), lip)

    def test_nonfinite_samples_rejected(self, ws):
        engine = E.StreamingEngine(ws, visual=False)
        bad = np.zeros(HOP, dtype=np.float32)
        bad[3] = np.inf
        with pytest.raises(DataError, match="non-finite"):
            engine.process_frame(bad)

    def test_wrong_hop_size_rejected(self, ws):
        engine = E.StreamingEngine(ws, visual=False)
        with pytest.raises(ShapeError):
            engine.process_frame(np.zeros(100, dtype=np.float32))

    def test_determinism_bit_identical(self, ws, rng):
        audio, lips = make_inputs(rng, 24)
        a, _ = E.stream_file(ws, audio, lips)
        b, _ = E.stream_file(ws, audio, lips)
        np.testing.assert_array_equal(a.samples, b.samples)

    def test_one_hop_latency_alignment(self, ws, rng):
        # output hop h carries offline positions [160(h-1), 160h): the
        # engine runs exactly one 10 ms hop behind its input
        audio, _ = make_inputs(rng, 30)
        offline = E.enhance_offline(ws, audio, None)
        streamed, _ = E.stream_file(ws, audio, None)
        np.testing.assert_array_equal(streamed.samples[:HOP], 0.0)
        shifted = streamed.samples[HOP:]
        assert np.abs(shifted - offline.samples[:len(shifted)]).max() < 1e-5
        misaligned = np.abs(streamed.samples[:len(offline.samples)]
                            - offline.samples).max()
        assert misaligned > 1e-3  # without the shift the signals disagree


class TestReset:
    def test_reset_replays_identically(self, ws, rng):
        audio, lips = make_inputs(rng, 20)
        engine = E.StreamingEngine(ws, visual=True)

        def run():
            outs = []
            for h in range(20):
                lip = lips[h // 4] if h % 4 == 0 else None
                outs.append(engine.process_frame(
                    audio.samples[h * HOP:(h + 1) * HOP], lip))
            return np.concatenate(outs)

        first = run()
        engine.reset()
        second = run()
        np.testing.assert_array_equal(first, second)

    def test_reset_equals_fresh_engine(self, ws, rng):
        audio, _ = make_inputs(rng, 12)
        warm = E.StreamingEngine(ws, visual=False)
        for h in range(7):
            warm.process_frame(audio.samples[h * HOP:(h + 1) * HOP])
        warm.reset()
        fresh = E.StreamingEngine(ws, visual=False)
        for h in range(12):
            hop = audio.samples[h * HOP:(h + 1) * HOP]
            np.testing.assert_array_equal(warm.process_frame(hop),
                                          fresh.process_frame(hop))

    def test_double_reset_idempotent(self, ws):
        engine = E.StreamingEngine(ws, visual=False)
        engine.process_frame(np.ones(HOP, dtype=np.float32) * 0.1)
        engine.reset()
        once = engine.process_frame(np.ones(HOP, dtype=np.float32) * 0.1)
        engine.reset()
        engine.reset()
        twice = engine.process_frame(np.ones(HOP, dtype=np.float32) * 0.1)
        np.testing.assert_array_equal(once, twice)


class TestSteadyStateMemory:
    def test_no_unbounded_growth(self, ws, rng):
        engine = E.StreamingEngine(ws, visual=False)
        hop = rng.standard_normal(HOP).astype(np.float32) * 0.1
        for _ in range(60):
            engine.process_frame(hop)
        tracemalloc.start()
        base, _ = tracemalloc.get_traced_memory()
        for _ in range(300):
            engine.process_frame(hop)
        now, _ = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        assert now - base < 512 * 1024  # scratch churn only, no accumulation


class TestComplexity:
    def test_closed_form_linear_example(self, ws):
        # one 64->64 linear applied 100*21 times a second = 8.6016 M MACs/s
        assert 100 * 21 * 64 * 64 == 8_601_600

    def test_brackets(self, ws):
        rep = E.complexity_report(ws)
        assert 1.3e9 <= rep.macs_per_second <= 2.5e9
        assert 0.9e6 <= rep.params <= 1.8e6
        assert 0.09e9 <= rep.breakdown_macs["vvad"] <= 0.36e9

    def test_totals_equal_breakdown_sums(self, ws):
        rep = E.complexity_report(ws)
        assert rep.params == sum(rep.breakdown_params.values())
        assert rep.macs_per_second == sum(rep.breakdown_macs.values())

    def test_narrowband_closed_form(self, ws):
        # LSTM 4*h*(h+in) + linear h*in, per frequency bin, at 100 fps, x2 blocks
        rep = E.complexity_report(ws)
        per_frame = 21 * (4 * 64 * 128) + 21 * 64 * 64
        assert rep.breakdown_macs["tse.narrowband"] == per_frame * 2 * 100

    def test_attention_closed_form(self, ws):
        rep = E.complexity_report(ws)
        per_frame = 4 * 21 * 64 * 64 + 21 * 4 * 2 * 50 * 16
        assert rep.breakdown_macs["tse.attention"] == per_frame * 2 * 100


class TestBench:
    def test_stats_shape_and_determinism_fields(self, ws):
        stats = E.bench(ws, seconds=0.3, warmup_frames=5)
        assert stats.frames == 30
        assert stats.mean_ms > 0
        assert stats.p95_ms >= 0
        assert stats.max_ms >= stats.mean_ms
        assert stats.rtf == pytest.approx(stats.mean_ms / 10.0)
        assert any("real-time factor" in line for line in stats.lines())

    def test_zero_frames_rejected(self, ws):
        with pytest.raises(DataError, match="zero frames"):
            E.bench(ws, seconds=0.0)

    def test_backend_parity_on_stream(self, ws, rng):
        if "compiled" not in K.available_backends():
            pytest.skip("compiled lane unavailable")
        audio, lips = make_inputs(rng, 16)
        K.set_backend("python")
        ref, _ = E.stream_file(ws, audio, lips)
        K.set_backend("compiled")
        fast, _ = E.stream_file(ws, audio, lips)
        K.set_backend("auto")
        assert np.abs(ref.samples - fast.samples).max() < 1e-5
