"""Random-access stylization: pad/crop contract, order independence, bench."""

import numpy as np
import pytest

from patchstyle import (
    ChannelMismatchError,
    ConfigError,
    Frame,
    GuidanceLayer,
    Mask,
    NetConfig,
    Sequence,
    bench,
    build_generator,
    measure_inference_seconds,
    stylize_frame,
    stylize_sequence,
)

from conftest import make_frames, sequence_from_frames


def tiny_generator(channels=3, seed=0):
    config = NetConfig(
        resnet_blocks=1, base_filters=4, downsample_steps=2, input_channels=channels
    )
    return build_generator(config, seed=seed)


def frame_of(pixels, index=0):
    return Frame(index=index, pixels=pixels.astype(np.float32))


class TestStylizeFrame:
    def test_even_size_round_trip(self):
        generator = tiny_generator()
        frame = frame_of(make_frames(1, size=(64, 64))[0])
        out = stylize_frame(generator, frame)
        assert out.pixels.shape == (64, 64, 3)
        assert out.pixels.dtype == np.float32
        assert out.index == frame.index
        assert (out.pixels >= 0).all() and (out.pixels <= 1).all()

    def test_odd_size_padded_and_cropped(self):
        # 637x641 is not divisible by the net's downsampling factor; the
        # result must still come back at exactly the input size.
        generator = tiny_generator()
        rng = np.random.default_rng(0)
        frame = frame_of(rng.uniform(size=(641, 637, 3)))
        out = stylize_frame(generator, frame)
        assert out.pixels.shape == (641, 637, 3)

    def test_composite_all_false_mask_is_identity(self):
        generator = tiny_generator()
        frame = frame_of(make_frames(1, size=(32, 32))[0])
        mask = Mask(np.zeros((32, 32), dtype=bool))
        out = stylize_frame(generator, frame, mask=mask, composite=True)
        assert np.array_equal(out.pixels, frame.pixels)

    def test_composite_mixes_by_mask(self):
        generator = tiny_generator()
        frame = frame_of(make_frames(1, size=(32, 32))[0])
        bits = np.zeros((32, 32), dtype=bool)
        bits[:16] = True
        plain = stylize_frame(generator, frame)
        mixed = stylize_frame(generator, frame, mask=Mask(bits), composite=True)
        assert np.array_equal(mixed.pixels[:16], plain.pixels[:16])
        assert np.array_equal(mixed.pixels[16:], frame.pixels[16:])

    def test_guidance_channel_contract(self):
        plain = tiny_generator(channels=3)
        guided = tiny_generator(channels=6)
        frame = frame_of(make_frames(1, size=(32, 32))[0])
        guidance = GuidanceLayer(np.zeros((32, 32, 3), dtype=np.float32))
        with pytest.raises(ChannelMismatchError):
            stylize_frame(guided, frame)
        with pytest.raises(ChannelMismatchError):
            stylize_frame(plain, frame, guidance=guidance)
        out = stylize_frame(guided, frame, guidance=guidance)
        assert out.pixels.shape == (32, 32, 3)

    def test_composite_requires_mask(self):
        generator = tiny_generator()
        frame = frame_of(make_frames(1, size=(32, 32))[0])
        with pytest.raises(ConfigError):
            stylize_frame(generator, frame, composite=True)

    def test_rejects_unknown_checkpoint_type(self):
        frame = frame_of(make_frames(1, size=(32, 32))[0])
        with pytest.raises(ConfigError):
            stylize_frame(42, frame)


class TestStylizeSequence:
    def setup_method(self):
        self.generator = tiny_generator()
        self.sequence = sequence_from_frames(make_frames(6, size=(32, 32)))

    def test_matches_per_frame_calls(self):
        out = stylize_sequence(self.generator, self.sequence)
        assert len(out) == 6
        for i, frame in enumerate(out.frames):
            single = stylize_frame(self.generator, self.sequence.frames[i])
            assert np.array_equal(frame.pixels, single.pixels)
            assert frame.index == self.sequence.frames[i].index

    def test_workers_and_orders_bit_identical(self):
        rng = np.random.default_rng(3)
        orders = [
            None,
            list(reversed(range(6))),
            list(rng.permutation(6)),
        ]
        baseline = stylize_sequence(self.generator, self.sequence, workers=1)
        for workers in (1, 8):
            for order in orders:
                run = stylize_sequence(self.generator, self.sequence, workers=workers, order=order)
                assert len(run) == len(baseline)
                for ours, ref in zip(run.frames, baseline.frames):
                    assert np.array_equal(ours.pixels, ref.pixels)

    def test_mode_flips_stay_outside_worker_section(self, monkeypatch):
        # Workers share one generator, so its train/eval mode must be pinned
        # before they start: a per-frame flip races with concurrent forwards
        # and lets BatchNorm slip into batch statistics mid-frame.
        flips = []
        original = self.generator.train

        def recording_train(mode=True):
            flips.append(mode)
            return original(mode)

        monkeypatch.setattr(self.generator, "train", recording_train)
        stylize_sequence(self.generator, self.sequence, workers=8)
        assert flips == [False, True]
        assert self.generator.training

    def test_partial_order_stylizes_subset(self):
        out = stylize_sequence(self.generator, self.sequence, order=[4, 1])
        assert [f.index for f in out.frames] == [1, 4]

    def test_validation(self):
        with pytest.raises(ConfigError):
            stylize_sequence(self.generator, self.sequence, workers=0)
        with pytest.raises(ConfigError):
            stylize_sequence(self.generator, self.sequence, order=[0, 9])

    def test_composite_uses_per_frame_masks(self):
        frames = make_frames(2, size=(32, 32))
        masks = [Mask(np.zeros((32, 32), dtype=bool)) for _ in frames]
        sequence = Sequence(
            frames=[frame_of(p, i) for i, p in enumerate(frames)], masks=masks
        )
        out = stylize_sequence(self.generator, sequence, composite=True)
        for ours, original in zip(out.frames, sequence.frames):
            assert np.array_equal(ours.pixels, original.pixels)


class TestBench:
    def test_measure_inference_seconds_positive(self):
        seconds = measure_inference_seconds(tiny_generator(), (32, 32), runs=3, warmup=1)
        assert isinstance(seconds, float)
        assert seconds > 0

    def test_bench_report_contract(self):
        report = bench(tiny_generator(), size=64, runs=2, warmup=1)
        assert set(report) == {"fps", "median_ms"}
        assert report["fps"] > 0
        assert report["median_ms"] > 0
        assert report["fps"] == pytest.approx(1000.0 / report["median_ms"])

    def test_validation(self):
        with pytest.raises(ConfigError):
            measure_inference_seconds(tiny_generator(), (32, 32), runs=0)
