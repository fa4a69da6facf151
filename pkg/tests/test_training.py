"""Training loop, config validation, checkpoints, and evaluation."""

import json
import os
import zipfile

import numpy as np
import pytest
import torch

from patchstyle import (
    ChannelMismatchError,
    CheckpointError,
    ConfigError,
    Frame,
    LossWeights,
    TrainConfig,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    train,
)
from patchstyle.networks import forward_image
from patchstyle.training import EvalPair, HISTORY_COLUMNS, TrainingHistory

from conftest import keyframe_from_frames, make_frames

L1_ONLY = LossWeights(l1=1.0, adversarial=0.0, perceptual=0.0)


def tiny_config(**overrides):
    base = dict(
        patch_size=16,
        batch_size=8,
        learning_rate=0.002,
        resnet_blocks=1,
        base_filters=8,
        budget_steps=5,
        seed=0,
        loss_weights=L1_ONLY,
    )
    base.update(overrides)
    return TrainConfig(**base)


class TestConfigValidation:
    def test_range_bounds(self):
        with pytest.raises(ConfigError):
            tiny_config(patch_size=8)  # below 12
        with pytest.raises(ConfigError):
            tiny_config(batch_size=4)  # below 5
        with pytest.raises(ConfigError):
            tiny_config(learning_rate=0.0001)
        with pytest.raises(ConfigError):
            tiny_config(resnet_blocks=41)
        # boundary values are legal
        tiny_config(patch_size=12)
        tiny_config(learning_rate=0.0032)

    def test_extended_ranges_flag(self):
        with pytest.raises(ConfigError):
            tiny_config(patch_size=8)
        cfg = tiny_config(patch_size=8, allow_extended_ranges=True)
        assert cfg.patch_size == 8

    def test_patch_divisibility(self):
        with pytest.raises(ConfigError):
            tiny_config(patch_size=18)
        tiny_config(patch_size=16, downsample_steps=2)

    def test_budget_exactly_one(self):
        with pytest.raises(ConfigError):
            tiny_config(budget_steps=None)
        with pytest.raises(ConfigError):
            tiny_config(budget_steps=5, budget_seconds=2.0)
        with pytest.raises(ConfigError):
            tiny_config(budget_steps=-1)
        with pytest.raises(ConfigError):
            tiny_config(budget_steps=None, budget_seconds=0.0)
        with pytest.raises(ConfigError):
            tiny_config(budget_steps=None, budget_seconds=-3.0)

    def test_mode_and_augmentation_names(self):
        with pytest.raises(ConfigError):
            tiny_config(mode="patchy")
        with pytest.raises(ConfigError):
            tiny_config(augmentation="blur")

    def test_json_round_trip_including_inf(self):
        cfg = tiny_config(budget_steps=None, budget_seconds=float("inf"))
        data = json.loads(json.dumps(cfg.to_json_dict()))
        back = TrainConfig.from_json_dict(data)
        assert back == cfg
        assert back.budget_seconds == float("inf")

    def test_unknown_field_rejected(self):
        with pytest.raises(ConfigError):
            TrainConfig.from_json_dict({"budget_steps": 5, "warp_speed": 9})

    def test_config_hash_stable_and_sensitive(self):
        a = tiny_config()
        b = tiny_config()
        c = tiny_config(seed=1)
        assert a.config_hash() == b.config_hash()
        assert a.config_hash() != c.config_hash()


def test_zero_step_budget_emits_initial_checkpoint_only():
    frames = make_frames(1, size=(32, 32))
    keyframe = keyframe_from_frames(frames)
    seen = []
    checkpoint = train([keyframe], tiny_config(budget_steps=0), checkpoint_sink=seen.append)
    assert checkpoint.step == 0
    assert checkpoint.history.rows == []
    assert len(seen) == 1
    assert seen[0].step == 0


def test_checkpoint_hash_matches_config():
    frames = make_frames(1, size=(32, 32))
    keyframe = keyframe_from_frames(frames)
    config = tiny_config(budget_steps=2)
    checkpoint = train([keyframe], config)
    assert checkpoint.config_hash == config.config_hash()
    assert checkpoint.train_config == config


def test_identity_style_reconstruction_improves_tenfold():
    # Style equals the input on a flat-texture keyframe; the untrained
    # (step-0) keyframe L1 is the baseline the run must beat by 10x.
    import dataclasses

    from patchstyle import Keyframe, Mask
    from conftest import background_rgb

    flat = background_rgb(48, 48).astype(np.float32)
    frame = Frame(0, flat)
    keyframe = Keyframe(index=0, input=frame, style=Frame(0, flat.copy()), mask=Mask.full(48, 48))
    config = tiny_config(budget_steps=500, learning_rate=0.0032)
    trained = train([keyframe], config)
    untrained = train([keyframe], dataclasses.replace(config, budget_steps=0))
    pair = [EvalPair(frame, Frame(0, flat))]
    baseline = evaluate(untrained, pair).l1
    final = evaluate(trained, pair).l1
    assert final <= baseline / 10


def test_reference_optimum_loss_trends_down():
    frames = make_frames(1, size=(128, 128))
    keyframe = keyframe_from_frames(frames)
    config = TrainConfig(
        patch_size=36,
        batch_size=40,
        learning_rate=0.0004,
        resnet_blocks=7,
        base_filters=16,
        budget_steps=200,
        seed=0,
        loss_weights=L1_ONLY,
    )
    checkpoint = train([keyframe], config)
    losses = [row.l1 for row in checkpoint.history.rows]
    assert len(losses) == 200
    assert np.median(losses[-50:]) < np.median(losses[:50])
    assert np.median(losses[-50:]) < losses[0]


def test_training_deterministic_bitwise():
    frames = make_frames(1, size=(48, 48))
    keyframe = keyframe_from_frames(frames)
    config = tiny_config(
        budget_steps=15,
        loss_weights=LossWeights(l1=1.0, adversarial=0.05, perceptual=0.01),
    )
    a = train([keyframe], config)
    b = train([keyframe], config)

    def losses(checkpoint):
        return [
            (r.step, r.l1, r.adv_g, r.adv_d, r.perceptual, r.total)
            for r in checkpoint.history.rows
        ]

    assert losses(a) == losses(b)
    for key in a.generator_state:
        assert torch.equal(a.generator_state[key], b.generator_state[key])
    for key in a.discriminator_state:
        assert torch.equal(a.discriminator_state[key], b.discriminator_state[key])


def test_tiled_patches_equal_fullframe_l1():
    # Cutting one 64x64 output into four 32x32 tiles must not change the
    # masked-mean L1 (all-true masks, equal pixel counts per tile).
    from patchstyle import compute_loss

    rng = np.random.default_rng(2)
    predicted = torch.tensor(rng.random((1, 3, 64, 64), dtype=np.float32))
    target = torch.tensor(rng.random((1, 3, 64, 64), dtype=np.float32))
    whole = compute_loss(predicted, target, np.ones((1, 64, 64), bool), L1_ONLY).detached()

    tiles_p = []
    tiles_t = []
    for top in (0, 32):
        for left in (0, 32):
            tiles_p.append(predicted[0, :, top : top + 32, left : left + 32])
            tiles_t.append(target[0, :, top : top + 32, left : left + 32])
    tiled = compute_loss(
        torch.stack(tiles_p), torch.stack(tiles_t), np.ones((4, 32, 32), bool), L1_ONLY
    ).detached()
    assert tiled.l1 == pytest.approx(whole.l1, abs=1e-6)


def test_fullframe_mode_trains():
    frames = make_frames(1, size=(36, 36))  # deliberately not divisible by 4
    keyframe = keyframe_from_frames(frames)
    checkpoint = train([keyframe], tiny_config(mode="fullframe", budget_steps=3))
    assert checkpoint.step == 3


@pytest.mark.parametrize(
    "augmentation",
    ["gaussian-noise", "pixel-erase", "occlusion", "dropout-map", "dropout-pixel"],
)
def test_augmentations_run(augmentation):
    frames = make_frames(1, size=(32, 32))
    keyframe = keyframe_from_frames(frames)
    checkpoint = train([keyframe], tiny_config(budget_steps=3, augmentation=augmentation))
    assert checkpoint.step == 3
    assert all(np.isfinite(row.total) for row in checkpoint.history.rows)


def test_checkpoint_cadence_by_steps():
    frames = make_frames(1, size=(32, 32))
    keyframe = keyframe_from_frames(frames)
    seen = []
    train([keyframe], tiny_config(budget_steps=10, checkpoint_steps=4), checkpoint_sink=seen.append)
    assert [c.step for c in seen] == [4, 8, 10]


def test_warm_keyframe_swap_records_event():
    frames = make_frames(1, size=(32, 32))
    keyframe = keyframe_from_frames(frames)
    replacement = keyframe_from_frames(frames)
    replacement.style.pixels[:] = 1.0 - replacement.style.pixels

    class SwapOnce:
        def __init__(self):
            self.calls = 0

        def poll(self):
            self.calls += 1
            return [replacement] if self.calls == 4 else None

        def should_stop(self):
            return False

    checkpoint = train([keyframe], tiny_config(budget_steps=8), control=SwapOnce())
    assert checkpoint.step == 8
    assert (3, "keyframe-update") in checkpoint.history.events


def test_control_stop_halts_training():
    frames = make_frames(1, size=(32, 32))
    keyframe = keyframe_from_frames(frames)

    class StopAfter:
        def __init__(self, n):
            self.n = n

        def poll(self):
            return None

        def should_stop(self):
            self.n -= 1
            return self.n < 0

    checkpoint = train(
        [keyframe], tiny_config(budget_steps=1000, budget_seconds=None), control=StopAfter(6)
    )
    assert checkpoint.step == 6


def test_checkpoint_round_trip(tmp_path):
    frames = make_frames(1, size=(32, 32))
    keyframe = keyframe_from_frames(frames)
    config = tiny_config(budget_steps=4, loss_weights=LossWeights(1.0, 0.05, 0.0))
    checkpoint = train([keyframe], config)
    path = tmp_path / "model.ckpt"
    save_checkpoint(checkpoint, path)
    loaded = load_checkpoint(path)
    assert loaded.step == 4
    assert loaded.config_hash == checkpoint.config_hash
    assert loaded.net_config == checkpoint.net_config
    assert loaded.train_config == config
    assert len(loaded.history.rows) == 4
    for key in checkpoint.generator_state:
        assert torch.equal(loaded.generator_state[key], checkpoint.generator_state[key])
    image = frames[0]
    a = forward_image(checkpoint.build_generator(), image)
    b = forward_image(loaded.build_generator(), image)
    assert np.array_equal(a, b)


def test_checkpoint_errors(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.ckpt")
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a zip archive")
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)


def test_checkpoint_overwrite_is_atomic(tmp_path, monkeypatch):
    # A crash while writing the new archive must leave the previous file
    # intact: the write goes to a temp file and only a successful write
    # replaces the destination.
    frames = make_frames(1, size=(32, 32))
    keyframe = keyframe_from_frames(frames)
    checkpoint = train([keyframe], tiny_config(budget_steps=2))
    path = tmp_path / "model.ckpt"
    save_checkpoint(checkpoint, path)

    original_writestr = zipfile.ZipFile.writestr
    calls = {"n": 0}

    def crashing_writestr(self, *args, **kwargs):
        calls["n"] += 1
        if calls["n"] >= 3:
            raise RuntimeError("simulated crash mid-write")
        return original_writestr(self, *args, **kwargs)

    monkeypatch.setattr(zipfile.ZipFile, "writestr", crashing_writestr)
    with pytest.raises(RuntimeError):
        save_checkpoint(checkpoint, path)
    monkeypatch.undo()
    loaded = load_checkpoint(path)  # previous version still loadable
    assert loaded.step == 2
    leftovers = [p for p in os.listdir(tmp_path) if p.endswith(".tmp")]
    assert leftovers == []


def test_history_csv_format(tmp_path):
    frames = make_frames(1, size=(32, 32))
    keyframe = keyframe_from_frames(frames)
    checkpoint = train([keyframe], tiny_config(budget_steps=3))
    path = tmp_path / "history.csv"
    checkpoint.history.write_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == ",".join(HISTORY_COLUMNS)
    assert len(lines) == 4
    parsed = TrainingHistory.from_csv_text(path.read_text())
    assert [row.step for row in parsed.rows] == [1, 2, 3]


def test_train_requires_keyframes():
    with pytest.raises(ConfigError):
        train([], tiny_config())


def test_train_guidance_channel_check():
    frames = make_frames(1, size=(32, 32))
    keyframe = keyframe_from_frames(frames)  # no guidance layer
    with pytest.raises(ChannelMismatchError):
        train([keyframe], tiny_config(use_guidance=True))


class TestEvaluate:
    def test_self_evaluation_is_zero(self):
        frames = make_frames(1, size=(32, 32))
        keyframe = keyframe_from_frames(frames)
        checkpoint = train([keyframe], tiny_config(budget_steps=2))
        output = forward_image(checkpoint.build_generator(), frames[0])
        result = evaluate(checkpoint, [EvalPair(Frame(0, frames[0]), Frame(0, output))])
        assert result.l1 == 0.0

    def test_mean_over_pairs(self):
        frames = make_frames(2, size=(32, 32))
        keyframe = keyframe_from_frames(frames)
        checkpoint = train([keyframe], tiny_config(budget_steps=2))
        outputs = [forward_image(checkpoint.build_generator(), f) for f in frames]
        # Untrained-ish outputs hover near mid-gray, leaving room to shift
        # down by the target offsets without leaving [0, 1].
        assert min(o.min() for o in outputs) >= 0.2
        pairs = [
            EvalPair(Frame(0, frames[0]), Frame(0, outputs[0] - 0.1)),
            EvalPair(Frame(1, frames[1]), Frame(1, outputs[1] - 0.2)),
        ]
        result = evaluate(checkpoint, pairs)
        assert result.l1 == pytest.approx(0.15, abs=1e-5)
        assert result.total == pytest.approx(0.15, abs=1e-5)

    def test_masked_evaluation(self):
        frames = make_frames(1, size=(32, 32))
        keyframe = keyframe_from_frames(frames)
        checkpoint = train([keyframe], tiny_config(budget_steps=2))
        output = forward_image(checkpoint.build_generator(), frames[0])
        reference = output.copy()
        reference[:16] = 0.0  # damage only the masked-out half
        from patchstyle import Mask

        bits = np.zeros((32, 32), dtype=bool)
        bits[16:] = True
        pair = EvalPair(Frame(0, frames[0]), Frame(0, reference), mask=Mask(bits))
        assert evaluate(checkpoint, [pair]).l1 == 0.0

    def test_dimension_mismatch(self):
        frames = make_frames(1, size=(32, 32))
        with pytest.raises(ChannelMismatchError):
            keyframe = keyframe_from_frames(frames)
            checkpoint = train([keyframe], tiny_config(budget_steps=1))
            guidance_pixels = np.zeros((32, 32, 3), np.float32)
            from patchstyle import GuidanceLayer

            evaluate(
                checkpoint,
                [
                    EvalPair(
                        Frame(0, frames[0]),
                        Frame(0, frames[0]),
                        guidance=GuidanceLayer(guidance_pixels),
                    )
                ],
            )
        with pytest.raises(Exception):
            EvalPair(Frame(0, frames[0]), Frame(0, np.zeros((16, 16, 3), np.float32)))
