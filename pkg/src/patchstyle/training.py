"""Budgeted patch-based adversarial training.

One call to ``train`` owns its generator/discriminator pair exclusively.
Checkpoints are immutable snapshots (state dict copies) emitted through an
optional sink at a configurable cadence and returned at the end.  Budgets
are either an exact step count (tests) or wall-clock seconds (product use);
a step budget of zero emits the initial checkpoint only.

Checkpoint archive layout (zip): weights.pt, net_config.json, meta.json
(step, elapsed_seconds, config_hash, events), train_config.json,
history.csv.  Writes are atomic (temp file + rename).
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import math
import os
import tempfile
import time
import zipfile
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from . import data as data_mod
from .data import Frame, GuidanceLayer, Keyframe, Mask
from .errors import ChannelMismatchError, CheckpointError, ConfigError, DimensionMismatchError
from .losses import LossBreakdown, LossWeights, compute_loss, load_feature_extractor, mean_breakdown
from .networks import (
    Discriminator,
    Generator,
    NetConfig,
    build_discriminator,
    build_generator,
    forward_padded,
)

SUPPORTED_RANGES = {
    "patch_size": (12, 188),
    "batch_size": (5, 1000),
    "learning_rate": (0.0002, 0.0032),
    "resnet_blocks": (1, 40),
}

MODES = ("patch", "fullframe")
AUGMENTATIONS = ("none", "gaussian-noise", "pixel-erase", "occlusion", "dropout-map", "dropout-pixel")

HISTORY_COLUMNS = ("step", "elapsed_seconds", "l1", "adv_g", "adv_d", "perceptual", "total")


def default_device() -> str:
    return os.environ.get("PATCHSTYLE_DEVICE", "cpu")


@dataclass(frozen=True)
class TrainConfig:
    """All training hyper-parameters.

    Supported sweeps keep patch_size in [12, 188], batch_size in
    [5, 1000], learning_rate in [0.0002, 0.0032], and resnet_blocks in
    [1, 40]; set ``allow_extended_ranges`` to step outside them.
    """

    patch_size: int = 36
    batch_size: int = 40
    learning_rate: float = 0.0004
    resnet_blocks: int = 7
    base_filters: int = 32
    downsample_steps: int = 2
    loss_weights: LossWeights = field(default_factory=LossWeights)
    budget_steps: int | None = None
    budget_seconds: float | None = None
    seed: int = 0
    use_guidance: bool = False
    mode: str = "patch"
    augmentation: str = "none"
    augmentation_strength: float | None = None
    checkpoint_seconds: float = 2.0
    checkpoint_steps: int | None = None
    perceptual_weights: str | None = None
    allow_extended_ranges: bool = False
    device: str = field(default_factory=default_device)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.augmentation not in AUGMENTATIONS:
            raise ConfigError(f"unknown augmentation {self.augmentation!r}")
        if not self.allow_extended_ranges:
            for name, (lo, hi) in SUPPORTED_RANGES.items():
                value = getattr(self, name)
                if not lo <= value <= hi:
                    raise ConfigError(
                        f"{name}={value} outside the supported interval [{lo}, {hi}]; "
                        "set allow_extended_ranges to override"
                    )
        if self.patch_size % 2**self.downsample_steps:
            raise ConfigError(
                f"patch_size {self.patch_size} not divisible by 2^{self.downsample_steps}"
            )
        if self.batch_size < 1 or self.resnet_blocks < 1 or self.learning_rate <= 0:
            raise ConfigError("batch_size/resnet_blocks must be >= 1 and learning_rate > 0")
        if (self.budget_steps is None) == (self.budget_seconds is None):
            raise ConfigError("exactly one of budget_steps or budget_seconds must be set")
        if self.budget_steps is not None and self.budget_steps < 0:
            raise ConfigError("budget_steps must be >= 0")
        if self.budget_seconds is not None and self.budget_seconds <= 0:
            raise ConfigError("budget_seconds must be > 0")
        if self.checkpoint_seconds <= 0:
            raise ConfigError("checkpoint_seconds must be > 0")
        if self.checkpoint_steps is not None and self.checkpoint_steps < 1:
            raise ConfigError("checkpoint_steps must be >= 1")

    @property
    def net_config(self) -> NetConfig:
        return NetConfig(
            resnet_blocks=self.resnet_blocks,
            base_filters=self.base_filters,
            downsample_steps=self.downsample_steps,
            input_channels=6 if self.use_guidance else 3,
        )

    def to_json_dict(self) -> dict:
        out = {}
        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            if name == "loss_weights":
                value = value.to_json_dict()
            elif isinstance(value, float) and math.isinf(value):
                value = "inf"
            out[name] = value
        return out

    @classmethod
    def from_json_dict(cls, payload: dict) -> "TrainConfig":
        known = dict(payload)
        unknown = set(known) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown TrainConfig fields: {sorted(unknown)}")
        if isinstance(known.get("loss_weights"), dict):
            known["loss_weights"] = LossWeights.from_json_dict(known["loss_weights"])
        elif isinstance(known.get("loss_weights"), (list, tuple)):
            known["loss_weights"] = LossWeights(*known["loss_weights"])
        if known.get("budget_seconds") == "inf":
            known["budget_seconds"] = math.inf
        return cls(**known)

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_json_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]


@dataclass
class HistoryRow:
    step: int
    elapsed_seconds: float
    l1: float
    adv_g: float
    adv_d: float
    perceptual: float
    total: float

    @classmethod
    def from_breakdown(cls, step: int, elapsed: float, loss: LossBreakdown) -> "HistoryRow":
        detached = loss.detached()
        return cls(
            step=step,
            elapsed_seconds=elapsed,
            l1=detached.l1,
            adv_g=detached.adversarial_g,
            adv_d=detached.adversarial_d,
            perceptual=detached.perceptual,
            total=detached.total,
        )


@dataclass
class TrainingHistory:
    """Per-step loss rows plus (step, label) event markers."""

    rows: list[HistoryRow] = field(default_factory=list)
    events: list[tuple[int, str]] = field(default_factory=list)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(HISTORY_COLUMNS)
            for row in self.rows:
                writer.writerow([getattr(row, col) for col in HISTORY_COLUMNS])

    def to_csv_text(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer)
        writer.writerow(HISTORY_COLUMNS)
        for row in self.rows:
            writer.writerow([getattr(row, col) for col in HISTORY_COLUMNS])
        return buffer.getvalue()

    @classmethod
    def from_csv_text(cls, text: str, events: list[tuple[int, str]] | None = None) -> "TrainingHistory":
        reader = csv.DictReader(io.StringIO(text))
        rows = [
            HistoryRow(
                step=int(entry["step"]),
                elapsed_seconds=float(entry["elapsed_seconds"]),
                l1=float(entry["l1"]),
                adv_g=float(entry["adv_g"]),
                adv_d=float(entry["adv_d"]),
                perceptual=float(entry["perceptual"]),
                total=float(entry["total"]),
            )
            for entry in reader
        ]
        return cls(rows=rows, events=[(int(s), l) for s, l in (events or [])])


@dataclass
class Checkpoint:
    """Immutable training snapshot with provenance."""

    generator_state: dict
    discriminator_state: dict | None
    net_config: NetConfig
    step: int
    elapsed_seconds: float
    config_hash: str
    train_config: TrainConfig | None = None
    history: TrainingHistory = field(default_factory=TrainingHistory)

    def build_generator(self) -> Generator:
        generator = Generator(self.net_config)
        generator.load_state_dict(self.generator_state)
        generator.eval()
        return generator

    def build_discriminator(self) -> Discriminator | None:
        if self.discriminator_state is None:
            return None
        base = self.train_config.base_filters if self.train_config else 32
        disc = Discriminator(self.net_config.input_channels + 3, base_filters=base)
        disc.load_state_dict(self.discriminator_state)
        disc.eval()
        return disc


def save_checkpoint(checkpoint: Checkpoint, path: str | Path) -> None:
    """Writes the checkpoint archive atomically (temp file then rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    weights = io.BytesIO()
    torch.save(
        {"generator": checkpoint.generator_state, "discriminator": checkpoint.discriminator_state},
        weights,
    )
    meta = {
        "step": checkpoint.step,
        "elapsed_seconds": checkpoint.elapsed_seconds,
        "config_hash": checkpoint.config_hash,
        "events": list(checkpoint.history.events),
    }
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            with zipfile.ZipFile(handle, "w", zipfile.ZIP_DEFLATED) as archive:
                archive.writestr("weights.pt", weights.getvalue())
                archive.writestr("net_config.json", json.dumps(checkpoint.net_config.to_json_dict()))
                archive.writestr("meta.json", json.dumps(meta))
                if checkpoint.train_config is not None:
                    archive.writestr(
                        "train_config.json", json.dumps(checkpoint.train_config.to_json_dict())
                    )
                archive.writestr("history.csv", checkpoint.history.to_csv_text())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        with zipfile.ZipFile(path) as archive:
            with archive.open("weights.pt") as handle:
                weights = torch.load(io.BytesIO(handle.read()), map_location="cpu")
            net_config = NetConfig.from_json_dict(json.loads(archive.read("net_config.json")))
            meta = json.loads(archive.read("meta.json"))
            names = set(archive.namelist())
            train_config = None
            if "train_config.json" in names:
                train_config = TrainConfig.from_json_dict(
                    json.loads(archive.read("train_config.json"))
                )
            history = TrainingHistory.from_csv_text(
                archive.read("history.csv").decode(), meta.get("events")
            )
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"malformed checkpoint {path}: {exc}") from exc
    return Checkpoint(
        generator_state=weights["generator"],
        discriminator_state=weights["discriminator"],
        net_config=net_config,
        step=int(meta["step"]),
        elapsed_seconds=float(meta["elapsed_seconds"]),
        config_hash=str(meta["config_hash"]),
        train_config=train_config,
        history=history,
    )


def _augment_inputs(inputs: np.ndarray, config: TrainConfig, rng: np.random.Generator) -> np.ndarray:
    kind = config.augmentation
    if kind in ("none", "dropout-map", "dropout-pixel"):
        return inputs
    out = inputs.copy()
    if kind == "gaussian-noise":
        sigma = 0.05 if config.augmentation_strength is None else config.augmentation_strength
        out += rng.normal(0.0, sigma, size=out.shape).astype(np.float32)
    elif kind == "pixel-erase":
        p = 0.1 if config.augmentation_strength is None else config.augmentation_strength
        erased = rng.random(out.shape[:3]) < p
        out[erased] = 0.0
    elif kind == "occlusion":
        fraction = 0.5 if config.augmentation_strength is None else config.augmentation_strength
        for i in range(out.shape[0]):
            h, w = out.shape[1:3]
            bh = max(1, int(rng.integers(h // 4, max(h // 4, int(h * fraction)) + 1)))
            bw = max(1, int(rng.integers(w // 4, max(w // 4, int(w * fraction)) + 1)))
            top = int(rng.integers(0, h - bh + 1))
            left = int(rng.integers(0, w - bw + 1))
            out[i, top : top + bh, left : left + bw] = 0.0
    return out


def _dropout_spec(config: TrainConfig) -> tuple[str, float] | None:
    if config.augmentation == "dropout-map":
        return ("map", 0.2 if config.augmentation_strength is None else config.augmentation_strength)
    if config.augmentation == "dropout-pixel":
        return ("pixel", 0.2 if config.augmentation_strength is None else config.augmentation_strength)
    return None


def _fullframe_batch(keyframes: list[Keyframe], config: TrainConfig) -> data_mod.PatchBatch:
    batch = data_mod.fullframe_batch(keyframes, use_guidance=config.use_guidance)
    divisor = 2**config.downsample_steps
    h, w = batch.inputs.shape[1:3]
    pad_h = (-h) % divisor
    pad_w = (-w) % divisor
    if pad_h or pad_w:
        pad = ((0, 0), (0, pad_h), (0, pad_w))
        batch.inputs = np.pad(batch.inputs, pad + ((0, 0),), mode="reflect")
        batch.targets = np.pad(batch.targets, pad + ((0, 0),), mode="reflect")
        batch.loss_masks = np.pad(batch.loss_masks, pad, mode="reflect")
    return batch


def _snapshot(module: torch.nn.Module) -> dict:
    return {k: v.detach().cpu().clone() for k, v in module.state_dict().items()}


def _make_checkpoint(generator, discriminator, config, step, elapsed, history) -> Checkpoint:
    return Checkpoint(
        generator_state=_snapshot(generator),
        discriminator_state=_snapshot(discriminator) if discriminator is not None else None,
        net_config=config.net_config,
        step=step,
        elapsed_seconds=elapsed,
        config_hash=config.config_hash(),
        train_config=config,
        history=copy.deepcopy(history),
    )


def train(
    keyframes: list[Keyframe],
    config: TrainConfig,
    checkpoint_sink=None,
    control=None,
) -> Checkpoint:
    """Runs the budgeted training loop and returns the final checkpoint.

    Each step samples a patch batch (or reuses the whole keyframes in
    fullframe mode), updates the generator on the weighted total loss, then
    updates the discriminator on its least-squares objective.  ``control``,
    when given, may expose ``poll()`` returning a replacement keyframe list
    (warm target swap, recorded as a history event) and ``should_stop()``.
    """
    if not keyframes:
        raise ConfigError("train needs at least one keyframe")
    if config.use_guidance and any(k.guidance is None for k in keyframes):
        raise ChannelMismatchError("use_guidance set but a keyframe has no guidance layer")

    device = torch.device(config.device)
    generator = build_generator(config.net_config, seed=config.seed, dropout=_dropout_spec(config)).to(device)
    weights = config.loss_weights
    discriminator = None
    opt_d = None
    if weights.adversarial > 0:
        discriminator = build_discriminator(
            config.net_config.input_channels + 3, seed=config.seed + 1, base_filters=config.base_filters
        ).to(device)
        opt_d = torch.optim.Adam(discriminator.parameters(), lr=config.learning_rate)
    extractor = None
    if weights.perceptual > 0:
        extractor = load_feature_extractor(config.perceptual_weights, seed=config.seed).to(device)
    opt_g = torch.optim.Adam(generator.parameters(), lr=config.learning_rate)

    rng = np.random.default_rng(config.seed)
    history = TrainingHistory()
    start = time.perf_counter()
    last_emit = start
    step = 0

    def elapsed() -> float:
        return time.perf_counter() - start

    def emit() -> Checkpoint:
        snapshot = _make_checkpoint(generator, discriminator, config, step, elapsed(), history)
        if checkpoint_sink is not None:
            checkpoint_sink(snapshot)
        return snapshot

    current = list(keyframes)
    while True:
        if control is not None and control.should_stop():
            break
        if config.budget_steps is not None and step >= config.budget_steps:
            break
        if config.budget_seconds is not None and elapsed() >= config.budget_seconds:
            break
        if control is not None:
            updated = control.poll()
            if updated is not None:
                current = list(updated)
                history.events.append((step, "keyframe-update"))

        if config.mode == "fullframe":
            batch = _fullframe_batch(current, config)
        else:
            batch = data_mod.sample_patch_batch(
                current, config.patch_size, config.batch_size, rng, use_guidance=config.use_guidance
            )
        inputs_np = _augment_inputs(batch.inputs, config, rng)
        inputs = torch.from_numpy(np.ascontiguousarray(inputs_np.transpose(0, 3, 1, 2))).to(device)
        targets = torch.from_numpy(np.ascontiguousarray(batch.targets.transpose(0, 3, 1, 2))).to(device)
        masks = torch.from_numpy(batch.loss_masks).to(device)

        predicted = generator(inputs)
        loss = compute_loss(
            predicted,
            targets,
            masks,
            weights,
            feature_extractor=extractor,
            discriminator=discriminator,
            inputs=inputs,
        )
        opt_g.zero_grad(set_to_none=True)
        loss.total.backward()
        opt_g.step()

        if discriminator is not None:
            # adversarial_d was built on detached predictions, so its graph
            # reaches discriminator parameters only.
            opt_d.zero_grad(set_to_none=True)
            loss.adversarial_d.backward()
            opt_d.step()

        step += 1
        history.rows.append(HistoryRow.from_breakdown(step, elapsed(), loss))

        now = time.perf_counter()
        if config.checkpoint_steps is not None:
            if step % config.checkpoint_steps == 0:
                emit()
                last_emit = now
        elif now - last_emit >= config.checkpoint_seconds:
            emit()
            last_emit = now

    return emit()


@dataclass
class EvalPair:
    """One evaluation item: an input frame with its reference stylization."""

    input: Frame
    reference: Frame
    guidance: GuidanceLayer | None = None
    mask: Mask | None = None

    def __post_init__(self):
        if self.reference.pixels.shape != self.input.pixels.shape:
            raise DimensionMismatchError("reference frame does not match input dimensions")


def evaluate(checkpoint: Checkpoint, pairs: list[EvalPair]) -> LossBreakdown:
    """Full-frame inference on each pair, training loss formula, averaged."""
    if not pairs:
        raise ConfigError("evaluate needs at least one pair")
    config = checkpoint.train_config
    weights = config.loss_weights if config else LossWeights()
    generator = checkpoint.build_generator()
    discriminator = checkpoint.build_discriminator() if weights.adversarial > 0 else None
    extractor = None
    if weights.perceptual > 0:
        extractor = load_feature_extractor(
            config.perceptual_weights if config else None, seed=config.seed if config else 0
        )

    results = []
    for pair in pairs:
        wants_guidance = checkpoint.net_config.input_channels == 6
        if wants_guidance != (pair.guidance is not None):
            raise ChannelMismatchError(
                "evaluation pair guidance does not match checkpoint input channels"
            )
        pixels = pair.input.pixels
        if pair.guidance is not None:
            pixels = np.concatenate([pixels, pair.guidance.pixels], axis=2)
        predicted_np = forward_padded(generator, pixels)
        predicted = torch.from_numpy(predicted_np.transpose(2, 0, 1))[None]
        target = torch.from_numpy(pair.reference.pixels.transpose(2, 0, 1).copy())[None]
        mask_bits = (
            pair.mask.bits if pair.mask is not None else np.ones(pixels.shape[:2], dtype=bool)
        )
        inputs = torch.from_numpy(pixels.transpose(2, 0, 1).copy())[None]
        loss = compute_loss(
            predicted,
            target,
            mask_bits[None],
            weights,
            feature_extractor=extractor,
            discriminator=discriminator,
            inputs=inputs,
        )
        results.append(loss)
    return mean_breakdown(results)
