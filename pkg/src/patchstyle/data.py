"""Frame, mask, and keyframe containers plus patch sampling.

Frames are float32 RGB arrays in [0, 1] with shape (H, W, 3).  Masks are
boolean arrays of shape (H, W).  Guidance layers share the frame layout and
carry auxiliary input channels.  Patch batches are sampled uniformly over the
true mask pixels of the given keyframes; patches that overhang the frame
border are completed by reflection so every masked pixel is a legal center.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    ChannelMismatchError,
    DimensionMismatchError,
    EmptyInputError,
    PairingError,
    SamplingError,
)

MASK_THRESHOLD = 128


@dataclass(frozen=True)
class Frame:
    """One RGB image of a sequence."""

    index: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise DimensionMismatchError(
                f"frame pixels must be (H, W, 3), got {self.pixels.shape}"
            )
        if self.pixels.dtype != np.float32:
            object.__setattr__(self, "pixels", self.pixels.astype(np.float32))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class Mask:
    """Boolean region-of-interest mask for one frame."""

    bits: np.ndarray

    def __post_init__(self):
        if self.bits.ndim != 2:
            raise DimensionMismatchError(f"mask must be (H, W), got {self.bits.shape}")
        if self.bits.dtype != np.bool_:
            object.__setattr__(self, "bits", self.bits.astype(np.bool_))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @classmethod
    def full(cls, height: int, width: int) -> "Mask":
        return cls(np.ones((height, width), dtype=np.bool_))


@dataclass(frozen=True)
class GuidanceLayer:
    """Auxiliary input channels aligned with a frame (same H, W)."""

    pixels: np.ndarray

    def __post_init__(self):
        if self.pixels.ndim != 3:
            raise DimensionMismatchError(
                f"guidance pixels must be (H, W, C), got {self.pixels.shape}"
            )
        if self.pixels.dtype != np.float32:
            object.__setattr__(self, "pixels", self.pixels.astype(np.float32))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]


@dataclass
class Keyframe:
    """An input frame paired with its stylized counterpart and mask."""

    index: int
    input: Frame
    style: Frame
    mask: Mask
    guidance: GuidanceLayer | None = None

    def __post_init__(self):
        shape = self.input.pixels.shape[:2]
        if self.style.pixels.shape[:2] != shape:
            raise DimensionMismatchError(
                f"style {self.style.pixels.shape[:2]} does not match input {shape}"
            )
        if self.mask.bits.shape != shape:
            raise DimensionMismatchError(
                f"mask {self.mask.bits.shape} does not match input {shape}"
            )
        if self.guidance is not None and self.guidance.pixels.shape[:2] != shape:
            raise DimensionMismatchError(
                f"guidance {self.guidance.pixels.shape[:2]} does not match input {shape}"
            )


@dataclass
class Sequence:
    """An ordered list of frames with optional per-frame masks and guidance."""

    frames: list[Frame]
    masks: list[Mask] | None = None
    guidance: list[GuidanceLayer] | None = None

    def __post_init__(self):
        if not self.frames:
            raise EmptyInputError("sequence has no frames")
        shape = self.frames[0].pixels.shape[:2]
        for frame in self.frames:
            if frame.pixels.shape[:2] != shape:
                raise DimensionMismatchError("frames in a sequence must share a shape")
        for name, items in (("masks", self.masks), ("guidance", self.guidance)):
            if items is None:
                continue
            if len(items) != len(self.frames):
                raise PairingError(f"{name} count {len(items)} != frame count {len(self.frames)}")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def height(self) -> int:
        return self.frames[0].height

    @property
    def width(self) -> int:
        return self.frames[0].width


@dataclass
class PatchBatch:
    """A batch of co-located input/target crops with per-pixel loss masks."""

    inputs: np.ndarray
    targets: np.ndarray
    loss_masks: np.ndarray
    origins: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class KeyframeSpec:
    """One entry of a keyframe spec file: frame index plus style/mask paths."""

    index: int
    style: Path
    mask: Path | None = None


def image_to_array(image: Image.Image) -> np.ndarray:
    return np.asarray(image.convert("RGB"), dtype=np.float32) / 255.0


def array_to_image(pixels: np.ndarray) -> Image.Image:
    clipped = np.clip(pixels, 0.0, 1.0)
    return Image.fromarray((clipped * 255.0 + 0.5).astype(np.uint8))


def load_frame(path: str | Path, index: int = 0) -> Frame:
    with Image.open(path) as image:
        return Frame(index=index, pixels=image_to_array(image))


def save_frame(frame: Frame, path: str | Path) -> None:
    array_to_image(frame.pixels).save(path)


def load_mask(path: str | Path) -> Mask:
    with Image.open(path) as image:
        gray = np.asarray(image.convert("L"))
    return Mask(gray >= MASK_THRESHOLD)


def _png_paths(directory: Path) -> list[Path]:
    return sorted(p for p in directory.iterdir() if p.suffix.lower() == ".png")


def load_sequence(
    directory: str | Path,
    mask_directory: str | Path | None = None,
    guidance_directory: str | Path | None = None,
) -> Sequence:
    """Loads the PNG files of a directory as a sequence, in filename order.

    Masks and guidance, when given, must contain one file per frame with the
    same filename.  Masks are grayscale images thresholded at 128.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise EmptyInputError(f"not a directory: {directory}")
    paths = _png_paths(directory)
    if not paths:
        raise EmptyInputError(f"no PNG frames in {directory}")
    frames = []
    for index, path in enumerate(paths):
        frame = load_frame(path, index)
        if frames and frame.pixels.shape != frames[0].pixels.shape:
            raise DimensionMismatchError(
                f"{path.name} is {frame.width}x{frame.height}, "
                f"expected {frames[0].width}x{frames[0].height}"
            )
        frames.append(frame)

    masks = None
    if mask_directory is not None:
        masks = []
        for path in paths:
            mask_path = Path(mask_directory) / path.name
            if not mask_path.exists():
                raise PairingError(f"no mask for frame {path.name}")
            mask = load_mask(mask_path)
            if mask.bits.shape != frames[0].pixels.shape[:2]:
                raise DimensionMismatchError(f"mask {path.name} does not match frame size")
            masks.append(mask)

    guidance = None
    if guidance_directory is not None:
        guidance = []
        for path in paths:
            guide_path = Path(guidance_directory) / path.name
            if not guide_path.exists():
                raise PairingError(f"no guidance for frame {path.name}")
            guidance.append(GuidanceLayer(load_frame(guide_path).pixels))

    return Sequence(frames=frames, masks=masks, guidance=guidance)


def save_sequence(sequence: Sequence, directory: str | Path) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for frame in sequence.frames:
        path = directory / f"{frame.index:05d}.png"
        save_frame(frame, path)
        paths.append(path)
    return paths


def load_keyframe_spec(path: str | Path) -> list[KeyframeSpec]:
    """Reads a keyframe spec JSON file; relative paths resolve against it."""
    path = Path(path)
    with open(path) as handle:
        entries = json.load(handle)
    if not isinstance(entries, list) or not entries:
        raise EmptyInputError(f"keyframe spec {path} must be a non-empty list")
    specs = []
    for entry in entries:
        if "index" not in entry or "style" not in entry:
            raise PairingError(f"keyframe spec entry missing index/style: {entry}")
        mask = entry.get("mask")
        specs.append(
            KeyframeSpec(
                index=int(entry["index"]),
                style=path.parent / entry["style"],
                mask=path.parent / mask if mask else None,
            )
        )
    return specs


def load_keyframes(sequence: Sequence, specs: list[KeyframeSpec]) -> list[Keyframe]:
    """Pairs spec entries with sequence frames and loads style/mask images."""
    if not specs:
        raise EmptyInputError("no keyframe specs given")
    keyframes = []
    for spec in specs:
        if not 0 <= spec.index < len(sequence):
            raise PairingError(
                f"keyframe index {spec.index} outside sequence of {len(sequence)} frames"
            )
        input_frame = sequence.frames[spec.index]
        style = load_frame(spec.style, spec.index)
        if spec.mask is not None:
            mask = load_mask(spec.mask)
        else:
            mask = Mask.full(input_frame.height, input_frame.width)
        if not mask.bits.any():
            raise EmptyInputError(f"keyframe {spec.index} mask has no true bits")
        guidance = sequence.guidance[spec.index] if sequence.guidance else None
        keyframes.append(
            Keyframe(index=spec.index, input=input_frame, style=style, mask=mask, guidance=guidance)
        )
    return keyframes


def _pad_reflect(pixels: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return pixels
    width = ((pad, pad), (pad, pad)) + ((0, 0),) * (pixels.ndim - 2)
    return np.pad(pixels, width, mode="reflect")


def keyframe_input_channels(keyframe: Keyframe, use_guidance: bool) -> np.ndarray:
    """Stacks the network input channels (RGB plus guidance when enabled)."""
    if not use_guidance:
        return keyframe.input.pixels
    if keyframe.guidance is None:
        raise ChannelMismatchError(f"keyframe {keyframe.index} has no guidance layer")
    return np.concatenate([keyframe.input.pixels, keyframe.guidance.pixels], axis=2)


def sample_patch_batch(
    keyframes: list[Keyframe],
    patch_size: int,
    batch_size: int,
    rng: np.random.Generator,
    use_guidance: bool = False,
) -> PatchBatch:
    """Samples co-located input/target crops centered on masked pixels.

    Centers are drawn uniformly (with replacement) from the pooled true mask
    pixels of all keyframes, so keyframes contribute in proportion to their
    mask areas.  The crop of an even-sized patch places its center at
    row/column ``patch_size // 2``.  Frames, styles, and masks are
    reflection-padded so border centers stay valid; the loss mask is the
    co-located crop of the (padded) keyframe mask.  ``origins`` rows hold
    ``(keyframe_index, center_x, center_y)``.
    """
    if not keyframes:
        raise EmptyInputError("no keyframes to sample from")
    if patch_size < 8:
        raise SamplingError(f"patch_size must be >= 8, got {patch_size}")
    if batch_size < 1:
        raise SamplingError(f"batch_size must be >= 1, got {batch_size}")
    for keyframe in keyframes:
        if patch_size > min(keyframe.input.height, keyframe.input.width):
            raise SamplingError(
                f"patch_size {patch_size} exceeds keyframe {keyframe.index} dimensions"
            )

    pools = [np.argwhere(keyframe.mask.bits) for keyframe in keyframes]
    counts = np.array([len(pool) for pool in pools])
    total = int(counts.sum())
    if total == 0:
        raise SamplingError("all keyframe masks are empty")

    choice = rng.integers(0, total, size=batch_size)
    bounds = np.cumsum(counts)
    which = np.searchsorted(bounds, choice, side="right")

    pad = patch_size // 2
    padded = []
    for keyframe in keyframes:
        padded.append(
            (
                _pad_reflect(keyframe_input_channels(keyframe, use_guidance), pad),
                _pad_reflect(keyframe.style.pixels, pad),
                _pad_reflect(keyframe.mask.bits, pad),
            )
        )

    in_channels = padded[0][0].shape[2]
    inputs = np.empty((batch_size, patch_size, patch_size, in_channels), dtype=np.float32)
    targets = np.empty((batch_size, patch_size, patch_size, 3), dtype=np.float32)
    loss_masks = np.empty((batch_size, patch_size, patch_size), dtype=np.bool_)
    origins = np.empty((batch_size, 3), dtype=np.int64)

    for row, (k, pick) in enumerate(zip(which, choice)):
        local = pick - (bounds[k - 1] if k > 0 else 0)
        y, x = pools[k][local]
        # Center (y, x) maps to top-left (y, x) in the pad-shifted arrays.
        src_in, src_style, src_mask = padded[k]
        inputs[row] = src_in[y : y + patch_size, x : x + patch_size]
        targets[row] = src_style[y : y + patch_size, x : x + patch_size]
        loss_masks[row] = src_mask[y : y + patch_size, x : x + patch_size]
        origins[row] = (keyframes[k].index, x, y)

    return PatchBatch(inputs=inputs, targets=targets, loss_masks=loss_masks, origins=origins)


def fullframe_batch(keyframes: list[Keyframe], use_guidance: bool = False) -> PatchBatch:
    """Builds a batch holding each keyframe once, uncropped."""
    if not keyframes:
        raise EmptyInputError("no keyframes to batch")
    shape = keyframes[0].input.pixels.shape[:2]
    for keyframe in keyframes:
        if keyframe.input.pixels.shape[:2] != shape:
            raise DimensionMismatchError("fullframe batching needs equal-sized keyframes")
    inputs = np.stack([keyframe_input_channels(k, use_guidance) for k in keyframes])
    targets = np.stack([k.style.pixels for k in keyframes])
    loss_masks = np.stack([k.mask.bits for k in keyframes])
    origins = np.array([(k.index, 0, 0) for k in keyframes], dtype=np.int64)
    return PatchBatch(inputs=inputs, targets=targets, loss_masks=loss_masks, origins=origins)
