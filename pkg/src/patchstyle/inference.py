"""Random-access frame stylization and throughput benchmarking.

Inference is stateless across frames: stylizing frame i reads nothing but
frame i (plus its optional guidance/mask), so any order and worker count
produce bit-identical outputs.  A checkpoint's generator is built once,
pinned in eval mode, and shared read-only across workers.
"""

from __future__ import annotations

import statistics
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .data import Frame, GuidanceLayer, Mask, Sequence
from .errors import ChannelMismatchError, ConfigError
from .networks import Generator, forward_padded
from .training import Checkpoint


def _generator_of(checkpoint) -> Generator:
    if isinstance(checkpoint, Generator):
        return checkpoint
    if isinstance(checkpoint, Checkpoint):
        return checkpoint.build_generator()
    raise ConfigError(f"expected Checkpoint or Generator, got {type(checkpoint).__name__}")


def stylize_frame(
    checkpoint,
    frame: Frame,
    guidance: GuidanceLayer | None = None,
    mask: Mask | None = None,
    composite: bool = False,
) -> Frame:
    """Stylizes one frame; pads to divisible dimensions and crops back.

    Guidance must be present exactly when the checkpoint was trained with
    guidance channels.  With ``composite`` set, pixels outside the mask are
    copied from the input frame unchanged.
    """
    generator = _generator_of(checkpoint)
    wants_guidance = generator.config.input_channels == 6
    if wants_guidance and guidance is None:
        raise ChannelMismatchError("checkpoint expects guidance channels but none were given")
    if not wants_guidance and guidance is not None:
        raise ChannelMismatchError("checkpoint does not take guidance channels")
    pixels = frame.pixels
    if guidance is not None:
        pixels = np.concatenate([pixels, guidance.pixels], axis=2)
    stylized = forward_padded(generator, pixels)
    if composite:
        if mask is None:
            raise ConfigError("composite requires a mask")
        stylized = np.where(mask.bits[:, :, None], stylized, frame.pixels)
    return Frame(index=frame.index, pixels=stylized)


def stylize_sequence(
    checkpoint,
    sequence: Sequence,
    workers: int = 1,
    order: list[int] | None = None,
    composite: bool = False,
) -> Sequence:
    """Stylizes every frame (or the given order) with a shared generator."""
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    generator = _generator_of(checkpoint)
    indices = list(range(len(sequence))) if order is None else list(order)
    for index in indices:
        if not 0 <= index < len(sequence):
            raise ConfigError(f"frame index {index} outside sequence")

    def run(index: int) -> Frame:
        frame = sequence.frames[index]
        guidance = sequence.guidance[index] if sequence.guidance else None
        mask = sequence.masks[index] if sequence.masks else None
        return stylize_frame(
            generator, frame, guidance=guidance, mask=mask, composite=composite
        )

    # Workers share the generator, so its train/eval mode must stay fixed
    # while they run: a per-frame flip would race with concurrent forwards.
    outputs: dict[int, Frame] = {}
    was_training = generator.training
    generator.eval()
    try:
        if workers == 1:
            for index in indices:
                outputs[index] = run(index)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                for index, frame in zip(indices, pool.map(run, indices)):
                    outputs[index] = frame
    finally:
        generator.train(was_training)

    frames = [outputs[i] for i in sorted(outputs)]
    return Sequence(frames=frames, masks=None, guidance=None)


def measure_inference_seconds(
    checkpoint,
    size: tuple[int, int],
    runs: int = 10,
    warmup: int = 2,
) -> float:
    """Median wall-clock seconds per frame at (width, height)."""
    if runs < 1 or warmup < 0:
        raise ConfigError("runs must be >= 1 and warmup >= 0")
    generator = _generator_of(checkpoint)
    width, height = size
    channels = generator.config.input_channels
    pixels = np.zeros((height, width, channels), dtype=np.float32)
    for _ in range(warmup):
        forward_padded(generator, pixels)
    samples = []
    for _ in range(runs):
        start = time.perf_counter()
        forward_padded(generator, pixels)
        samples.append(time.perf_counter() - start)
    return statistics.median(samples)


def bench(checkpoint, size: int | tuple[int, int] = 640, runs: int = 10, warmup: int = 2) -> dict:
    """Throughput report: {"fps": ..., "median_ms": ...} at the given size."""
    extent = (size, size) if isinstance(size, int) else tuple(size)
    median = measure_inference_seconds(checkpoint, extent, runs=runs, warmup=warmup)
    return {"fps": 1.0 / median if median > 0 else float("inf"), "median_ms": median * 1000.0}
