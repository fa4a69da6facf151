"""Fully convolutional translation generator and patch discriminator.

The generator is an encoder / residual-bottleneck / decoder U-net:

- a 3x3 stem convolution to ``base_filters`` channels,
- ``downsample_steps`` stride-2 3x3 convolutions, doubling channels each step,
- ``resnet_blocks`` residual blocks at the bottleneck width,
- per level: nearest-neighbor x2 upsample, a 3x3 convolution halving channels,
  concatenation with the matching encoder activation, and a 3x3 merge
  convolution,
- a final 3x3 convolution to ``output_channels`` with a sigmoid, so outputs
  stay in [0, 1].

Every convolution uses reflection padding.  Normalization is BatchNorm2d;
in eval mode it reduces to a fixed per-channel affine map, which keeps the
network translation-structured so patch-trained weights transfer to whole
frames (see ``receptive_radius`` for the locality contract).

The discriminator is a 3-stage strided patch classifier emitting a spatial
score map, used with a least-squares adversarial objective.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .errors import ChannelMismatchError, ConfigError, DimensionMismatchError, ResourceError


@dataclass(frozen=True)
class NetConfig:
    """Generator hyper-parameters."""

    resnet_blocks: int
    base_filters: int = 32
    downsample_steps: int = 2
    input_channels: int = 3
    output_channels: int = 3

    def __post_init__(self):
        if self.resnet_blocks < 1:
            raise ConfigError(f"resnet_blocks must be >= 1, got {self.resnet_blocks}")
        if self.base_filters < 1:
            raise ConfigError(f"base_filters must be >= 1, got {self.base_filters}")
        if self.downsample_steps < 1:
            raise ConfigError(f"downsample_steps must be >= 1, got {self.downsample_steps}")
        if self.input_channels not in (3, 6):
            raise ConfigError(f"input_channels must be 3 or 6, got {self.input_channels}")
        if self.output_channels < 1:
            raise ConfigError(f"output_channels must be >= 1, got {self.output_channels}")

    @property
    def divisor(self) -> int:
        return 2**self.downsample_steps

    def to_json_dict(self) -> dict:
        return {
            "resnet_blocks": self.resnet_blocks,
            "base_filters": self.base_filters,
            "downsample_steps": self.downsample_steps,
            "input_channels": self.input_channels,
            "output_channels": self.output_channels,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "NetConfig":
        return cls(**data)


def _conv(in_ch: int, out_ch: int, stride: int = 1, dropout: tuple[str, float] | None = None):
    layers: list[nn.Module] = []
    if dropout is not None:
        kind, p = dropout
        layers.append(nn.Dropout2d(p) if kind == "map" else nn.Dropout(p))
    layers += [nn.ReflectionPad2d(1), nn.Conv2d(in_ch, out_ch, 3, stride=stride)]
    return layers


def _conv_block(in_ch, out_ch, stride=1, dropout=None):
    return nn.Sequential(
        *_conv(in_ch, out_ch, stride, dropout), nn.BatchNorm2d(out_ch), nn.ReLU(inplace=True)
    )


class ResidualBlock(nn.Module):
    def __init__(self, channels: int, dropout=None):
        super().__init__()
        self.body = nn.Sequential(
            *_conv(channels, channels, dropout=dropout),
            nn.BatchNorm2d(channels),
            nn.ReLU(inplace=True),
            *_conv(channels, channels, dropout=dropout),
            nn.BatchNorm2d(channels),
        )

    def forward(self, x):
        return torch.relu(x + self.body(x))


class Generator(nn.Module):
    """Appearance translation network; see the module docstring for topology."""

    def __init__(self, config: NetConfig, dropout: tuple[str, float] | None = None):
        super().__init__()
        self.config = config
        base = config.base_filters
        widths = [base * 2**i for i in range(config.downsample_steps + 1)]

        self.stem = _conv_block(config.input_channels, widths[0], dropout=dropout)
        self.downs = nn.ModuleList(
            _conv_block(widths[i], widths[i + 1], stride=2, dropout=dropout)
            for i in range(config.downsample_steps)
        )
        self.blocks = nn.Sequential(
            *(ResidualBlock(widths[-1], dropout=dropout) for _ in range(config.resnet_blocks))
        )
        self.up_convs = nn.ModuleList(
            _conv_block(widths[i + 1], widths[i], dropout=dropout)
            for i in reversed(range(config.downsample_steps))
        )
        self.merge_convs = nn.ModuleList(
            _conv_block(2 * widths[i], widths[i], dropout=dropout)
            for i in reversed(range(config.downsample_steps))
        )
        self.out = nn.Sequential(*_conv(widths[0], config.output_channels, dropout=dropout))

    def forward(self, x):
        self._check_input(x)
        skips = [self.stem(x)]
        for down in self.downs:
            skips.append(down(skips[-1]))
        h = self.blocks(skips[-1])
        for up, merge, skip in zip(self.up_convs, self.merge_convs, reversed(skips[:-1])):
            h = up(nn.functional.interpolate(h, scale_factor=2, mode="nearest"))
            h = merge(torch.cat([h, skip], dim=1))
        return torch.sigmoid(self.out(h))

    def _check_input(self, x):
        if x.shape[1] != self.config.input_channels:
            raise ChannelMismatchError(
                f"expected {self.config.input_channels} input channels, got {x.shape[1]}"
            )
        d = self.config.divisor
        if x.shape[2] % d or x.shape[3] % d:
            raise DimensionMismatchError(
                f"input {tuple(x.shape[2:])} not divisible by {d}; pad first"
            )


class Discriminator(nn.Module):
    """Strided patch discriminator over concatenated (input, image) pairs."""

    def __init__(self, input_channels: int, base_filters: int = 32):
        super().__init__()
        if input_channels < 1:
            raise ConfigError("discriminator input_channels must be >= 1")
        b = base_filters
        self.body = nn.Sequential(
            *_conv(input_channels, b, stride=2),
            nn.LeakyReLU(0.2, inplace=True),
            *_conv(b, 2 * b, stride=2),
            nn.BatchNorm2d(2 * b),
            nn.LeakyReLU(0.2, inplace=True),
            *_conv(2 * b, 4 * b, stride=2),
            nn.BatchNorm2d(4 * b),
            nn.LeakyReLU(0.2, inplace=True),
            *_conv(4 * b, 1),
        )

    def forward(self, x):
        return self.body(x)


def _seeded(builder, seed: int):
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        module = builder()
    return module


def build_generator(
    config: NetConfig, seed: int = 0, dropout: tuple[str, float] | None = None
) -> Generator:
    """Builds a generator with deterministic weight init for the given seed."""
    return _seeded(lambda: Generator(config, dropout=dropout), seed)


def build_discriminator(input_channels: int, seed: int = 0, base_filters: int = 32) -> Discriminator:
    return _seeded(lambda: Discriminator(input_channels, base_filters), seed)


def path_radius(ops: list[tuple]) -> int:
    """Chebyshev dependency radius of a 1D layer path, exactly.

    ``ops`` lists layers input-to-output: ("conv", kernel, stride) or
    ("up", factor).  The dependency interval is propagated backward from
    each output parity class with integer floor arithmetic, which captures
    the one-sided asymmetry of nearest-neighbor upsampling.
    """
    period = 1
    for op in ops:
        if op[0] == "conv":
            period *= op[2]
    radius = 0
    for origin in range(max(period, 1) * 2):
        lo = hi = origin
        for op in reversed(ops):
            if op[0] == "conv":
                _, kernel, stride = op
                half = (kernel - 1) // 2
                lo = stride * lo - half
                hi = stride * hi + half
            elif op[0] == "up":
                lo = lo // op[1]
                hi = hi // op[1]
            else:
                raise ConfigError(f"unknown op {op[0]!r}")
        radius = max(radius, origin - lo, hi - origin)
    return radius


def generator_ops(config: NetConfig) -> list[tuple]:
    """The longest input-to-output layer path of the generator."""
    ops: list[tuple] = [("conv", 3, 1)]  # stem
    ops += [("conv", 3, 2)] * config.downsample_steps
    ops += [("conv", 3, 1)] * (2 * config.resnet_blocks)
    for _ in range(config.downsample_steps):
        ops += [("up", 2), ("conv", 3, 1), ("conv", 3, 1)]  # upsample, up conv, merge conv
    ops.append(("conv", 3, 1))  # output conv
    return ops


def receptive_radius(config: NetConfig) -> int:
    """Chebyshev radius of input pixels influencing one output pixel."""
    return path_radius(generator_ops(config))


def pad_to_divisible(pixels: np.ndarray, divisor: int) -> tuple[np.ndarray, tuple[int, int]]:
    """Reflect-pads (H, W, C) pixels on the bottom/right to multiples of divisor."""
    h, w = pixels.shape[:2]
    pad_h = (-h) % divisor
    pad_w = (-w) % divisor
    if pad_h or pad_w:
        if pad_h >= h or pad_w >= w:
            raise DimensionMismatchError(f"frame {h}x{w} too small to pad to multiple of {divisor}")
        pixels = np.pad(pixels, ((0, pad_h), (0, pad_w), (0, 0)), mode="reflect")
    return pixels, (h, w)


@contextlib.contextmanager
def _resource_guard():
    try:
        yield
    except (torch.cuda.OutOfMemoryError, MemoryError) as exc:
        raise ResourceError(f"out of memory during inference: {exc}") from exc
    except RuntimeError as exc:
        if "out of memory" in str(exc).lower():
            raise ResourceError(f"out of memory during inference: {exc}") from exc
        raise


def _forward_eval(generator: Generator, pixels: np.ndarray) -> np.ndarray:
    with torch.no_grad(), _resource_guard():
        x = torch.from_numpy(np.ascontiguousarray(pixels.transpose(2, 0, 1)))[None]
        device = next(generator.parameters()).device
        out = generator(x.to(device))
    return out[0].cpu().numpy().transpose(1, 2, 0)


def forward_image(generator: Generator, pixels: np.ndarray) -> np.ndarray:
    """Runs eval-mode inference on one (H, W, C) image; H, W must be divisible.

    A generator already in eval mode is never mutated, so concurrent callers
    may share it.  A training-mode generator is flipped to eval and restored
    afterwards; that flip is only safe while no other thread is forwarding
    through the same module.
    """
    if not generator.training:
        return _forward_eval(generator, pixels)
    generator.eval()
    try:
        return _forward_eval(generator, pixels)
    finally:
        generator.train()


def forward_padded(generator: Generator, pixels: np.ndarray) -> np.ndarray:
    """Like forward_image, but reflect-pads to divisible sizes and crops back."""
    padded, (h, w) = pad_to_divisible(pixels, generator.config.divisor)
    return forward_image(generator, padded)[:h, :w]
